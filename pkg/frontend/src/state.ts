/** Console state and its pure transitions.

The invariants the reducers protect: submit is enabled only when every
pending item carries a label the user assigned in this tab, and the label
map sent to the server contains exactly those assignments. Labels the
server already holds (after a refresh, or posted by another client) count
toward completeness but are never re-sent on the user's behalf.
*/

import type { BatchItem, BatchPayload, MetricsRecord } from "./api.js";

export type Phase = "IDLE" | "TRAINING" | "AWAITING_LABELS" | "DONE";

export interface ConsoleState {
  sessionId: string | null;
  phase: Phase;
  round: number;
  rounds: number;
  nClasses: number;
  items: BatchItem[];
  /** classes the user assigned in this tab, by pool index */
  assigned: Map<number, number>;
  /** labels the server has accepted this round, by pool index */
  received: Map<number, number>;
  /** position of the focused card within items */
  focus: number;
  progress: number;
  roundsCompleted: number;
  history: MetricsRecord[];
  banner: string | null;
  itemErrors: Map<number, string>;
  serverError: string | null;
}

export function initialState(): ConsoleState {
  return {
    sessionId: null,
    phase: "IDLE",
    round: 0,
    rounds: 0,
    nClasses: 0,
    items: [],
    assigned: new Map(),
    received: new Map(),
    focus: 0,
    progress: 0,
    roundsCompleted: 0,
    history: [],
    banner: null,
    itemErrors: new Map(),
    serverError: null,
  };
}

function malformed(state: ConsoleState, why: string): ConsoleState {
  return { ...state, banner: `malformed server payload: ${why}` };
}

function validItems(items: unknown): items is BatchItem[] {
  return (
    Array.isArray(items) &&
    items.every(
      (it) =>
        typeof it === "object" &&
        it !== null &&
        typeof (it as BatchItem).index === "number" &&
        Array.isArray((it as BatchItem).features),
    )
  );
}

/** Fold a GET /batch payload into the state; malformed input sets the
 * banner and leaves everything else untouched. */
export function applyBatch(state: ConsoleState, payload: unknown): ConsoleState {
  if (typeof payload !== "object" || payload === null) {
    return malformed(state, "not an object");
  }
  const p = payload as Partial<BatchPayload> & Record<string, unknown>;
  if (p.phase === "TRAINING") {
    const progress = typeof p.progress === "number" ? p.progress : 0;
    return {
      ...state,
      phase: "TRAINING",
      round: typeof p.round === "number" ? p.round : state.round,
      rounds: typeof p.rounds === "number" ? p.rounds : state.rounds,
      progress,
      items: [],
      assigned: new Map(),
      received: new Map(),
      itemErrors: new Map(),
      focus: 0,
      banner: null,
    };
  }
  if (p.phase === "DONE") {
    return {
      ...state,
      phase: "DONE",
      items: [],
      assigned: new Map(),
      received: new Map(),
      itemErrors: new Map(),
      roundsCompleted:
        typeof p.rounds_completed === "number" ? p.rounds_completed : state.roundsCompleted,
      serverError: typeof p.error === "string" ? p.error : null,
      banner: null,
    };
  }
  if (p.phase === "AWAITING_LABELS") {
    if (!validItems(p.items)) {
      return malformed(state, "items is not a list of indexed feature rows");
    }
    const round = typeof p.round === "number" ? p.round : 0;
    const received = new Map<number, number>();
    if (typeof p.received === "object" && p.received !== null) {
      for (const [k, v] of Object.entries(p.received as Record<string, number>)) {
        received.set(Number(k), v);
      }
    }
    const sameBatch =
      state.phase === "AWAITING_LABELS" &&
      state.round === round &&
      state.items.length === p.items.length &&
      state.items.every((it, i) => it.index === p.items![i]!.index);
    return {
      ...state,
      phase: "AWAITING_LABELS",
      round,
      rounds: typeof p.rounds === "number" ? p.rounds : state.rounds,
      nClasses: typeof p.n_classes === "number" ? p.n_classes : state.nClasses,
      items: p.items,
      received,
      assigned: sameBatch ? state.assigned : new Map(),
      itemErrors: sameBatch ? state.itemErrors : new Map(),
      focus: sameBatch ? state.focus : 0,
      banner: null,
    };
  }
  return malformed(state, `unknown phase ${JSON.stringify(p.phase)}`);
}

/** Items the server still needs a label for. */
export function pendingIndices(state: ConsoleState): number[] {
  return state.items.map((it) => it.index).filter((i) => !state.received.has(i));
}

export function submitEnabled(state: ConsoleState): boolean {
  if (state.phase !== "AWAITING_LABELS") return false;
  const pending = pendingIndices(state);
  return pending.length > 0 && pending.every((i) => state.assigned.has(i));
}

/** Exactly the user's assignments; never echoes server-held labels. */
export function labelMapForPost(state: ConsoleState): Record<number, number> {
  const out: Record<number, number> = {};
  for (const [index, cls] of state.assigned) out[index] = cls;
  return out;
}

/** Label the focused card and advance focus to the next unlabeled item. */
export function assignLabel(state: ConsoleState, cls: number): ConsoleState {
  if (state.phase !== "AWAITING_LABELS" || state.items.length === 0) return state;
  if (!Number.isInteger(cls) || cls < 0 || cls >= state.nClasses) return state;
  const item = state.items[state.focus];
  if (item === undefined) return state;
  const assigned = new Map(state.assigned);
  assigned.set(item.index, cls);
  const itemErrors = new Map(state.itemErrors);
  itemErrors.delete(item.index);
  let focus = state.focus;
  for (let step = 1; step <= state.items.length; step++) {
    const pos = (state.focus + step) % state.items.length;
    const candidate = state.items[pos]!;
    if (!assigned.has(candidate.index) && !state.received.has(candidate.index)) {
      focus = pos;
      break;
    }
  }
  return { ...state, assigned, itemErrors, focus };
}

export function moveFocus(state: ConsoleState, delta: number): ConsoleState {
  if (state.items.length === 0) return state;
  const n = state.items.length;
  return { ...state, focus: ((state.focus + delta) % n + n) % n };
}

export function applyMetrics(state: ConsoleState, records: MetricsRecord[]): ConsoleState {
  return { ...state, history: records };
}

/** Attach a submit failure to the item its message names, else the banner. */
export function applySubmitError(state: ConsoleState, message: string): ConsoleState {
  const match = message.match(/index (\d+)/);
  if (match !== null) {
    const idx = Number(match[1]);
    if (state.items.some((it) => it.index === idx)) {
      const itemErrors = new Map(state.itemErrors);
      itemErrors.set(idx, message);
      return { ...state, itemErrors };
    }
  }
  return { ...state, banner: message };
}

export function applyFetchFailure(state: ConsoleState): ConsoleState {
  return { ...state, banner: "connection lost, retrying" };
}

/** Poll delay after `attempt` consecutive failures: 1s doubling to a 10s cap. */
export function backoffDelay(attempt: number, baseMs = 1000, capMs = 10000): number {
  return Math.min(baseMs * 2 ** attempt, capMs);
}
