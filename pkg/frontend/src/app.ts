/** Wiring: one poll loop, keyboard labeling, submit flow.

Concurrency rule: at most one in-flight request per endpoint. The poll chain
reschedules itself; a tick that finds its endpoint busy just waits another
interval. Fetch failures back off exponentially (1s to 10s) and never drop
local label assignments.
*/

import { Api, ApiError } from "./api.js";
import {
  ConsoleState,
  applyBatch,
  applyFetchFailure,
  applyMetrics,
  applySubmitError,
  assignLabel,
  backoffDelay,
  initialState,
  labelMapForPost,
  moveFocus,
  submitEnabled,
} from "./state.js";
import { Handlers, renderApp } from "./render.js";

export interface ConsoleOptions {
  base: string;
  root: HTMLElement;
  pollMs?: number;
  capMs?: number;
  fetchFn?: (input: string, init?: RequestInit) => Promise<Response>;
}

export class AnnotationConsole {
  state: ConsoleState = initialState();
  readonly api: Api;
  private root: HTMLElement;
  private pollMs: number;
  private capMs: number;
  private failures = 0;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inflight = { session: false, batch: false, metrics: false, labels: false };
  private handlers: Handlers;
  private keyListener: (ev: KeyboardEvent) => void;

  constructor(options: ConsoleOptions) {
    this.api = new Api(options.base, options.fetchFn);
    this.root = options.root;
    this.pollMs = options.pollMs ?? 1000;
    this.capMs = options.capMs ?? 10000;
    this.handlers = {
      onCreate: (configText) => void this.createSession(configText),
      onSubmit: () => void this.submit(),
      onFocusCard: (position) => {
        this.state = { ...this.state, focus: position };
        this.render();
      },
      onAssignCard: (position, cls) => {
        this.state = assignLabel({ ...this.state, focus: position }, cls);
        this.render();
      },
    };
    this.keyListener = (ev) => this.handleKey(ev);
  }

  start(): void {
    this.root.ownerDocument.addEventListener("keydown", this.keyListener);
    this.render();
  }

  stop(): void {
    this.root.ownerDocument.removeEventListener("keydown", this.keyListener);
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = null;
  }

  render(): void {
    renderApp(this.root, this.state, this.handlers);
  }

  async createSession(configText = ""): Promise<void> {
    if (this.inflight.session) return;
    let config: object | undefined;
    if (configText.trim() !== "") {
      try {
        config = JSON.parse(configText) as object;
      } catch {
        this.state = { ...this.state, banner: "config is not valid JSON" };
        this.render();
        return;
      }
    }
    this.inflight.session = true;
    try {
      const info = await this.api.createSession(config);
      this.state = {
        ...this.state,
        sessionId: info.session_id,
        rounds: info.rounds,
        phase: "TRAINING",
        banner: null,
      };
    } catch (err) {
      if (err instanceof ApiError && err.status === 409 && err.body.session_id) {
        // a session is already live; adopt it, the GETs restore the rest
        this.state = { ...this.state, sessionId: err.body.session_id, banner: null };
      } else {
        this.state = {
          ...this.state,
          banner: err instanceof Error ? err.message : "session creation failed",
        };
        this.render();
        this.inflight.session = false;
        return;
      }
    } finally {
      this.inflight.session = false;
    }
    this.render();
    this.schedule(0);
  }

  private schedule(delay: number): void {
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => void this.pollOnce(), delay);
  }

  async pollOnce(): Promise<void> {
    if (this.state.sessionId === null) return;
    if (this.inflight.batch) {
      this.schedule(this.pollMs);
      return;
    }
    this.inflight.batch = true;
    try {
      const payload = await this.api.getBatch(this.state.sessionId);
      this.failures = 0;
      const before = this.state;
      this.state = applyBatch(this.state, payload);
      const roundTurned =
        this.state.round !== before.round || this.state.phase !== before.phase;
      // at DONE, keep nudging until the chart covers every completed round;
      // a refresh skipped (in flight) or failed at the transition would
      // otherwise never be retried once polling stops
      const chartLags =
        this.state.phase === "DONE" &&
        this.state.history.length < this.state.roundsCompleted;
      if (roundTurned || chartLags) void this.refreshMetrics();
      this.render();
      if (this.state.phase !== "DONE" || chartLags) this.schedule(this.pollMs);
    } catch {
      this.failures += 1;
      this.state = applyFetchFailure(this.state);
      this.render();
      this.schedule(backoffDelay(this.failures - 1, this.pollMs, this.capMs));
    } finally {
      this.inflight.batch = false;
    }
  }

  async refreshMetrics(): Promise<void> {
    if (this.state.sessionId === null || this.inflight.metrics) return;
    this.inflight.metrics = true;
    try {
      const records = await this.api.getMetrics(this.state.sessionId);
      this.state = applyMetrics(this.state, records);
      this.render();
    } catch {
      // next round transition retries; metrics are display-only
    } finally {
      this.inflight.metrics = false;
    }
  }

  async submit(): Promise<void> {
    if (!submitEnabled(this.state) || this.inflight.labels) return;
    if (this.state.sessionId === null) return;
    this.inflight.labels = true;
    try {
      const result = await this.api.postLabels(
        this.state.sessionId, labelMapForPost(this.state),
      );
      if (result.complete) {
        // round done; show the spinner now instead of waiting for the poll
        this.state = applyBatch(this.state, {
          phase: "TRAINING",
          round: this.state.round,
          rounds: this.state.rounds,
          progress: this.state.round / Math.max(1, this.state.rounds),
        });
        this.schedule(0);
      }
    } catch (err) {
      if (err instanceof ApiError) {
        this.state = applySubmitError(this.state, err.message);
      } else {
        this.state = applyFetchFailure(this.state);
      }
    } finally {
      this.inflight.labels = false;
    }
    this.render();
  }

  handleKey(ev: KeyboardEvent): void {
    if (this.state.phase !== "AWAITING_LABELS") return;
    const target = ev.target as HTMLElement | null;
    if (target !== null && (target.tagName === "TEXTAREA" || target.tagName === "INPUT")) {
      return;
    }
    if (ev.key >= "0" && ev.key <= "9") {
      this.state = assignLabel(this.state, Number(ev.key));
      this.render();
    } else if (ev.key === "ArrowRight" || ev.key === "ArrowDown") {
      this.state = moveFocus(this.state, 1);
      this.render();
    } else if (ev.key === "ArrowLeft" || ev.key === "ArrowUp") {
      this.state = moveFocus(this.state, -1);
      this.render();
    } else if (ev.key === "Enter") {
      void this.submit();
    }
  }
}

/** Browser entry point: mounts on #app against same-origin or ?api=... */
export function mount(doc: Document): AnnotationConsole | null {
  const root = doc.getElementById("app");
  if (root === null) return null;
  const params = new URLSearchParams(doc.location?.search ?? "");
  const base = params.get("api") ?? "http://127.0.0.1:8765";
  const console_ = new AnnotationConsole({ base, root });
  console_.start();
  return console_;
}

declare global {
  interface Window { __consoleAutoMount?: boolean }
}

if (typeof window !== "undefined" && window.__consoleAutoMount !== false) {
  if (typeof document !== "undefined" && document.getElementById("app") !== null) {
    mount(document);
  }
}
