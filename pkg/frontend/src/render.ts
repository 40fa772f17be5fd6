/** DOM rendering: state in, document fragments out.

Everything is rebuilt per render from the current state; the page is small
enough that diffing would buy nothing. Text goes through textContent, never
markup strings.
*/

import type { BatchItem, MetricsRecord } from "./api.js";
import {
  ConsoleState,
  pendingIndices,
  submitEnabled,
} from "./state.js";

/** Fixed 10-class palette; keybindings are the digits 0-9. */
export const PALETTE = [
  "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

export interface Handlers {
  onCreate: (configText: string) => void;
  onSubmit: () => void;
  onFocusCard: (position: number) => void;
  onAssignCard: (position: number, cls: number) => void;
}

const SVG_NS = "http://www.w3.org/2000/svg";

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function svgEl(doc: Document, tag: string, attrs: Record<string, string>): Element {
  const node = doc.createElementNS(SVG_NS, tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  return node;
}

function labelOf(state: ConsoleState, index: number): number | undefined {
  return state.assigned.get(index) ?? state.received.get(index);
}

// ------------------------------------------------------------------ plots

function extent(values: number[]): [number, number] {
  let lo = Infinity;
  let hi = -Infinity;
  for (const v of values) {
    if (v < lo) lo = v;
    if (v > hi) hi = v;
  }
  if (!(hi > lo)) return [lo - 1, hi + 1];
  return [lo, hi];
}

function scale(v: number, domain: [number, number], range: [number, number]): number {
  const t = (v - domain[0]) / (domain[1] - domain[0]);
  return range[0] + t * (range[1] - range[0]);
}

/** Scatter (d=2) or strip (d=1) of the queried batch: labeled points take
 * their class color, the rest stay highlighted as open rings. */
function renderPointPlot(doc: Document, state: ConsoleState): Element {
  const d = state.items[0]!.features.length;
  const height = d === 1 ? 140 : 360;
  const svg = svgEl(doc, "svg", {
    class: d === 1 ? "plot-svg strip" : "plot-svg scatter",
    viewBox: `0 0 600 ${height}`,
    width: "600",
    height: String(height),
  });
  const xs = state.items.map((it) => it.features[0]!);
  const xDomain = extent(xs);
  const yDomain: [number, number] =
    d === 2 ? extent(state.items.map((it) => it.features[1]!)) : [0, 1];
  state.items.forEach((item, position) => {
    const x = scale(item.features[0]!, xDomain, [20, 580]);
    const y =
      d === 2
        ? scale(item.features[1]!, yDomain, [height - 20, 20])
        : 30 + (position % 8) * ((height - 60) / 7);
    const cls = labelOf(state, item.index);
    const attrs: Record<string, string> = {
      class: cls === undefined ? "point queried" : "point labeled",
      cx: String(x),
      cy: String(y),
      r: position === state.focus ? "8" : "6",
      stroke: cls === undefined ? "#f59e0b" : "#333",
      "stroke-width": position === state.focus ? "3" : "1.5",
      fill: cls === undefined ? "none" : PALETTE[cls % PALETTE.length]!,
    };
    svg.appendChild(svgEl(doc, "circle", attrs));
  });
  return svg;
}

/** 8x8 grayscale grid for 64-wide feature rows. */
function renderFeatureGrid(doc: Document, features: number[], max: number): Element {
  const svg = svgEl(doc, "svg", {
    class: "feature-grid",
    viewBox: "0 0 8 8",
    width: "64",
    height: "64",
  });
  features.forEach((v, i) => {
    const lightness = 95 - 75 * (v / max);
    svg.appendChild(
      svgEl(doc, "rect", {
        x: String(i % 8),
        y: String(Math.floor(i / 8)),
        width: "1",
        height: "1",
        fill: `hsl(0, 0%, ${lightness.toFixed(1)}%)`,
      }),
    );
  });
  return svg;
}

/** Raw-feature table for dimensions without a picture. */
function renderFallbackTable(doc: Document, items: BatchItem[]): Element {
  const table = el(doc, "table", "fallback-table");
  const thead = doc.createElement("thead");
  const head = doc.createElement("tr");
  head.appendChild(el(doc, "th", undefined, "index"));
  items[0]!.features.forEach((_, j) => head.appendChild(el(doc, "th", undefined, `f${j}`)));
  thead.appendChild(head);
  table.appendChild(thead);
  const tbody = doc.createElement("tbody");
  for (const item of items) {
    const row = doc.createElement("tr");
    row.appendChild(el(doc, "td", undefined, String(item.index)));
    for (const v of item.features) {
      row.appendChild(el(doc, "td", undefined, v.toPrecision(4)));
    }
    tbody.appendChild(row);
  }
  table.appendChild(tbody);
  return table;
}

// ------------------------------------------------------------------ cards

function renderBar(doc: Document, kind: string, value: number, fraction: number): Element {
  const wrap = el(doc, "div", `bar bar-${kind}`);
  const fill = el(doc, "div", "fill");
  fill.style.width = `${Math.max(0, Math.min(1, fraction)) * 100}%`;
  wrap.appendChild(fill);
  wrap.appendChild(el(doc, "span", "bar-value", `${kind} ${value.toFixed(3)}`));
  return wrap;
}

function renderCard(
  doc: Document,
  state: ConsoleState,
  item: BatchItem,
  position: number,
  maxUncertainty: number,
  maxFeature: number,
  handlers: Handlers,
): Element {
  const cls = labelOf(state, item.index);
  const card = el(doc, "div", "card");
  if (position === state.focus) card.classList.add("focused");
  if (cls !== undefined) card.classList.add("labeled");
  card.tabIndex = 0;
  card.addEventListener("click", () => handlers.onFocusCard(position));

  const head = el(doc, "div", "card-head", `#${item.index}`);
  if (cls !== undefined) {
    const chip = el(doc, "span", "class-chip", String(cls));
    chip.style.backgroundColor = PALETTE[cls % PALETTE.length]!;
    if (!state.assigned.has(item.index)) chip.classList.add("from-server");
    head.appendChild(chip);
  }
  card.appendChild(head);

  if (item.features.length === 64) {
    card.appendChild(renderFeatureGrid(doc, item.features, maxFeature));
  }
  if (item.uncertainty !== undefined) {
    card.appendChild(
      renderBar(doc, "uncertainty", item.uncertainty, item.uncertainty / maxUncertainty),
    );
  }
  if (item.diversity !== undefined) {
    card.appendChild(renderBar(doc, "diversity", item.diversity, item.diversity));
  }

  const buttons = el(doc, "div", "class-buttons");
  for (let c = 0; c < state.nClasses && c < 10; c++) {
    const btn = el(doc, "button", "class-button", String(c));
    btn.style.borderColor = PALETTE[c % PALETTE.length]!;
    btn.addEventListener("click", (ev) => {
      ev.stopPropagation();
      handlers.onAssignCard(position, c);
    });
    buttons.appendChild(btn);
  }
  card.appendChild(buttons);

  const error = state.itemErrors.get(item.index);
  if (error !== undefined) card.appendChild(el(doc, "div", "item-error", error));
  return card;
}

// ------------------------------------------------------------------ chart

/** Accuracy vs labeled count, one point per completed round. */
export function renderHistoryChart(doc: Document, history: MetricsRecord[]): Element {
  const svg = svgEl(doc, "svg", {
    class: "progress-chart",
    viewBox: "0 0 600 220",
    width: "600",
    height: "220",
  });
  if (history.length === 0) return svg;
  const xDomain = extent(history.map((r) => r.labeled_count));
  const pts = history.map((r) => {
    const x = scale(r.labeled_count, xDomain, [45, 580]);
    const y = scale(r.test_accuracy, [0, 1], [195, 15]);
    return [x, y] as const;
  });
  svg.appendChild(
    svgEl(doc, "polyline", {
      class: "history-line",
      points: pts.map(([x, y]) => `${x.toFixed(1)},${y.toFixed(1)}`).join(" "),
      fill: "none",
      stroke: "#1f77b4",
      "stroke-width": "2",
    }),
  );
  history.forEach((r, i) => {
    const [x, y] = pts[i]!;
    const dot = svgEl(doc, "circle", {
      class: "history-point",
      cx: x.toFixed(1),
      cy: y.toFixed(1),
      r: "4",
      fill: "#1f77b4",
    });
    const title = doc.createElementNS(SVG_NS, "title");
    title.textContent = `round ${r.round}: accuracy ${r.test_accuracy.toFixed(4)} at ${r.labeled_count} labels`;
    dot.appendChild(title);
    svg.appendChild(dot);
  });
  const axis = (text: string, x: number, y: number) => {
    const t = svgEl(doc, "text", {
      x: String(x), y: String(y), "font-size": "11", fill: "#666",
    });
    t.textContent = text;
    svg.appendChild(t);
  };
  axis("1.0", 12, 20);
  axis("0.0", 12, 200);
  axis(`${xDomain[0]} labels`, 45, 214);
  axis(`${xDomain[1]} labels`, 520, 214);
  return svg;
}

// ------------------------------------------------------------------ page

export function renderApp(root: HTMLElement, state: ConsoleState, handlers: Handlers): void {
  const doc = root.ownerDocument;
  root.textContent = "";

  const header = el(doc, "header");
  header.appendChild(el(doc, "h1", undefined, "labeling console"));
  const phase = el(doc, "span", "phase", state.phase.toLowerCase().replace("_", " "));
  header.appendChild(phase);
  if (state.sessionId !== null) {
    header.appendChild(el(doc, "span", "session-id", `session ${state.sessionId}`));
  }
  root.appendChild(header);

  if (state.banner !== null) {
    root.appendChild(el(doc, "div", "banner", state.banner));
  }

  if (state.phase === "IDLE") {
    const form = el(doc, "div", "create-form");
    const config = el(doc, "textarea", "config-input");
    config.placeholder = "optional experiment config JSON (empty = server default)";
    config.rows = 6;
    form.appendChild(config);
    const button = el(doc, "button", "create", "start session");
    button.addEventListener("click", () => handlers.onCreate(config.value));
    form.appendChild(button);
    root.appendChild(form);
  }

  if (state.phase === "TRAINING") {
    const box = el(doc, "div", "training");
    box.appendChild(el(doc, "div", "spinner"));
    box.appendChild(
      el(doc, "div", "training-note",
         `training, round ${state.round} of ${state.rounds}`),
    );
    const bar = el(doc, "div", "bar bar-progress");
    const fill = el(doc, "div", "fill");
    fill.style.width = `${Math.max(0, Math.min(1, state.progress)) * 100}%`;
    bar.appendChild(fill);
    box.appendChild(bar);
    root.appendChild(box);
  }

  if (state.phase === "AWAITING_LABELS" && state.items.length > 0) {
    const d = state.items[0]!.features.length;
    root.appendChild(
      el(doc, "div", "round-note",
         `round ${state.round} of ${state.rounds}: label the queried batch`),
    );
    const plot = el(doc, "div", "plot");
    if (d === 1 || d === 2) {
      plot.appendChild(renderPointPlot(doc, state));
    } else if (d !== 64) {
      plot.appendChild(renderFallbackTable(doc, state.items));
    }
    root.appendChild(plot);

    const maxUncertainty = Math.max(
      1e-12, ...state.items.map((it) => it.uncertainty ?? 0),
    );
    const maxFeature = Math.max(1e-12, ...state.items.flatMap((it) => it.features));
    const cards = el(doc, "div", "cards");
    state.items.forEach((item, position) => {
      cards.appendChild(
        renderCard(doc, state, item, position, maxUncertainty, maxFeature, handlers),
      );
    });
    root.appendChild(cards);

    const pending = pendingIndices(state);
    const unlabeled = pending.filter((i) => !state.assigned.has(i)).length;
    const submit = el(doc, "button", "submit", "submit labels");
    submit.disabled = !submitEnabled(state);
    submit.addEventListener("click", () => handlers.onSubmit());
    root.appendChild(submit);
    root.appendChild(
      el(doc, "div", "submit-hint",
         unlabeled > 0
           ? `${unlabeled} item${unlabeled === 1 ? "" : "s"} left; digits 0-9 label the focused card`
           : "all items labeled"),
    );
  }

  if (state.phase === "DONE") {
    root.appendChild(
      el(doc, "div", "done-note",
         `experiment finished: ${state.roundsCompleted} rounds completed`),
    );
    if (state.serverError !== null) {
      root.appendChild(el(doc, "div", "server-error", state.serverError));
    }
  }

  if (state.history.length > 0) {
    const section = el(doc, "div", "history");
    section.appendChild(el(doc, "h2", undefined, "accuracy by labels acquired"));
    section.appendChild(renderHistoryChart(doc, state.history));
    root.appendChild(section);
  }
}
