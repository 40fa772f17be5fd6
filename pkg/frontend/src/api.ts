/** Typed client for the four labeling-server endpoints. */

export interface BatchItem {
  index: number;
  features: number[];
  uncertainty?: number;
  diversity?: number;
  combined?: number;
}

export interface AwaitingPayload {
  phase: "AWAITING_LABELS";
  round: number;
  rounds: number;
  n_classes: number;
  items: BatchItem[];
  /** labels the server has already accepted this round, keyed by pool index */
  received: Record<string, number>;
}

export interface TrainingPayload {
  phase: "TRAINING";
  round: number;
  rounds: number;
  progress: number;
}

export interface DonePayload {
  phase: "DONE";
  rounds_completed: number;
  error?: string;
}

export type BatchPayload = AwaitingPayload | TrainingPayload | DonePayload;

export interface MetricsRecord {
  round: number;
  labeled_count: number;
  test_accuracy: number;
  query_indices: number[];
  uncertainty: number[];
  diversity: number[];
}

export interface SessionInfo {
  session_id: string;
  rounds: number;
  budget: number;
}

export interface SubmitResult {
  accepted: boolean;
  complete: boolean;
  received: number | null;
}

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: { error?: string; session_id?: string },
  ) {
    super(body.error ?? `request failed with status ${status}`);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class Api {
  constructor(
    private base: string,
    private fetchFn: FetchLike = (...args) => globalThis.fetch(...args),
  ) {}

  private async call<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method };
    if (body !== undefined) {
      init.body = JSON.stringify(body);
      init.headers = { "Content-Type": "application/json" };
    }
    const resp = await this.fetchFn(this.base + path, init);
    let parsed: unknown = null;
    try {
      parsed = await resp.json();
    } catch {
      parsed = {};
    }
    if (!resp.ok) {
      throw new ApiError(resp.status, (parsed ?? {}) as ApiError["body"]);
    }
    return parsed as T;
  }

  createSession(config?: object): Promise<SessionInfo> {
    return this.call("POST", "/session", config ?? {});
  }

  getBatch(sessionId: string): Promise<BatchPayload> {
    return this.call("GET", `/session/${sessionId}/batch`);
  }

  getMetrics(sessionId: string): Promise<MetricsRecord[]> {
    return this.call("GET", `/session/${sessionId}/metrics`);
  }

  postLabels(sessionId: string, labels: Record<number, number>): Promise<SubmitResult> {
    return this.call("POST", `/session/${sessionId}/labels`, { labels });
  }
}
