/** Typed client for the verification service JSON API.
 *
 * Every payload is passed through verbatim: the UI never recomputes a
 * number the server already evaluated, so values and probabilities are
 * kept exactly as received.
 */

export interface Option {
  value: string;
  probability: number;
  display_probability: number;
}

export interface Candidate {
  sql: string;
  value: number | boolean | null;
  matched: boolean;
  formula: string;
  rank: number;
  error: string | null;
}

export interface Screen {
  screen_id: string;
  claim_id: string;
  index: number;
  kind: string;
  multi: boolean;
  sentence_text: string;
  claim_span: [number, number];
  section_id: string;
  options?: Option[];
  candidates?: Candidate[];
  validated: Record<string, string[]>;
}

export interface Progress {
  claims: number;
  resolved: number;
  unresolved: number;
  pending: number;
  batch: number;
  total_seconds: number;
}

export interface NextPayload {
  done: boolean;
  screen: Screen | null;
  progress: Progress;
  checker?: string;
}

export interface Ack {
  screen_id: string;
  seconds: number;
  claim_resolved: boolean;
  verdict: string | null;
  session_done: boolean;
  batch: number;
}

export interface AnswerResponse {
  ack: Ack;
  resolved: boolean;
  verdict: string | null;
  done: boolean;
}

export interface AnswerBody {
  checker: string;
  screen_id: string;
  selected: number[];
  suggestion: string | null;
  verdict: string | null;
}

export interface SkipResponse {
  skipped: string;
  progress: Progress;
}

export interface BatchClaim {
  claim_id: string;
  sentence_text: string;
  claim_span: [number, number];
  section_id: string;
}

export interface Report {
  mode: string;
  claims: number;
  resolved: number;
  unresolved: string[];
  batches: number;
  total_seconds: number;
  section_seconds: number;
  manual_seconds: number;
  total_weeks: number;
  savings: number;
  done: boolean;
  batch_claims: BatchClaim[];
  results: Record<string, { verdict: string }>;
}

export interface ErrorDetail {
  message: string;
  code?: string;
  position?: number;
}

export class ApiError extends Error {
  constructor(readonly status: number, readonly detail: ErrorDetail) {
    super(detail.message);
  }
}

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

function asDetail(status: number, body: unknown): ErrorDetail {
  if (body && typeof body === "object" && "detail" in body) {
    const detail = (body as { detail: unknown }).detail;
    if (typeof detail === "string") return { message: detail };
    if (detail && typeof detail === "object") {
      return detail as ErrorDetail;
    }
  }
  return { message: `request failed with status ${status}` };
}

export class Api {
  private readonly fetchFn: FetchLike;

  constructor(
    readonly base: string = "",
    fetchFn?: FetchLike,
  ) {
    // bind so the client works both in a browser and under a test stub
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(
    method: string,
    path: string,
    body?: unknown,
  ): Promise<T> {
    const init: RequestInit = { method, headers: {} };
    if (body !== undefined) {
      init.headers = { "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await this.fetchFn(this.base + path, init);
    const parsed: unknown = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, asDetail(response.status, parsed));
    }
    return parsed as T;
  }

  createSession(body: {
    corpus_root: string;
    mode?: string;
    config?: Record<string, unknown>;
    session_id?: string;
  }): Promise<{ session: string; mode: string; claims: number }> {
    return this.request("POST", "/sessions", body);
  }

  nextScreen(sessionId: string, checker: string): Promise<NextPayload> {
    const query = new URLSearchParams({ checker }).toString();
    return this.request("GET", `/sessions/${sessionId}/next?${query}`);
  }

  answer(sessionId: string, body: AnswerBody): Promise<AnswerResponse> {
    return this.request("POST", `/sessions/${sessionId}/answer`, body);
  }

  skip(
    sessionId: string,
    body: { checker: string; claim_id: string },
  ): Promise<SkipResponse> {
    return this.request("POST", `/sessions/${sessionId}/skip`, body);
  }

  report(sessionId: string): Promise<Report> {
    return this.request("GET", `/sessions/${sessionId}/report`);
  }
}
