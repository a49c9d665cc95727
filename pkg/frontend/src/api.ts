/** Thin fetch client for the session service. Every error response carries a
 * machine-readable envelope; this surfaces it as a typed ApiError so callers
 * can branch on the code (busy, stale_pattern, ...) instead of parsing text.
 */

import type {
  AssimilateResponse,
  CreateSessionRequest,
  ErrorEnvelope,
  MineRequest,
  MineResponse,
  PatternDetailPayload,
  SessionCreated,
  SessionState,
  TimingRecord,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

function isEnvelope(body: unknown): body is ErrorEnvelope {
  return (
    typeof body === "object" &&
    body !== null &&
    typeof (body as ErrorEnvelope).error === "object" &&
    (body as ErrorEnvelope).error !== null &&
    typeof (body as ErrorEnvelope).error.code === "string"
  );
}

export class Client {
  constructor(readonly base: string = "") {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const init: RequestInit = { method, headers: { accept: "application/json" } };
    if (body !== undefined) {
      init.headers = { ...init.headers, "content-type": "application/json" };
      init.body = JSON.stringify(body);
    }
    const response = await fetch(this.base + path, init);
    let parsed: unknown = null;
    const text = await response.text();
    if (text.length > 0) {
      try {
        parsed = JSON.parse(text);
      } catch {
        parsed = null;
      }
    }
    if (!response.ok) {
      if (isEnvelope(parsed)) {
        throw new ApiError(response.status, parsed.error.code, parsed.error.message);
      }
      throw new ApiError(response.status, "http_error", `${method} ${path} failed (${response.status})`);
    }
    return parsed as T;
  }

  createSession(req: CreateSessionRequest): Promise<SessionCreated> {
    return this.request("POST", "/sessions", req);
  }

  getSession(sid: string): Promise<SessionState> {
    return this.request("GET", `/sessions/${sid}`);
  }

  mine(sid: string, req: MineRequest = {}): Promise<MineResponse> {
    return this.request("POST", `/sessions/${sid}/mine`, req);
  }

  assimilate(sid: string, patternId: string): Promise<AssimilateResponse> {
    return this.request("POST", `/sessions/${sid}/assimilate`, { pattern_id: patternId });
  }

  patternDetail(sid: string, pid: string): Promise<PatternDetailPayload> {
    return this.request("GET", `/sessions/${sid}/patterns/${pid}`);
  }

  reset(sid: string): Promise<{ iteration: number }> {
    return this.request("POST", `/sessions/${sid}/reset`);
  }

  timings(sid: string): Promise<{ timings: TimingRecord[] }> {
    return this.request("GET", `/sessions/${sid}/timings`);
  }
}

/** Retries a mutating call while the service answers 409 busy. The service
 * holds one writer lock per session, so a short backoff is always enough. */
export async function withBusyRetry<T>(
  fn: () => Promise<T>,
  attempts = 4,
  delayMs = 250,
): Promise<T> {
  let lastError: unknown;
  for (let i = 0; i < attempts; i += 1) {
    try {
      return await fn();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409 && err.code === "busy") {
        lastError = err;
        await new Promise((resolve) => setTimeout(resolve, delayMs * (i + 1)));
        continue;
      }
      throw err;
    }
  }
  throw lastError;
}
