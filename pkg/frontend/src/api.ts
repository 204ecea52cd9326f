// Thin typed client over the /api/v1 endpoints. The fetch function is
// injectable so tests can serve recorded fixtures without a backend.

import type {
  BehaviorPayload,
  EffortPayload,
  ErrorEnvelope,
  GradesPayload,
  HealthzPayload,
  HistoryPayload,
  PercentilePayload,
  PredictionPayload,
  SchemePayload,
  TrendsPayload,
} from "./types.js";

export interface FetchResponse {
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  url: string,
  init?: { headers?: Record<string, string> },
) => Promise<FetchResponse>;

export interface ApiClientOptions {
  baseUrl: string;
  token: string;
  fetchFn?: FetchLike;
}

/** A non-2xx response, carrying the service's {code, message, detail} envelope. */
export class ApiRequestError extends Error {
  readonly status: number;
  readonly code: string;
  readonly detail: unknown;

  constructor(status: number, envelope: ErrorEnvelope) {
    super(envelope.message);
    this.name = "ApiRequestError";
    this.status = status;
    this.code = envelope.code;
    this.detail = envelope.detail;
  }
}

function asEnvelope(status: number, body: unknown): ErrorEnvelope {
  if (body !== null && typeof body === "object" && "code" in body && "message" in body) {
    const candidate = body as { code: unknown; message: unknown; detail?: unknown };
    if (typeof candidate.code === "string" && typeof candidate.message === "string") {
      return { code: candidate.code, message: candidate.message, detail: candidate.detail ?? null };
    }
  }
  return { code: "http_error", message: `unexpected status ${status}`, detail: null };
}

export class ApiClient {
  private readonly baseUrl: string;
  private readonly token: string;
  private readonly fetchFn: FetchLike;

  constructor(options: ApiClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/$/, "");
    this.token = options.token;
    this.fetchFn = options.fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async get<T>(path: string, params?: Record<string, string | number>): Promise<T> {
    let url = this.baseUrl + path;
    if (params !== undefined) {
      const query = new URLSearchParams(
        Object.entries(params).map(([key, value]) => [key, String(value)]),
      );
      url += `?${query.toString()}`;
    }
    const response = await this.fetchFn(url, {
      headers: { Authorization: `Bearer ${this.token}` },
    });
    const body = await response.json();
    if (response.status < 200 || response.status >= 300) {
      throw new ApiRequestError(response.status, asEnvelope(response.status, body));
    }
    return body as T;
  }

  healthz(): Promise<HealthzPayload> {
    return this.get("/healthz");
  }

  prediction(studentId: string, checkpoint: number): Promise<PredictionPayload> {
    return this.get(`/api/v1/students/${encodeURIComponent(studentId)}/prediction`, { checkpoint });
  }

  grades(studentId: string): Promise<GradesPayload> {
    return this.get(`/api/v1/students/${encodeURIComponent(studentId)}/grades`);
  }

  behavior(studentId: string, checkpoint: number): Promise<BehaviorPayload> {
    return this.get(`/api/v1/students/${encodeURIComponent(studentId)}/behavior`, { checkpoint });
  }

  percentile(studentId: string, checkpoint: number): Promise<PercentilePayload> {
    return this.get(`/api/v1/students/${encodeURIComponent(studentId)}/percentile`, { checkpoint });
  }

  history(): Promise<HistoryPayload> {
    return this.get("/api/v1/course/history");
  }

  trends(): Promise<TrendsPayload> {
    return this.get("/api/v1/course/trends");
  }

  effort(): Promise<EffortPayload> {
    return this.get("/api/v1/course/effort");
  }

  scheme(): Promise<SchemePayload> {
    return this.get("/api/v1/course/scheme");
  }
}
