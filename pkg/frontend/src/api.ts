// Thin typed client over the HTTP API. Every mutation in the UI maps to
// exactly one call here; failures carry the server's error code verbatim.

import type {
  AdvanceResponse,
  AnnotationResponse,
  ApiErrorBody,
  ProjectSummary,
  QueueResponse,
  ResultsResponse,
  TriageResponse,
} from "./types.js";

export class ApiError extends Error {
  code: string;
  status: number;
  body: ApiErrorBody;

  constructor(status: number, body: ApiErrorBody) {
    super(`${body.code}: ${body.message}`);
    this.code = body.code;
    this.status = status;
    this.body = body;
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetcher: typeof fetch = fetch.bind(globalThis),
  ) {}

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const response = await this.fetcher(this.baseUrl + path, {
      method,
      headers: body === undefined ? undefined : { "Content-Type": "application/json" },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    const payload = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, payload as ApiErrorBody);
    }
    return payload as T;
  }

  project(): Promise<ProjectSummary> {
    return this.request("GET", "/api/project");
  }

  queue(phase?: number, offset = 0, limit = 500): Promise<QueueResponse> {
    const params = new URLSearchParams({ offset: String(offset), limit: String(limit) });
    if (phase !== undefined) params.set("phase", String(phase));
    return this.request("GET", `/api/queue?${params}`);
  }

  annotate(pairId: string, caseNumber: number, annotator: string): Promise<AnnotationResponse> {
    return this.request("POST", "/api/annotations", {
      pair_id: pairId,
      case: caseNumber,
      annotator,
    });
  }

  advancePhase(): Promise<AdvanceResponse> {
    return this.request("POST", "/api/phase/advance", {});
  }

  results(verdict = "inconsistent", minConfidence = 0): Promise<ResultsResponse> {
    const params = new URLSearchParams({
      verdict,
      min_confidence: String(minConfidence),
    });
    return this.request("GET", `/api/results?${params}`);
  }

  triage(pairId: string, status: "confirmed" | "context_fp"): Promise<TriageResponse> {
    return this.request("POST", "/api/triage", { pair_id: pairId, status });
  }
}
