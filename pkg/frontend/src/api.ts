/** Thin typed client for the twin service; every value is passed through untouched. */

import type {
  EvaluateRequest,
  EvaluateResponse,
  JobHandle,
  JobStatus,
  ParetoFront,
  ParetoPoint,
  PatientSummary,
  PosteriorSummary,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: { error?: string; detail?: unknown },
  ) {
    super(`API error ${status}: ${body.error ?? "unknown"}`);
  }
}

type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class TwinApi {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchFn: FetchLike = (url, init) => fetch(url, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchFn(this.baseUrl + path, init);
    const body = await response.json();
    if (!response.ok) {
      throw new ApiError(response.status, body);
    }
    return body as T;
  }

  listPatients(): Promise<PatientSummary[]> {
    return this.request("/patients");
  }

  posterior(patientId: string): Promise<PosteriorSummary> {
    return this.request(`/patients/${patientId}/posterior`);
  }

  pareto(patientId: string): Promise<ParetoFront> {
    return this.request(`/patients/${patientId}/pareto`);
  }

  evaluate(patientId: string, request: EvaluateRequest, force = false): Promise<EvaluateResponse> {
    const query = force ? "?force=true" : "";
    return this.request(`/patients/${patientId}/evaluate${query}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
  }

  optimize(
    patientId: string,
    body: { d_max: number; alpha: number; restarts?: number },
    force = false,
  ): Promise<ParetoPoint | JobHandle> {
    const query = force ? "?force=true" : "";
    return this.request(`/patients/${patientId}/optimize${query}`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(body),
    });
  }

  job(jobId: string): Promise<JobStatus> {
    return this.request(`/jobs/${jobId}`);
  }
}
