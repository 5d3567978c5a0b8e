/**
 * Wire types of the twin HTTP API. Field names and shapes mirror the
 * server's response models exactly; values are displayed verbatim.
 */

export interface PatientSummary {
  id: string;
  observation_days: number[];
  has_posterior: boolean;
  has_pareto: boolean;
  converged: boolean | null;
}

export interface MarginalHistogram {
  parameter: string;
  bin_edges: number[];
  counts: number[];
  mean: number;
  std: number;
}

export interface DiagnosticsInfo {
  r_hat: Record<string, number>;
  ess: Record<string, number>;
  acceptance: number[];
  converged: boolean;
}

export interface PosteriorSummary {
  patient_id: string;
  n_samples: number;
  marginals: MarginalHistogram[];
  diagnostics: DiagnosticsInfo;
}

export interface RegimenInfo {
  weekly_doses: number[];
  treatment_start_day: number;
  treatment_days_per_week: number;
}

export interface ParetoPoint {
  d_max: number;
  regimen: RegimenInfo;
  total_dose: number;
  objective: number;
  ttp_superquantile: number;
  ttp_quantile: number;
  alpha: number;
  report_seed: number;
  report_n_mc: number;
}

export interface ParetoFront {
  patient_id: string;
  points: ParetoPoint[];
  soc_reference: ParetoPoint;
}

export interface TTPHistogram {
  bin_start_days: number[];
  counts: number[];
  end_of_simulation_count: number;
}

export interface EvaluateRequest {
  u: number[]; // weekly doses u2..u6 in Gy/day; week 1 is pinned server-side
  alpha: number;
  n_mc: number;
  seed: number;
}

export interface EvaluateResponse {
  patient_id: string;
  ttp_samples_histogram: TTPHistogram;
  ttp_superquantile: number;
  ttp_quantile: number;
  total_dose: number;
  alpha: number;
  n_mc: number;
  seed: number;
}

export interface JobHandle {
  job_id: string;
  status: string;
}

export interface JobStatus {
  job_id: string;
  status: string;
  result: ParetoPoint | null;
  error: string | null;
}

export interface ApiErrorBody {
  error: string;
  detail: unknown;
}
