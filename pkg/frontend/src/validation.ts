/**
 * Client-side regimen validation mirroring the server's 422 rules.
 *
 * The editor must never submit a request the server would reject, so the
 * rules here are kept in lockstep with the service schema: five free
 * weekly doses in [0, 10] Gy/day, risk level strictly inside (0, 1),
 * sample count within the evaluate cap, nonnegative integer seed.
 */

import type { EvaluateRequest } from "./types.js";

export const FIRST_WEEK_DOSE_GY = 2;
export const MAX_DAILY_DOSE_GY = 10;
export const N_FREE_WEEKS = 5;
export const TREATMENT_DAYS_PER_WEEK = 5;
export const MIN_EVALUATE_SAMPLES = 100;
export const MAX_EVALUATE_SAMPLES = 20_000;

export function clampDose(value: number): number {
  if (!Number.isFinite(value)) return 0;
  return Math.min(MAX_DAILY_DOSE_GY, Math.max(0, value));
}

/** Total delivered dose in Gy for the five free weeks plus the pinned first week. */
export function totalDoseGy(freeDoses: number[]): number {
  const weekly = FIRST_WEEK_DOSE_GY + freeDoses.reduce((a, b) => a + b, 0);
  return TREATMENT_DAYS_PER_WEEK * weekly;
}

/** Problems that would make the server reject the regimen; empty means valid. */
export function regimenProblems(freeDoses: number[]): string[] {
  const problems: string[] = [];
  if (freeDoses.length !== N_FREE_WEEKS) {
    problems.push(`need exactly ${N_FREE_WEEKS} weekly doses, got ${freeDoses.length}`);
  }
  freeDoses.forEach((dose, i) => {
    if (!Number.isFinite(dose)) {
      problems.push(`week ${i + 2}: dose is not a number`);
    } else if (dose < 0 || dose > MAX_DAILY_DOSE_GY) {
      problems.push(`week ${i + 2}: dose ${dose} outside [0, ${MAX_DAILY_DOSE_GY}] Gy/day`);
    }
  });
  return problems;
}

export function requestProblems(request: EvaluateRequest): string[] {
  const problems = regimenProblems(request.u);
  if (!(request.alpha > 0 && request.alpha < 1)) {
    problems.push(`alpha ${request.alpha} outside (0, 1)`);
  }
  if (
    !Number.isInteger(request.n_mc) ||
    request.n_mc < MIN_EVALUATE_SAMPLES ||
    request.n_mc > MAX_EVALUATE_SAMPLES
  ) {
    problems.push(`n_mc ${request.n_mc} outside [${MIN_EVALUATE_SAMPLES}, ${MAX_EVALUATE_SAMPLES}]`);
  }
  if (!Number.isInteger(request.seed) || request.seed < 0) {
    problems.push(`seed ${request.seed} must be a nonnegative integer`);
  }
  return problems;
}

/**
 * Mirror of the server-side acceptance decision, used by tests to prove
 * that anything the editor emits would pass the real 422 gate.
 */
export function serverWouldAccept(request: EvaluateRequest): boolean {
  return requestProblems(request).length === 0;
}

/** Sanitize arbitrary slider readings into a submittable dose vector. */
export function sanitizeFreeDoses(raw: number[]): number[] {
  const doses = raw.slice(0, N_FREE_WEEKS).map(clampDose);
  while (doses.length < N_FREE_WEEKS) doses.push(0);
  return doses;
}
