/**
 * Session state of the what-if editor: evaluation history, delta vs the
 * stored SOC reference, and latest-wins request tracking. No DOM here.
 */

import type { EvaluateRequest, EvaluateResponse, ParetoFront, ParetoPoint } from "./types.js";

export const HISTORY_LIMIT = 20;

export interface EvaluationRecord {
  label: string;
  request: EvaluateRequest;
  response: EvaluateResponse;
  /** tail-TTP gain in days relative to the stored SOC reference */
  deltaVsSoc: number | null;
}

export function deltaVsSoc(response: EvaluateResponse, front: ParetoFront | null): number | null {
  if (!front) return null;
  return response.ttp_superquantile - front.soc_reference.ttp_superquantile;
}

/** Append keeping at most HISTORY_LIMIT entries, newest first. */
export function pushHistory(history: EvaluationRecord[], record: EvaluationRecord): EvaluationRecord[] {
  return [record, ...history].slice(0, HISTORY_LIMIT);
}

/**
 * Latest-wins tracker: at most one evaluation is considered in flight, a
 * newer submission invalidates every earlier one.
 */
export class LatestWins {
  private counter = 0;
  private current: number | null = null;

  begin(): number {
    this.counter += 1;
    this.current = this.counter;
    return this.counter;
  }

  /** True when the finishing request is still the latest one. */
  settle(token: number): boolean {
    if (this.current === token) {
      this.current = null;
      return true;
    }
    return false;
  }

  get inFlight(): boolean {
    return this.current !== null;
  }
}

/** Free weekly doses (u2..u6) of a stored front point, for editor loading. */
export function freeDosesOf(point: ParetoPoint): number[] {
  return point.regimen.weekly_doses.slice(1);
}

/** The front point at a given dose cap, if present. */
export function pointAt(front: ParetoFront, dMax: number): ParetoPoint | undefined {
  return front.points.find((p) => p.d_max === dMax);
}
