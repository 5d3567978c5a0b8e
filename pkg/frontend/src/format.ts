/**
 * Display helpers. Risk readouts are shown verbatim (no client-side
 * rounding or recomputation); only axis/summary annotations are prettied.
 */

/** The exact number the API sent, stringified without alteration. */
export function verbatim(value: number): string {
  return String(value);
}

export function gy(value: number): string {
  return `${verbatim(value)} Gy`;
}

export function days(value: number): string {
  return `${verbatim(value)} d`;
}

export function signedDays(value: number | null): string {
  if (value === null) return "n/a";
  const sign = value > 0 ? "+" : "";
  return `${sign}${verbatim(value)} d`;
}

export function cells(value: number): string {
  return value.toExponential(3);
}
