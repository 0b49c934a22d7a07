/** Alignment quality banding. Display convention only, never a clinical
 * acceptance threshold. */

export interface BandingThresholds {
  good_mm: number;
  good_deg: number;
  warn_mm: number;
  warn_deg: number;
}

export type Band = "green" | "amber" | "red";

export function classifyAlignment(
  distanceMm: number,
  angleDeg: number,
  t: BandingThresholds,
): Band {
  if (distanceMm <= t.good_mm && angleDeg <= t.good_deg) return "green";
  if (distanceMm <= t.warn_mm && angleDeg <= t.warn_deg) return "amber";
  return "red";
}
