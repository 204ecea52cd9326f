// The one number the client recomputes: attribution contributions plus the
// base value must reproduce the model output they explain. Anything else
// (grades, totals, percentiles) is displayed exactly as served.

import type { Attribution } from "./types.js";

// Payloads travel as decimal JSON, so allow more slack than the service's
// internal 1e-9 check while still catching any real tampering.
export const LOCAL_ACCURACY_TOLERANCE = 1e-6;

export function localAccuracyGap(attribution: Attribution): number {
  const contribution = attribution.phi.reduce((sum, entry) => sum + entry.value, 0);
  return Math.abs(attribution.base_value + contribution - attribution.prediction);
}

export function attributionIsConsistent(
  attribution: Attribution,
  tolerance: number = LOCAL_ACCURACY_TOLERANCE,
): boolean {
  return localAccuracyGap(attribution) <= tolerance;
}
