/**
 * Client-side pre-validation of parameter edits.
 *
 * The panel checks an edit against the same structural rules the session
 * enforces before emitting a set_params command, so obviously invalid
 * values are rejected inline without a round trip. The session remains
 * the authority: anything that passes here is still sent and may be
 * rejected, and that server reason is surfaced verbatim.
 *
 * All ratio arithmetic is exact (integer numerator/denominator) so grid
 * alignment checks never suffer float drift.
 */

export interface Ratio {
  num: number;
  den: number;
}

export type Validation =
  | { ok: true }
  | { ok: false; reason: string };

function gcd(a: number, b: number): number {
  while (b !== 0) [a, b] = [b, a % b];
  return a;
}

export function parseRatio(text: string): Ratio | null {
  const trimmed = text.trim();
  const frac = /^([0-9]+)\s*\/\s*([0-9]+)$/.exec(trimmed);
  if (frac) {
    const num = Number(frac[1]);
    const den = Number(frac[2]);
    if (den === 0) return null;
    const g = gcd(num, den) || 1;
    return { num: num / g, den: den / g };
  }
  const dec = /^([0-9]+)(?:\.([0-9]+))?$/.exec(trimmed);
  if (dec) {
    const whole = Number(dec[1]);
    const fracDigits = dec[2] ?? "";
    const den = 10 ** fracDigits.length;
    const num = whole * den + Number(fracDigits || "0");
    const g = gcd(num, den) || 1;
    return { num: num / g, den: den / g };
  }
  return null;
}

export function formatRatio(r: Ratio): string {
  return `${r.num}/${r.den}`;
}

/** Geometry the rules are checked against; mirrors the session's config. */
export interface Geometry {
  T_seconds: number;
  sample_rate: number;
  latent_frames: number;
  lookahead_w: number;
  fade_samples: number;
}

function windowSamples(geo: Geometry): number {
  return Math.round(geo.T_seconds * geo.sample_rate);
}

export function stepSamples(geo: Geometry, r: Ratio): number {
  return (windowSamples(geo) * r.num) / r.den;
}

/** Validate a step-ratio edit against the geometry it would run under. */
export function validateRatio(
  text: string,
  geo: Geometry,
  lookaheadW: number = geo.lookahead_w,
): Validation {
  const r = parseRatio(text);
  if (r === null) {
    return { ok: false, reason: `cannot parse step ratio from ${JSON.stringify(text)}` };
  }
  if (r.num <= 0 || r.num > r.den) {
    return { ok: false, reason: `step_ratio must be in (0, 1], got ${formatRatio(r)}` };
  }
  if ((geo.latent_frames * r.num) % r.den !== 0) {
    return {
      ok: false,
      reason: `step must align to the latent grid: ${geo.latent_frames} * ${formatRatio(r)} is not an integer number of frames`,
    };
  }
  if ((windowSamples(geo) * r.num) % r.den !== 0) {
    return {
      ok: false,
      reason: `step must cover a whole number of samples: ${windowSamples(geo)} * ${formatRatio(r)}`,
    };
  }
  const reach = (lookaheadW + 1) * (r.num / r.den);
  if (reach > 1) {
    return {
      ok: false,
      reason: `prediction window extends past the receptive field: (w+1)*r = ${reach} > 1`,
    };
  }
  // stricter than the session: looking ahead with (w+1)*r = 1 leaves zero
  // observed context, so the panel refuses the edit inline
  if (lookaheadW >= 0 && reach === 1) {
    return {
      ok: false,
      reason: `no observed context remains: (w+1)*r = 1 with w = ${lookaheadW}`,
    };
  }
  const step = stepSamples(geo, r);
  if (geo.fade_samples >= step) {
    return {
      ok: false,
      reason: `fade_samples must be in [0, step): got ${geo.fade_samples} with step ${step}`,
    };
  }
  return { ok: true };
}

export function validateLookahead(w: number, geo: Geometry, ratio: Ratio): Validation {
  if (!Number.isInteger(w)) {
    return { ok: false, reason: "lookahead_w must be an integer" };
  }
  return validateRatio(formatRatio(ratio), geo, w);
}

export function validateFade(fade: number, geo: Geometry, ratio: Ratio): Validation {
  if (!Number.isInteger(fade) || fade < 0) {
    return { ok: false, reason: "fade_samples must be a non-negative integer" };
  }
  const step = stepSamples(geo, ratio);
  if (fade >= step) {
    return {
      ok: false,
      reason: `fade_samples must be in [0, step): got ${fade} with step ${step}`,
    };
  }
  return { ok: true };
}

export function validatePacketSize(size: number): Validation {
  if (!Number.isInteger(size) || size <= 0) {
    return { ok: false, reason: "packet_size must be a positive integer" };
  }
  return { ok: true };
}
