/**
 * Client-side rescaling of raw echo values to 8-bit grey.
 *
 * Mirrors the server conventions exactly (scaled values are floored, the
 * logarithmic map uses beta = 1e4), so re-rescaling served raw data is
 * byte-compatible with server rasters.
 */

export type RescaleMode = "joint" | "per" | "log";

export const LOG_BETA = 1e4;

function floorClip(value: number): number {
  return Math.floor(Math.min(Math.max(value, 0), 255));
}

export function linearRaster(raw: Float64Array, peak: number): Uint8Array {
  const out = new Uint8Array(raw.length);
  if (peak <= 0) return out;
  const scale = 255 / peak;
  for (let i = 0; i < raw.length; i++) {
    out[i] = floorClip(Math.max(raw[i], 0) * scale);
  }
  return out;
}

export function logRaster(raw: Float64Array, peak: number, beta = LOG_BETA): Uint8Array {
  const out = new Uint8Array(raw.length);
  if (peak <= 0) return out;
  const denom = Math.log1p(beta * peak);
  for (let i = 0; i < raw.length; i++) {
    out[i] = floorClip((Math.log1p(beta * Math.abs(raw[i])) / denom) * 255);
  }
  return out;
}

function maxAbs(raw: Float64Array): number {
  let peak = 0;
  for (let i = 0; i < raw.length; i++) {
    const a = Math.abs(raw[i]);
    if (a > peak) peak = a;
  }
  return peak;
}

/** Rescale one or more raw vectors under a shared or per-image scale. */
export function rescale(vectors: Float64Array[], mode: RescaleMode): Uint8Array[] {
  if (vectors.length === 0) throw new Error("need at least one vector");
  if (mode === "per") {
    return vectors.map((v) => linearRaster(v, maxVal(v)));
  }
  const peak = Math.max(...vectors.map((v) => (mode === "log" ? maxAbs(v) : maxVal(v))));
  return vectors.map((v) => (mode === "log" ? logRaster(v, peak) : linearRaster(v, peak)));
}

function maxVal(raw: Float64Array): number {
  let peak = 0;
  for (let i = 0; i < raw.length; i++) if (raw[i] > peak) peak = raw[i];
  return peak;
}
