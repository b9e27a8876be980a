/**
 * Raster decoding and pixel-accurate canvas drawing helpers.
 */

export function decodeBase64(b64: string): Uint8Array {
  if (typeof atob === "function") {
    const bin = atob(b64);
    const out = new Uint8Array(bin.length);
    for (let i = 0; i < bin.length; i++) out[i] = bin.charCodeAt(i);
    return out;
  }
  return new Uint8Array(Buffer.from(b64, "base64"));
}

/** Served raw echo values: little-endian float64. */
export function decodeRaw(b64: string): Float64Array {
  const bytes = decodeBase64(b64);
  return new Float64Array(bytes.buffer, bytes.byteOffset, bytes.byteLength / 8);
}

/** Grey raster to RGBA, with optional marker dots (selection: red, set: cyan). */
export function toRGBA(
  gray: Uint8Array,
  nx: number,
  ny: number,
  marker?: { x: number; y: number } | null,
  others: { x: number; y: number }[] = [],
): Uint8ClampedArray<ArrayBuffer> {
  if (gray.length !== nx * ny) throw new Error("raster length mismatch");
  const rgba = new Uint8ClampedArray(new ArrayBuffer(nx * ny * 4));
  for (let i = 0; i < gray.length; i++) {
    const v = gray[i];
    rgba[4 * i] = v;
    rgba[4 * i + 1] = v;
    rgba[4 * i + 2] = v;
    rgba[4 * i + 3] = 255;
  }
  const paint = (p: { x: number; y: number }, r: number, g: number, b: number) => {
    if (p.x < 0 || p.x >= nx || p.y < 0 || p.y >= ny) return;
    const i = 4 * (p.y * nx + p.x);
    rgba[i] = r;
    rgba[i + 1] = g;
    rgba[i + 2] = b;
  };
  for (const p of others) paint(p, 0, 255, 255);
  if (marker) paint(marker, 255, 0, 0);
  return rgba;
}

/** Integer nearest-neighbour zoom that fits the canvas width. */
export function zoomFactor(canvasSize: number, gridSize: number): number {
  return Math.max(1, Math.floor(canvasSize / gridSize));
}

/** Canvas coordinate to pixel coordinate under the zoom factor. */
export function canvasToPixel(offset: number, zoom: number): number {
  return Math.floor(offset / zoom);
}
