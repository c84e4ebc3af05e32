/**
 * Pure pixel helpers shared by the UI and the tests (no DOM types here).
 */

/** Absolute per-pixel difference of two grayscale buffers, scaled into a
 * red-hot RGBA heatmap. Buffers must be equal length. */
export function diffHeatmap(a: Uint8Array, b: Uint8Array): Uint8ClampedArray {
  if (a.length !== b.length) {
    throw new Error(`buffer lengths differ: ${a.length} vs ${b.length}`);
  }
  const out = new Uint8ClampedArray(a.length * 4);
  let peak = 1;
  for (let i = 0; i < a.length; i += 1) {
    peak = Math.max(peak, Math.abs(a[i] - b[i]));
  }
  for (let i = 0; i < a.length; i += 1) {
    const d = Math.abs(a[i] - b[i]) / peak;
    out[i * 4 + 0] = Math.round(255 * d);
    out[i * 4 + 1] = Math.round(48 * d);
    out[i * 4 + 2] = Math.round(16 * d);
    out[i * 4 + 3] = 255;
  }
  return out;
}

/** Display windowing: remap an 8-bit gray level through a [lo, hi] window
 * (values in 0..255); purely a view-side transform. */
export function applyWindow(value: number, lo: number, hi: number): number {
  if (hi <= lo) return value >= hi ? 255 : 0;
  const t = (value - lo) / (hi - lo);
  return Math.max(0, Math.min(255, Math.round(t * 255)));
}
