/**
 * Run-length encoding for binary prompt masks, matching the server's wire
 * format exactly: run lengths alternate zero-runs and one-runs, row-major,
 * always starting with a zero-run (a leading 0 is legal and means the mask
 * begins with ones). Lengths must sum to height * width.
 */

export interface RleMask {
  height: number;
  width: number;
  runs: number[];
}

export function encodeMask(data: Uint8Array, height: number, width: number): RleMask {
  if (data.length !== height * width) {
    throw new Error(`mask length ${data.length} does not match ${height}x${width}`);
  }
  const runs: number[] = [];
  let current = 0;
  let count = 0;
  for (let i = 0; i < data.length; i += 1) {
    const value = data[i] ? 1 : 0;
    if (value === current) {
      count += 1;
    } else {
      runs.push(count);
      current = value;
      count = 1;
    }
  }
  runs.push(count);
  return { height, width, runs };
}

export function decodeMask(rle: RleMask): Uint8Array {
  const total = rle.height * rle.width;
  const out = new Uint8Array(total);
  let offset = 0;
  let value = 0;
  for (const run of rle.runs) {
    if (!Number.isInteger(run) || run < 0) {
      throw new Error(`bad run length ${run}`);
    }
    if (value === 1) {
      out.fill(1, offset, offset + run);
    }
    offset += run;
    value = 1 - value;
  }
  if (offset !== total) {
    throw new Error(`runs sum to ${offset}, expected ${total}`);
  }
  return out;
}
