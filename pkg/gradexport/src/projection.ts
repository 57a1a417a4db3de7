/**
 * Seeded Rademacher projection of per-layer gradient blocks.
 *
 * Layer l of a row matrix is multiplied by the +-1 sign matrix of stream
 * (seed, l) scaled by 1/sqrt(p_l); target widths come from a proportional
 * allocation of a total projection budget. Signs are generated in bounded
 * row chunks, which cannot change the result because every sign is addressed
 * by its absolute position in the stream.
 */

import { signBlock, streamKey } from "./rng.js";

const SIGN_CHUNK_ROWS = 1024;

/**
 * Distribute a total projection width over layers proportionally.
 *
 * Each layer gets min(d_l, floor(totalDim * d_l / sum(d))), then entries are
 * clamped up to 1. If the clamping pushed the sum over budget, the largest
 * entries (earliest layer on ties) are decremented until the sum fits;
 * entries never drop below 1.
 */
export function allocateProjectionDims(layerDims: number[], totalDim: number): number[] {
  if (layerDims.length === 0) {
    throw new Error("layerDims must be non-empty");
  }
  if (layerDims.some((d) => !Number.isInteger(d) || d <= 0)) {
    throw new Error("layerDims must be positive integers");
  }
  if (totalDim < layerDims.length) {
    throw new Error(`totalDim ${totalDim} cannot cover ${layerDims.length} layers`);
  }
  const total = layerDims.reduce((a, b) => a + b, 0);
  const dims = layerDims.map((d) => Math.max(1, Math.min(d, Math.floor((totalDim * d) / total))));
  let sum = dims.reduce((a, b) => a + b, 0);
  while (sum > totalDim) {
    let j = -1;
    for (let i = 0; i < dims.length; i++) {
      if (dims[i] > 1 && (j === -1 || dims[i] > dims[j])) {
        j = i;
      }
    }
    dims[j] -= 1;
    sum -= 1;
  }
  return dims;
}

export interface ProjectedRows {
  rows: Float64Array[];
  layerSegments: [string, number][];
}

/**
 * Project every layer segment of the given rows down to the allocated
 * widths. Segments must partition the row width exactly.
 */
export function projectLayers(
  rows: Float64Array[],
  layerSegments: [string, number][],
  totalDim: number,
  seed: number,
): ProjectedRows {
  const width = layerSegments.reduce((a, [, w]) => a + w, 0);
  for (const row of rows) {
    if (row.length !== width) {
      throw new Error(`row width ${row.length} does not match segments (${width})`);
    }
  }
  const dims = allocateProjectionDims(
    layerSegments.map(([, w]) => w),
    totalDim,
  );
  const outDim = dims.reduce((a, b) => a + b, 0);
  const out = rows.map(() => new Float64Array(outDim));
  let inOffset = 0;
  let outOffset = 0;
  const outSegments: [string, number][] = [];
  for (let layer = 0; layer < layerSegments.length; layer++) {
    const [name, w] = layerSegments[layer];
    const p = dims[layer];
    const key = streamKey(seed, layer);
    const scale = 1 / Math.sqrt(p);
    for (let r0 = 0; r0 < w; r0 += SIGN_CHUNK_ROWS) {
      const r1 = Math.min(r0 + SIGN_CHUNK_ROWS, w);
      const signs = signBlock(key, p, r0, r1);
      for (let i = 0; i < rows.length; i++) {
        const row = rows[i];
        const acc = out[i];
        for (let r = r0; r < r1; r++) {
          const x = row[inOffset + r];
          if (x === 0) {
            continue;
          }
          const base = (r - r0) * p;
          for (let c = 0; c < p; c++) {
            acc[outOffset + c] += x * signs[base + c];
          }
        }
      }
    }
    for (const acc of out) {
      for (let c = 0; c < p; c++) {
        acc[outOffset + c] *= scale;
      }
    }
    outSegments.push([name, p]);
    inOffset += w;
    outOffset += p;
  }
  return { rows: out, layerSegments: outSegments };
}

/** Divide every row by its L2 norm in place; zero rows are a hard error. */
export function normalizeRows(rows: Float64Array[], ids: string[]): void {
  for (let i = 0; i < rows.length; i++) {
    const row = rows[i];
    let sq = 0;
    for (let c = 0; c < row.length; c++) {
      sq += row[c] * row[c];
    }
    if (sq === 0) {
      throw new Error(`cannot normalize zero gradient for id "${ids[i]}"`);
    }
    const inv = 1 / Math.sqrt(sq);
    for (let c = 0; c < row.length; c++) {
      row[c] *= inv;
    }
  }
}
