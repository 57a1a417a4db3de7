/**
 * Counter-based deterministic bit streams.
 *
 * All randomness here comes from the SplitMix64 finalizer applied to
 * explicit counters, so any word of any stream can be computed independently
 * (no sequential state) and a consumer in another language only needs the
 * three constants and the mixing function to regenerate identical values.
 *
 * Stream layout:
 *   key    = mix64(mix64(seed + GAMMA) + (stream + 1) * GAMMA)
 *   word_j = mix64(key + (j + 1) * GAMMA)          (j = 0, 1, 2, ...)
 * Each 64-bit word supplies 64 Rademacher signs, least-significant bit
 * first: entry (r, c) of a sign matrix with nCols columns reads bit
 * (r * nCols + c) % 64 of word (r * nCols + c) / 64; a set bit means +1.
 */

export const MASK64 = (1n << 64n) - 1n;
export const GAMMA = 0x9e3779b97f4a7c15n;
const MIX1 = 0xbf58476d1ce4e5b9n;
const MIX2 = 0x94d049bb133111ebn;

/** SplitMix64 finalizer (mod 2^64). */
export function mix64(z: bigint): bigint {
  z &= MASK64;
  z = ((z ^ (z >> 30n)) * MIX1) & MASK64;
  z = ((z ^ (z >> 27n)) * MIX2) & MASK64;
  return z ^ (z >> 31n);
}

/** Key for an independent stream derived from (seed, stream index). */
export function streamKey(seed: number | bigint, stream: number | bigint): bigint {
  const k0 = mix64((BigInt(seed) + GAMMA) & MASK64);
  return mix64((k0 + (BigInt(stream) + 1n) * GAMMA) & MASK64);
}

/** Words start .. start+count-1 of the stream. */
export function streamWords(key: bigint, start: number, count: number): bigint[] {
  const out: bigint[] = new Array(count);
  let z = (key + (BigInt(start) + 1n) * GAMMA) & MASK64;
  for (let j = 0; j < count; j++) {
    out[j] = mix64(z);
    z = (z + GAMMA) & MASK64;
  }
  return out;
}

export interface WordHalves {
  lo: Uint32Array;
  hi: Uint32Array;
}

/** Stream words split into 32-bit halves for cheap per-bit access. */
export function streamWordHalves(key: bigint, start: number, count: number): WordHalves {
  const lo = new Uint32Array(count);
  const hi = new Uint32Array(count);
  let z = (key + (BigInt(start) + 1n) * GAMMA) & MASK64;
  for (let j = 0; j < count; j++) {
    const w = mix64(z);
    lo[j] = Number(w & 0xffffffffn);
    hi[j] = Number(w >> 32n);
    z = (z + GAMMA) & MASK64;
  }
  return { lo, hi };
}

/**
 * Rows rowStart .. rowStop-1 of the stream's sign matrix, flattened
 * row-major as +1/-1 entries of shape (rowStop - rowStart) x nCols.
 */
export function signBlock(
  key: bigint,
  nCols: number,
  rowStart: number,
  rowStop: number,
): Int8Array {
  if (nCols <= 0 || rowStop < rowStart) {
    throw new Error("empty sign block requested");
  }
  const flat0 = rowStart * nCols;
  const flat1 = rowStop * nCols;
  const out = new Int8Array(flat1 - flat0);
  if (out.length === 0) {
    return out;
  }
  const w0 = Math.floor(flat0 / 64);
  const words = streamWordHalves(key, w0, Math.floor((flat1 - 1) / 64) - w0 + 1);
  for (let f = flat0; f < flat1; f++) {
    const wi = Math.floor(f / 64) - w0;
    const b = f % 64;
    const bit = b < 32 ? (words.lo[wi] >>> b) & 1 : (words.hi[wi] >>> (b - 32)) & 1;
    out[f - flat0] = bit ? 1 : -1;
  }
  return out;
}

/**
 * Uniform draws in [0, 1) from the top 53 bits of each stream word; used to
 * seed model weights so a config alone pins every parameter.
 */
export function streamUniform(key: bigint, start: number, count: number): Float64Array {
  const out = new Float64Array(count);
  let z = (key + (BigInt(start) + 1n) * GAMMA) & MASK64;
  for (let j = 0; j < count; j++) {
    out[j] = Number(mix64(z) >> 11n) / 2 ** 53;
    z = (z + GAMMA) & MASK64;
  }
  return out;
}
