import { readFileSync } from "node:fs";
import { describe, expect, it } from "vitest";

import { mix64, signBlock, streamKey, streamUniform, streamWords } from "../src/rng.js";
import { allocateProjectionDims } from "../src/projection.js";

// Reference SplitMix64 output for seed 1234567: the first four draws of the
// canonical generator, which our counter-based stream must reproduce because
// word_j = mix64(key + (j + 1) * GAMMA) is exactly its j-th state update.
const REFERENCE_WORDS = [
  6457827717110365317n,
  3203168211198807973n,
  9817491932198370423n,
  4593380528125082431n,
];

describe("mix64", () => {
  it("fixes zero", () => {
    expect(mix64(0n)).toBe(0n);
  });

  it("stays within 64 bits", () => {
    for (let i = 1n; i < 50n; i++) {
      const w = mix64(i * 0x123456789abcdefn);
      expect(w >= 0n && w < 1n << 64n).toBe(true);
    }
  });
});

describe("streamWords", () => {
  it("matches the canonical reference sequence", () => {
    expect(streamWords(1234567n, 0, 4)).toEqual(REFERENCE_WORDS);
  });

  it("is seekable", () => {
    const key = streamKey(99, 3);
    const all = streamWords(key, 0, 12);
    expect(streamWords(key, 7, 5)).toEqual(all.slice(7, 12));
  });

  it("gives distinct streams per (seed, stream)", () => {
    const a = streamWords(streamKey(5, 0), 0, 4);
    const b = streamWords(streamKey(5, 1), 0, 4);
    const c = streamWords(streamKey(6, 0), 0, 4);
    expect(a).not.toEqual(b);
    expect(a).not.toEqual(c);
  });
});

describe("signBlock", () => {
  it("contains only +1 and -1", () => {
    const signs = signBlock(streamKey(7, 0), 33, 0, 10);
    expect(signs.length).toBe(330);
    for (const s of signs) {
      expect(s === 1 || s === -1).toBe(true);
    }
  });

  it("is chunking-invisible", () => {
    const key = streamKey(11, 2);
    const whole = signBlock(key, 17, 0, 9);
    const top = signBlock(key, 17, 0, 4);
    const bottom = signBlock(key, 17, 4, 9);
    expect([...top, ...bottom]).toEqual([...whole]);
  });

  it("reads bit (r * nCols + c) of the stream", () => {
    const key = streamKey(3, 1);
    const nCols = 20;
    const signs = signBlock(key, nCols, 0, 7);
    const words = streamWords(key, 0, Math.ceil((7 * nCols) / 64));
    for (let r = 0; r < 7; r++) {
      for (let c = 0; c < nCols; c++) {
        const flat = r * nCols + c;
        const bit = (words[flat >> 6] >> BigInt(flat % 64)) & 1n;
        expect(signs[flat]).toBe(bit === 1n ? 1 : -1);
      }
    }
  });

  it("matches the golden fixture", () => {
    const fixture = JSON.parse(
      readFileSync(new URL("./fixtures/signs_8x16.json", import.meta.url), "utf-8"),
    ) as { seed: number; layerIndex: number; width: number; projDim: number; signs: number[][] };
    const signs = signBlock(
      streamKey(fixture.seed, fixture.layerIndex),
      fixture.projDim,
      0,
      fixture.width,
    );
    const got = fixture.signs.map((row, r) =>
      row.map((_, c) => signs[r * fixture.projDim + c]),
    );
    expect(got).toEqual(fixture.signs);
  });

  it("is roughly balanced", () => {
    const signs = signBlock(streamKey(0, 0), 512, 0, 64);
    let sum = 0;
    for (const s of signs) {
      sum += s;
    }
    expect(Math.abs(sum / signs.length)).toBeLessThan(0.02);
  });
});

describe("streamUniform", () => {
  it("lands in [0, 1) and is seekable", () => {
    const key = streamKey(21, 0);
    const all = streamUniform(key, 0, 100);
    for (const u of all) {
      expect(u >= 0 && u < 1).toBe(true);
    }
    expect([...streamUniform(key, 40, 10)]).toEqual([...all.slice(40, 50)]);
  });
});

describe("allocateProjectionDims", () => {
  it("splits proportionally on exact cases", () => {
    expect(allocateProjectionDims([512, 512], 256)).toEqual([128, 128]);
    expect(allocateProjectionDims([4096], 1024)).toEqual([1024]);
  });

  it("clamps tiny layers up to one and repairs the overshoot", () => {
    expect(allocateProjectionDims([1, 1, 1000], 4)).toEqual([1, 1, 2]);
  });

  it("keeps floor-rule underallocation without backfill", () => {
    expect(allocateProjectionDims([2, 1000], 900)).toEqual([1, 898]);
  });

  it("never exceeds a layer's own width", () => {
    expect(allocateProjectionDims([2, 4], 12)).toEqual([2, 4]);
  });

  it("stays within bounds on random instances", () => {
    let state = 12345;
    const next = () => {
      state = (state * 48271) % 2147483647;
      return state;
    };
    for (let trial = 0; trial < 200; trial++) {
      const layers = 1 + (next() % 6);
      const dims = Array.from({ length: layers }, () => 1 + (next() % 300));
      const total = layers + (next() % 512);
      const out = allocateProjectionDims(dims, total);
      expect(out.length).toBe(layers);
      expect(out.reduce((a, b) => a + b, 0)).toBeLessThanOrEqual(total);
      out.forEach((p, i) => {
        expect(p).toBeGreaterThanOrEqual(1);
        expect(p).toBeLessThanOrEqual(dims[i]);
      });
    }
  });

  it("rejects impossible requests", () => {
    expect(() => allocateProjectionDims([], 4)).toThrow(/non-empty/);
    expect(() => allocateProjectionDims([0, 3], 4)).toThrow(/positive/);
    expect(() => allocateProjectionDims([3, 3, 3], 2)).toThrow(/cannot cover/);
  });
});
