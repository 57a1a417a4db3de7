/**
 * The GRDM binary gradient container.
 *
 * Layout: magic "GRDM" (4 bytes), u16 version = 1, u16 flags (bit 0 =
 * normalized), u32 metadata length, UTF-8 JSON metadata {ids,
 * layer_segments, ...}, u64 n, u64 dim, then n*dim little-endian float32
 * row-major payload. All integers little-endian. Readers ignore metadata
 * keys beyond ids/layer_segments, so provenance can ride along.
 */

import fs from "node:fs";
import path from "node:path";

export const MAGIC = "GRDM";
export const VERSION = 1;
const FLAG_NORMALIZED = 1;

export interface GrdmContainer {
  ids: string[];
  layerSegments: [string, number][];
  rows: Float64Array[];
  normalized: boolean;
  meta: Record<string, unknown>;
}

export interface EncodeOptions {
  ids: string[];
  layerSegments: [string, number][];
  rows: Float64Array[];
  normalized: boolean;
  extraMeta?: Record<string, unknown>;
}

export function encodeGrdm(opts: EncodeOptions): Buffer {
  const { ids, layerSegments, rows } = opts;
  if (ids.length !== rows.length) {
    throw new Error(`${ids.length} ids for ${rows.length} rows`);
  }
  if (new Set(ids).size !== ids.length) {
    throw new Error("ids must be unique");
  }
  const dim = layerSegments.reduce((a, [, w]) => a + w, 0);
  for (const row of rows) {
    if (row.length !== dim) {
      throw new Error(`row width ${row.length} does not match segment widths (${dim})`);
    }
  }
  const meta = Buffer.from(
    JSON.stringify({
      ids,
      layer_segments: layerSegments,
      ...(opts.extraMeta ?? {}),
    }),
    "utf-8",
  );
  const header = Buffer.alloc(12);
  header.write(MAGIC, 0, "ascii");
  header.writeUInt16LE(VERSION, 4);
  header.writeUInt16LE(opts.normalized ? FLAG_NORMALIZED : 0, 6);
  header.writeUInt32LE(meta.length, 8);
  const shape = Buffer.alloc(16);
  shape.writeBigUInt64LE(BigInt(rows.length), 0);
  shape.writeBigUInt64LE(BigInt(dim), 8);
  const payload = Buffer.allocUnsafe(4 * rows.length * dim);
  let off = 0;
  for (const row of rows) {
    for (let c = 0; c < dim; c++) {
      payload.writeFloatLE(row[c], off);
      off += 4;
    }
  }
  return Buffer.concat([header, meta, shape, payload]);
}

export function writeGrdm(filePath: string, opts: EncodeOptions): void {
  fs.mkdirSync(path.dirname(path.resolve(filePath)), { recursive: true });
  fs.writeFileSync(filePath, encodeGrdm(opts));
}

export function parseGrdm(data: Buffer): GrdmContainer {
  if (data.length < 12) {
    throw new Error(`file too short for header (${data.length} bytes) at offset 0`);
  }
  if (data.toString("ascii", 0, 4) !== MAGIC) {
    throw new Error(`bad magic ${JSON.stringify(data.toString("ascii", 0, 4))} at offset 0`);
  }
  const version = data.readUInt16LE(4);
  if (version !== VERSION) {
    throw new Error(`unsupported version ${version} at offset 4`);
  }
  const flags = data.readUInt16LE(6);
  const metaLen = data.readUInt32LE(8);
  const metaStart = 12;
  const metaEnd = metaStart + metaLen;
  if (data.length < metaEnd + 16) {
    throw new Error(`truncated metadata or missing shape fields at offset ${metaStart}`);
  }
  let meta: Record<string, unknown>;
  let ids: string[];
  let layerSegments: [string, number][];
  try {
    meta = JSON.parse(data.toString("utf-8", metaStart, metaEnd));
    ids = (meta.ids as unknown[]).map((i) => String(i));
    layerSegments = (meta.layer_segments as [unknown, unknown][]).map(([n, w]) => [
      String(n),
      Number(w),
    ]);
  } catch (err) {
    throw new Error(`malformed metadata at offset ${metaStart}: ${String(err)}`);
  }
  const n = Number(data.readBigUInt64LE(metaEnd));
  const dim = Number(data.readBigUInt64LE(metaEnd + 8));
  const payloadStart = metaEnd + 16;
  const expected = 4 * n * dim;
  const actual = data.length - payloadStart;
  if (actual !== expected) {
    throw new Error(
      `payload holds ${actual} bytes, expected ${expected} for ${n}x${dim} float32 ` +
        `at offset ${payloadStart}`,
    );
  }
  if (ids.length !== n) {
    throw new Error(`metadata lists ${ids.length} ids for ${n} rows at offset ${metaStart}`);
  }
  const rows: Float64Array[] = new Array(n);
  let off = payloadStart;
  for (let i = 0; i < n; i++) {
    const row = new Float64Array(dim);
    for (let c = 0; c < dim; c++) {
      row[c] = data.readFloatLE(off);
      off += 4;
    }
    rows[i] = row;
  }
  return { ids, layerSegments, rows, normalized: (flags & FLAG_NORMALIZED) !== 0, meta };
}

export function readGrdm(filePath: string): GrdmContainer {
  return parseGrdm(fs.readFileSync(filePath));
}
