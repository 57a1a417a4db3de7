import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import path from "node:path";
import { beforeAll, describe, expect, it } from "vitest";

import { exportGradients, loadJob, type ExportJob } from "../src/exporter.js";
import { readGrdm } from "../src/grdm.js";
import { runCli } from "../src/cli.js";

// Adapter widths 2048 + 4096 + 4096 + 1536 = 11776 exceed the 2^13 budget,
// so the proportional allocation genuinely compresses here.
const MODEL = {
  embedDim: 128,
  hiddenDim: 256,
  loraRank: 16,
  seed: 7,
  finetuneSteps: 6,
  finetuneLr: 0.1,
};

const DOCUMENTS = [
  { id: "doc0", prompt: "Q: color of the sky? ", target: "blue" },
  { id: "doc1", prompt: "Q: two plus two? ", target: "four" },
  { id: "doc2", prompt: "Q: opposite of hot? ", target: "cold" },
  { id: "doc3", prompt: "Q: capital of France? ", target: "Paris" },
  { id: "doc4", prompt: "Q: fastest land animal? ", target: "cheetah" },
  { id: "doc5", prompt: "Q: color of the sky? ", target: "blue" },
  { id: "doc6", prompt: "Q: water freezes at? ", target: "zero" },
  { id: "doc7", prompt: "Q: largest ocean? ", target: "Pacific" },
];

const EXPECTED_WIDTHS = [2048, 4096, 4096, 1536];

function makeJob(outputPath: string, overrides: Partial<ExportJob> = {}): ExportJob {
  return {
    model: { ...MODEL },
    documents: DOCUMENTS.map((d) => ({ ...d })),
    layerFilter: "lora",
    projection: { totalDim: 8192, seed: 11 },
    outputPath,
    batchSize: 3,
    ...overrides,
  };
}

/** The allocation rule, restated independently of src/projection.ts. */
function referenceAllocation(layerDims: number[], totalDim: number): number[] {
  const total = layerDims.reduce((a, b) => a + b, 0);
  const dims = layerDims.map((d) => Math.max(1, Math.min(d, Math.floor((totalDim * d) / total))));
  while (dims.reduce((a, b) => a + b, 0) > totalDim) {
    const biggest = Math.max(...dims.filter((p) => p > 1));
    dims[dims.indexOf(biggest)] -= 1;
  }
  return dims;
}

const pythonReader = (() => {
  try {
    execFileSync("python3", ["-c", "import selrel.gradstore"], { stdio: "pipe" });
    return true;
  } catch {
    return false;
  }
})();

let workDir: string;
let exported: ReturnType<typeof readGrdm>;
let summaryDim = 0;

beforeAll(() => {
  workDir = mkdtempSync(path.join(tmpdir(), "gradexport-"));
  const out = path.join(workDir, "train.grdm");
  const summary = exportGradients(makeJob(out));
  summaryDim = summary.dim;
  exported = readGrdm(out);
});

describe("exportGradients", () => {
  it("writes one row per document with the documents' ids", () => {
    expect(exported.ids).toEqual(DOCUMENTS.map((d) => d.id));
    expect(exported.rows.length).toBe(DOCUMENTS.length);
    expect(exported.normalized).toBe(true);
  });

  it("projects each adapter layer to its allocated width", () => {
    const expected = referenceAllocation(EXPECTED_WIDTHS, 8192);
    expect(exported.layerSegments).toEqual([
      ["encoder.lora_a", expected[0]],
      ["encoder.lora_b", expected[1]],
      ["head.lora_a", expected[2]],
      ["head.lora_b", expected[3]],
    ]);
    const dim = expected.reduce((a, b) => a + b, 0);
    expect(summaryDim).toBe(dim);
    expect(exported.rows[0].length).toBe(dim);
    expect(dim).toBeLessThanOrEqual(8192);
  });

  it("normalizes every row to unit length within 1e-5", () => {
    for (const row of exported.rows) {
      let sq = 0;
      for (const v of row) {
        sq += v * v;
      }
      expect(Math.abs(Math.sqrt(sq) - 1)).toBeLessThan(1e-5);
    }
  });

  it("gives identical documents nearly identical rows", () => {
    const a = exported.rows[0];
    const b = exported.rows[5];
    let dot = 0;
    for (let c = 0; c < a.length; c++) {
      dot += a[c] * b[c];
    }
    expect(dot).toBeGreaterThan(0.999);
  });

  it("records the loss convention in the metadata", () => {
    expect(exported.meta.loss).toBe("target_tokens_only");
    expect(exported.meta.projection_total_dim).toBe(8192);
  });

  it("is deterministic down to the bytes", () => {
    const again = path.join(workDir, "again.grdm");
    exportGradients(makeJob(again));
    expect(
      readFileSync(again).equals(readFileSync(path.join(workDir, "train.grdm"))),
    ).toBe(true);
  });

  it("rejects a filter matching no adapter layers, naming the candidates", () => {
    const job = makeJob(path.join(workDir, "never.grdm"), { layerFilter: "attention" });
    expect(() => exportGradients(job)).toThrow(
      /matches no adapter layers.*encoder\.lora_a.*head\.lora_b/s,
    );
  });

  it("rejects malformed jobs", () => {
    expect(() => exportGradients(makeJob("x.grdm", { documents: [] }))).toThrow(/no documents/);
    const dup = makeJob("x.grdm");
    dup.documents[1] = { ...dup.documents[0] };
    expect(() => exportGradients(dup)).toThrow(/unique/);
    const empty = makeJob("x.grdm");
    empty.documents[0] = { id: "doc0", prompt: "p", target: "" };
    expect(() => exportGradients(empty)).toThrow(/empty target/);
    expect(() => exportGradients(makeJob("x.grdm", { batchSize: 0 }))).toThrow(/batchSize/);
  });

  it("is insensitive to the batch size", () => {
    const one = path.join(workDir, "batch1.grdm");
    exportGradients(makeJob(one, { batchSize: 1 }));
    expect(
      readFileSync(one).equals(readFileSync(path.join(workDir, "train.grdm"))),
    ).toBe(true);
  });
});

describe("job files and the command line", () => {
  it("loads a job file with defaults and rejects unknown keys", () => {
    const jobPath = path.join(workDir, "job.json");
    writeFileSync(
      jobPath,
      JSON.stringify({
        model: { embedDim: 16, hiddenDim: 12, loraRank: 4, seed: 1 },
        documents: [{ id: "a", prompt: "x ", target: "yz" }],
        projection: { totalDim: 64, seed: 2 },
        outputPath: path.join(workDir, "fromfile.grdm"),
      }),
    );
    const job = loadJob(jobPath);
    expect(job.layerFilter).toBe("lora");
    expect(job.batchSize).toBe(1);
    expect(job.model.finetuneSteps).toBe(8);
    const badPath = path.join(workDir, "bad.json");
    writeFileSync(badPath, JSON.stringify({ outputFile: "x" }));
    expect(() => loadJob(badPath)).toThrow(/unknown job keys/);
  });

  it("runs an export end to end through the CLI entry", () => {
    const jobPath = path.join(workDir, "clijob.json");
    const outPath = path.join(workDir, "cli.grdm");
    writeFileSync(
      jobPath,
      JSON.stringify({
        model: { embedDim: 16, hiddenDim: 12, loraRank: 4, seed: 1 },
        documents: [
          { id: "a", prompt: "x ", target: "yz" },
          { id: "b", prompt: "w ", target: "uv" },
        ],
        projection: { totalDim: 64, seed: 2 },
        outputPath: outPath,
      }),
    );
    expect(runCli(["export", jobPath])).toBe(0);
    const container = readGrdm(outPath);
    expect(container.ids).toEqual(["a", "b"]);
    expect(container.layerSegments.reduce((a, [, w]) => a + w, 0)).toBeLessThanOrEqual(64);
    expect(runCli(["export"])).toBe(2);
    expect(runCli(["export", path.join(workDir, "missing.json")])).toBe(2);
  });
});

describe.skipIf(!pythonReader)("primary-package round trip", () => {
  it("parses in the primary with matching ids, segments and unit norms", () => {
    const file = path.join(workDir, "train.grdm");
    const script = `
import json, sys
import numpy as np
from selrel.gradstore import read_gradient_matrix
m = read_gradient_matrix(sys.argv[1])
norms = np.linalg.norm(m.rows.astype(np.float64), axis=1)
print(json.dumps({
    "ids": m.ids,
    "segments": [[n, w] for n, w in m.layer_segments],
    "normalized": m.normalized,
    "dim": m.dim,
    "max_norm_err": float(np.abs(norms - 1.0).max()),
}))
`;
    const out = JSON.parse(
      execFileSync("python3", ["-c", script, file], { encoding: "utf-8" }),
    );
    expect(out.ids).toEqual(exported.ids);
    expect(out.segments).toEqual(exported.layerSegments);
    expect(out.normalized).toBe(true);
    expect(out.dim).toBe(exported.rows[0].length);
    expect(out.max_norm_err).toBeLessThan(1e-5);
  });
});
