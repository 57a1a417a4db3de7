/**
 * Batched export of per-example adapter gradients to a GRDM container.
 *
 * A job names the model (config + fine-tuning recipe), the documents, a
 * layer-name filter over the adapter layers, the projection budget and seed,
 * and the output path. The exporter fine-tunes the adapters on the job's
 * documents, computes one flattened adapter-gradient row per document in
 * batches, projects each layer block with the seeded sign streams,
 * normalizes rows, and writes the container once at the end. Identical jobs
 * produce byte-identical files.
 */

import fs from "node:fs";

import {
  adapterGradients,
  createMicroLm,
  finetuneAdapters,
  type Document,
  type MicroLmConfig,
} from "./microlm.js";
import { normalizeRows, projectLayers } from "./projection.js";
import { writeGrdm } from "./grdm.js";

export interface ModelRef extends MicroLmConfig {
  finetuneSteps: number;
  finetuneLr: number;
}

export interface ExportJob {
  model: ModelRef;
  documents: Document[];
  layerFilter: string;
  projection: { totalDim: number; seed: number };
  outputPath: string;
  batchSize: number;
}

export interface ExportSummary {
  path: string;
  n: number;
  dim: number;
  layerSegments: [string, number][];
}

const JOB_KEYS = new Set([
  "model",
  "documents",
  "layerFilter",
  "projection",
  "outputPath",
  "batchSize",
]);

export function loadJob(jobPath: string): ExportJob {
  const data = JSON.parse(fs.readFileSync(jobPath, "utf-8")) as Record<string, unknown>;
  const unknown = Object.keys(data).filter((k) => !JOB_KEYS.has(k));
  if (unknown.length > 0) {
    throw new Error(`unknown job keys ${JSON.stringify(unknown)}`);
  }
  const model = Object.assign(
    { finetuneSteps: 8, finetuneLr: 0.1 },
    data.model as object,
  ) as ModelRef;
  const documents = (data.documents ?? []) as Document[];
  return validateJob({
    model,
    documents,
    layerFilter: (data.layerFilter as string) ?? "lora",
    projection: data.projection as { totalDim: number; seed: number },
    outputPath: data.outputPath as string,
    batchSize: (data.batchSize as number) ?? Math.max(documents.length, 1),
  });
}

export function validateJob(job: ExportJob): ExportJob {
  if (!job.documents || job.documents.length === 0) {
    throw new Error("job has no documents");
  }
  const ids = job.documents.map((doc) => doc.id);
  if (ids.some((id) => !id)) {
    throw new Error("every document needs a non-empty id");
  }
  if (new Set(ids).size !== ids.length) {
    throw new Error("document ids must be unique");
  }
  for (const doc of job.documents) {
    if (typeof doc.target !== "string" || doc.target.length === 0) {
      throw new Error(`document "${doc.id}" has an empty target`);
    }
  }
  if (!Number.isInteger(job.batchSize) || job.batchSize < 1) {
    throw new Error(`batchSize must be a positive integer, got ${job.batchSize}`);
  }
  if (!job.projection || !Number.isInteger(job.projection.totalDim) || job.projection.totalDim < 1) {
    throw new Error("projection.totalDim must be a positive integer");
  }
  if (!Number.isInteger(job.projection.seed)) {
    throw new Error("projection.seed must be an integer");
  }
  if (!job.outputPath) {
    throw new Error("job needs an outputPath");
  }
  return job;
}

export function exportGradients(job: ExportJob): ExportSummary {
  validateJob(job);
  const model = createMicroLm(job.model);
  finetuneAdapters(model, job.documents, job.model.finetuneSteps, job.model.finetuneLr);
  const filter = new RegExp(job.layerFilter);
  const selected = model.adapters
    .map((layer, index) => ({ layer, index }))
    .filter(({ layer }) => filter.test(layer.name));
  if (selected.length === 0) {
    const available = model.adapters.map((l) => l.name).join(", ");
    throw new Error(
      `layer filter ${JSON.stringify(job.layerFilter)} matches no adapter layers; ` +
        `available: ${available}`,
    );
  }
  const segments: [string, number][] = selected.map(({ layer }) => [
    layer.name,
    layer.rows * layer.cols,
  ]);
  const width = segments.reduce((a, [, w]) => a + w, 0);
  const rows: Float64Array[] = [];
  for (let b = 0; b < job.documents.length; b += job.batchSize) {
    for (const doc of job.documents.slice(b, b + job.batchSize)) {
      const { grads } = adapterGradients(model, doc);
      const row = new Float64Array(width);
      let offset = 0;
      for (const { layer, index } of selected) {
        row.set(grads[index], offset);
        offset += layer.rows * layer.cols;
      }
      rows.push(row);
    }
  }
  const ids = job.documents.map((doc) => doc.id);
  const projected = projectLayers(rows, segments, job.projection.totalDim, job.projection.seed);
  normalizeRows(projected.rows, ids);
  writeGrdm(job.outputPath, {
    ids,
    layerSegments: projected.layerSegments,
    rows: projected.rows,
    normalized: true,
    extraMeta: {
      source: "gradexport",
      loss: "target_tokens_only",
      projection_seed: job.projection.seed,
      projection_total_dim: job.projection.totalDim,
    },
  });
  const dim = projected.layerSegments.reduce((a, [, w]) => a + w, 0);
  return { path: job.outputPath, n: ids.length, dim, layerSegments: projected.layerSegments };
}
