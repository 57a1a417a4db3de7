export { GAMMA, MASK64, mix64, signBlock, streamKey, streamUniform, streamWords } from "./rng.js";
export { allocateProjectionDims, normalizeRows, projectLayers } from "./projection.js";
export type { ProjectedRows } from "./projection.js";
export { encodeGrdm, parseGrdm, readGrdm, writeGrdm, MAGIC, VERSION } from "./grdm.js";
export type { EncodeOptions, GrdmContainer } from "./grdm.js";
export {
  VOCAB_SIZE,
  adapterGradients,
  createMicroLm,
  documentLoss,
  finetuneAdapters,
  tokenize,
} from "./microlm.js";
export type { AdapterLayer, Document, MicroLm, MicroLmConfig } from "./microlm.js";
export { exportGradients, loadJob, validateJob } from "./exporter.js";
export type { ExportJob, ExportSummary, ModelRef } from "./exporter.js";
export { runCli } from "./cli.js";
