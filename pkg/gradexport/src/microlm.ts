/**
 * A deterministic character-level micro language model with low-rank
 * adapters.
 *
 * Next-token prediction over printable ASCII: a frozen embedding, one frozen
 * tanh encoder layer and a frozen linear head, with trainable low-rank
 * adapter pairs (lora_a/lora_b) bolted onto the encoder and the head:
 *
 *   e      = embed[token]
 *   h      = tanh(encoderW e + encoder.lora_b (encoder.lora_a e))
 *   logits = headW h + head.lora_b (head.lora_a h)
 *
 * Only adapter parameters are trainable and only their gradients are
 * exported. Loss is the mean negative log-likelihood over target tokens
 * only (prompt tokens condition but contribute no loss terms). All weights
 * come from counter-based streams, so the config pins every parameter.
 */

import { streamKey, streamUniform } from "./rng.js";

export const VOCAB_SIZE = 96; // id 0 = out-of-range, 1..95 = ASCII 32..126

export interface MicroLmConfig {
  embedDim: number;
  hiddenDim: number;
  loraRank: number;
  seed: number;
}

export interface AdapterLayer {
  name: string;
  rows: number;
  cols: number;
  values: Float64Array;
}

export interface MicroLm {
  config: MicroLmConfig;
  embed: Float64Array; // VOCAB_SIZE x embedDim
  encoderW: Float64Array; // hiddenDim x embedDim
  headW: Float64Array; // VOCAB_SIZE x hiddenDim
  adapters: AdapterLayer[];
  frozenLayerNames: string[];
}

export interface Document {
  id: string;
  prompt: string;
  target: string;
}

export function tokenize(text: string): number[] {
  const ids: number[] = [];
  for (const ch of text) {
    const code = ch.codePointAt(0) ?? 0;
    ids.push(code >= 32 && code < 127 ? code - 31 : 0);
  }
  return ids;
}

function uniformTensor(seed: number, stream: number, size: number, scale: number): Float64Array {
  const u = streamUniform(streamKey(seed, stream), 0, size);
  const out = new Float64Array(size);
  for (let i = 0; i < size; i++) {
    out[i] = (2 * u[i] - 1) * scale;
  }
  return out;
}

export function createMicroLm(config: MicroLmConfig): MicroLm {
  const { embedDim: d, hiddenDim: h, loraRank: r, seed } = config;
  if (!Number.isInteger(d) || d < 1 || !Number.isInteger(h) || h < 1) {
    throw new Error(`embedDim and hiddenDim must be positive integers, got ${d}, ${h}`);
  }
  if (!Number.isInteger(r) || r < 1 || r > Math.min(d, h)) {
    throw new Error(`loraRank must be in [1, min(embedDim, hiddenDim)], got ${r}`);
  }
  // lora_b starts at zero (the standard low-rank init: adapters are a no-op
  // until fine-tuned), so exporting gradients requires a fine-tuned model.
  const adapters: AdapterLayer[] = [
    { name: "encoder.lora_a", rows: r, cols: d, values: uniformTensor(seed, 3, r * d, 1 / Math.sqrt(d)) },
    { name: "encoder.lora_b", rows: h, cols: r, values: new Float64Array(h * r) },
    { name: "head.lora_a", rows: r, cols: h, values: uniformTensor(seed, 4, r * h, 1 / Math.sqrt(h)) },
    { name: "head.lora_b", rows: VOCAB_SIZE, cols: r, values: new Float64Array(VOCAB_SIZE * r) },
  ];
  return {
    config,
    embed: uniformTensor(seed, 0, VOCAB_SIZE * d, 1.0),
    encoderW: uniformTensor(seed, 1, h * d, 1 / Math.sqrt(d)),
    headW: uniformTensor(seed, 2, VOCAB_SIZE * h, 1 / Math.sqrt(h)),
    adapters,
    frozenLayerNames: ["embed.weight", "encoder.weight", "head.weight"],
  };
}

/** y += M x for a rows x cols row-major matrix. */
function matVecInto(y: Float64Array, M: Float64Array, x: Float64Array, rows: number, cols: number): void {
  for (let i = 0; i < rows; i++) {
    let acc = 0;
    const base = i * cols;
    for (let q = 0; q < cols; q++) {
      acc += M[base + q] * x[q];
    }
    y[i] += acc;
  }
}

/** y += M^T x for a rows x cols row-major matrix (x has rows entries). */
function matTVecInto(y: Float64Array, M: Float64Array, x: Float64Array, rows: number, cols: number): void {
  for (let i = 0; i < rows; i++) {
    const xi = x[i];
    if (xi === 0) {
      continue;
    }
    const base = i * cols;
    for (let q = 0; q < cols; q++) {
      y[q] += M[base + q] * xi;
    }
  }
}

interface StepState {
  e: Float64Array;
  aE: Float64Array;
  h: Float64Array;
  aH: Float64Array;
  logProbs: Float64Array;
}

function forwardToken(model: MicroLm, token: number): StepState {
  const { embedDim: d, hiddenDim: hd, loraRank: r } = model.config;
  const [encA, encB, headA, headB] = model.adapters;
  const e = model.embed.subarray(token * d, (token + 1) * d);
  const aE = new Float64Array(r);
  matVecInto(aE, encA.values, e, r, d);
  const h = new Float64Array(hd);
  matVecInto(h, model.encoderW, e, hd, d);
  matVecInto(h, encB.values, aE, hd, r);
  for (let i = 0; i < hd; i++) {
    h[i] = Math.tanh(h[i]);
  }
  const aH = new Float64Array(r);
  matVecInto(aH, headA.values, h, r, hd);
  const logits = new Float64Array(VOCAB_SIZE);
  matVecInto(logits, model.headW, h, VOCAB_SIZE, hd);
  matVecInto(logits, headB.values, aH, VOCAB_SIZE, r);
  let max = -Infinity;
  for (let v = 0; v < VOCAB_SIZE; v++) {
    max = Math.max(max, logits[v]);
  }
  let z = 0;
  for (let v = 0; v < VOCAB_SIZE; v++) {
    z += Math.exp(logits[v] - max);
  }
  const logZ = max + Math.log(z);
  const logProbs = logits;
  for (let v = 0; v < VOCAB_SIZE; v++) {
    logProbs[v] -= logZ;
  }
  return { e: new Float64Array(e), aE, h, aH, logProbs };
}

function lossPositions(doc: Document): { tokens: number[]; first: number } {
  const promptTokens = tokenize(doc.prompt);
  const tokens = promptTokens.concat(tokenize(doc.target));
  // position t predicts tokens[t+1]; only predictions landing inside the
  // target region carry loss
  const first = Math.max(promptTokens.length - 1, 0);
  if (tokens.length < 2 || first > tokens.length - 2) {
    throw new Error(`document "${doc.id}" has no predictable target token`);
  }
  return { tokens, first };
}

export function documentLoss(model: MicroLm, doc: Document): number {
  const { tokens, first } = lossPositions(doc);
  let loss = 0;
  for (let t = first; t <= tokens.length - 2; t++) {
    loss -= forwardToken(model, tokens[t]).logProbs[tokens[t + 1]];
  }
  return loss / (tokens.length - 1 - first);
}

export interface AdapterGradients {
  loss: number;
  grads: Float64Array[]; // aligned with model.adapters, flattened row-major
}

/** Gradient of the document loss with respect to each adapter layer. */
export function adapterGradients(model: MicroLm, doc: Document): AdapterGradients {
  const { embedDim: d, hiddenDim: hd, loraRank: r } = model.config;
  const [, encB, headA, headB] = model.adapters;
  const { tokens, first } = lossPositions(doc);
  const grads = model.adapters.map((l) => new Float64Array(l.rows * l.cols));
  const [gEncA, gEncB, gHeadA, gHeadB] = grads;
  const count = tokens.length - 1 - first;
  let loss = 0;
  const g = new Float64Array(VOCAB_SIZE);
  const tmpR = new Float64Array(r);
  const dh = new Float64Array(hd);
  for (let t = first; t <= tokens.length - 2; t++) {
    const next = tokens[t + 1];
    const state = forwardToken(model, tokens[t]);
    loss -= state.logProbs[next];
    for (let v = 0; v < VOCAB_SIZE; v++) {
      g[v] = Math.exp(state.logProbs[v]) / count;
    }
    g[next] -= 1 / count;
    // head adapters: logits += headB (headA h)
    for (let v = 0; v < VOCAB_SIZE; v++) {
      const gv = g[v];
      const base = v * r;
      for (let j = 0; j < r; j++) {
        gHeadB[base + j] += gv * state.aH[j];
      }
    }
    tmpR.fill(0);
    matTVecInto(tmpR, headB.values, g, VOCAB_SIZE, r);
    for (let j = 0; j < r; j++) {
      const tj = tmpR[j];
      const base = j * hd;
      for (let i = 0; i < hd; i++) {
        gHeadA[base + i] += tj * state.h[i];
      }
    }
    dh.fill(0);
    matTVecInto(dh, model.headW, g, VOCAB_SIZE, hd);
    matTVecInto(dh, headA.values, tmpR, r, hd);
    for (let i = 0; i < hd; i++) {
      dh[i] *= 1 - state.h[i] * state.h[i];
    }
    // encoder adapters: pre += encB (encA e)
    for (let i = 0; i < hd; i++) {
      const di = dh[i];
      const base = i * r;
      for (let j = 0; j < r; j++) {
        gEncB[base + j] += di * state.aE[j];
      }
    }
    tmpR.fill(0);
    matTVecInto(tmpR, encB.values, dh, hd, r);
    for (let j = 0; j < r; j++) {
      const tj = tmpR[j];
      const base = j * d;
      for (let q = 0; q < d; q++) {
        gEncA[base + q] += tj * state.e[q];
      }
    }
  }
  return { loss: loss / count, grads };
}

/**
 * Full-batch gradient descent on the adapter parameters only. Returns the
 * mean document loss before each step (so callers can see it decrease).
 */
export function finetuneAdapters(
  model: MicroLm,
  docs: Document[],
  steps: number,
  lr: number,
): number[] {
  if (docs.length === 0) {
    throw new Error("cannot fine-tune on an empty document list");
  }
  const trace: number[] = [];
  for (let step = 0; step < steps; step++) {
    const acc = model.adapters.map((l) => new Float64Array(l.rows * l.cols));
    let loss = 0;
    for (const doc of docs) {
      const { loss: docLoss, grads } = adapterGradients(model, doc);
      loss += docLoss;
      for (let l = 0; l < acc.length; l++) {
        const a = acc[l];
        const gl = grads[l];
        for (let i = 0; i < a.length; i++) {
          a[i] += gl[i];
        }
      }
    }
    trace.push(loss / docs.length);
    for (let l = 0; l < acc.length; l++) {
      const values = model.adapters[l].values;
      const a = acc[l];
      const scale = lr / docs.length;
      for (let i = 0; i < values.length; i++) {
        values[i] -= scale * a[i];
      }
    }
  }
  return trace;
}
