/** Supervised training on dataset directories. */

import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import { loadDataset, LoadedDataset } from "./dataset.js";
import { applyDelayLut, buildDelayLut, dasImage, DelayLut } from "./delay.js";
import { buildModel, inputChannelCount } from "./model.js";
import { saveCheckpoint, CheckpointMeta } from "./checkpoint.js";
import type { EpochLogRow, NetSpec, TrainSpec } from "./types.js";

function mulberry32(seed: number): () => number {
  let a = seed >>> 0;
  return () => {
    a |= 0;
    a = (a + 0x6d2b79f5) | 0;
    let t = Math.imul(a ^ (a >>> 15), 1 | a);
    t = (t + Math.imul(t ^ (t >>> 7), 61 | t)) ^ t;
    return ((t ^ (t >>> 14)) >>> 0) / 4294967296;
  };
}

function shuffled(n: number, rand: () => number): number[] {
  const idx = Array.from({ length: n }, (_, i) => i);
  for (let i = n - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [idx[i], idx[j]] = [idx[j], idx[i]];
  }
  return idx;
}

export interface PreparedData {
  inputs: Float32Array[];
  targets: Float32Array[];
  height: number;
  width: number;
  channels: number;
  inputScale: number;
}

export function prepareInputs(
  data: LoadedDataset,
  mode: NetSpec["mode"],
  lut?: DelayLut,
  inputScale?: number
): PreparedData {
  const { manifest, records } = data;
  const [nz, nx] = manifest.grid.shape;
  const J = manifest.geometry.element_count;
  const K = manifest.acquisition.sample_count;
  const theLut =
    lut ?? buildDelayLut(manifest.grid, manifest.geometry, manifest.acquisition);

  const inputs: Float32Array[] = [];
  const targets: Float32Array[] = [];
  for (const rec of records) {
    const tensor = applyDelayLut(theLut, rec.raw, K);
    inputs.push(mode === "upgunet_tensor" ? tensor : dasImage(tensor, nz, nx, J));
    targets.push(rec.truth);
  }
  let scale = inputScale ?? 0;
  if (!inputScale) {
    let sumSq = 0;
    let count = 0;
    for (const arr of inputs) {
      for (let i = 0; i < arr.length; i++) sumSq += arr[i] * arr[i];
      count += arr.length;
    }
    const rms = Math.sqrt(sumSq / Math.max(count, 1));
    scale = rms > 0 ? 1 / rms : 1;
  }
  for (const arr of inputs) {
    for (let i = 0; i < arr.length; i++) arr[i] *= scale;
  }
  return {
    inputs,
    targets,
    height: nz,
    width: nx,
    channels: mode === "upgunet_tensor" ? J : 1,
    inputScale: scale,
  };
}

function stack(
  arrays: Float32Array[],
  indices: number[],
  h: number,
  w: number,
  c: number
): tf.Tensor4D {
  const out = new Float32Array(indices.length * h * w * c);
  indices.forEach((idx, k) => out.set(arrays[idx], k * h * w * c));
  return tf.tensor4d(out, [indices.length, h, w, c]);
}

export interface TrainResult {
  log: EpochLogRow[];
  checkpointDir: string;
}

export async function train(
  datasetDir: string,
  checkpointDir: string,
  netSpec: NetSpec,
  trainSpec: TrainSpec,
  quiet = false
): Promise<TrainResult> {
  const data = loadDataset(datasetDir);
  const manifest = data.manifest;
  const prepared = prepareInputs(data, netSpec.mode);
  const n = prepared.inputs.length;
  const split = manifest.split ?? { train: data.records.map((_, i) => i), validation: [] };
  const posOf = new Map(data.records.map((r, pos) => [r.entry.index, pos]));
  const trainIdx = split.train.map((i) => posOf.get(i)!).filter((v) => v !== undefined);
  const valIdx = split.validation
    .map((i) => posOf.get(i)!)
    .filter((v) => v !== undefined);
  if (trainIdx.length === 0) {
    throw new Error("dataset split contains no training records");
  }

  const { height, width, channels, inputScale } = prepared;
  const model = buildModel(netSpec, height, width, channels, trainSpec.seed);
  let learningRate = trainSpec.learningRate;
  model.compile({
    optimizer: tf.train.sgd(learningRate),
    loss: "meanSquaredError",
  });

  const xsVal = valIdx.length
    ? stack(prepared.inputs, valIdx, height, width, channels)
    : null;
  const ysVal = valIdx.length
    ? stack(prepared.targets, valIdx, height, width, 1)
    : null;

  const rand = mulberry32(trainSpec.seed + 1);
  const log: EpochLogRow[] = [];
  let previousTracked: number | null = null;
  for (let epoch = 1; epoch <= trainSpec.epochs; epoch++) {
    if (
      trainSpec.lrDecayEpoch &&
      trainSpec.lrDecayFactor &&
      epoch === trainSpec.lrDecayEpoch
    ) {
      learningRate *= trainSpec.lrDecayFactor;
      model.compile({
        optimizer: tf.train.sgd(learningRate),
        loss: "meanSquaredError",
      });
    }
    const order = shuffled(trainIdx.length, rand).map((i) => trainIdx[i]);
    const xs = stack(prepared.inputs, order, height, width, channels);
    const ys = stack(prepared.targets, order, height, width, 1);
    const history = await model.fit(xs, ys, {
      epochs: 1,
      batchSize: trainSpec.batchSize,
      shuffle: false,
      verbose: 0,
    });
    xs.dispose();
    ys.dispose();
    const trainMse = history.history.loss[0] as number;

    let valMse: number | null = null;
    if (xsVal && ysVal) {
      const evalOut = model.evaluate(xsVal, ysVal, {
        batchSize: trainSpec.batchSize,
      }) as tf.Scalar;
      valMse = (await evalOut.data())[0];
      evalOut.dispose();
    }
    const tracked = valMse ?? trainMse;
    const fractionalError =
      previousTracked === null || tracked === 0
        ? null
        : Math.abs(tracked - previousTracked) / tracked;
    previousTracked = tracked;
    log.push({ epoch, trainMse, valMse, fractionalError });
    if (!quiet && (epoch === 1 || epoch % 10 === 0 || epoch === trainSpec.epochs)) {
      const fe = fractionalError === null ? "-" : fractionalError.toExponential(2);
      console.log(
        `epoch ${epoch}/${trainSpec.epochs} train ${trainMse.toExponential(4)} ` +
          `val ${valMse === null ? "-" : valMse.toExponential(4)} frac ${fe}`
      );
    }
  }
  xsVal?.dispose();
  ysVal?.dispose();

  const meta: CheckpointMeta = {
    netSpec,
    grid: manifest.grid,
    geometry: manifest.geometry,
    acquisition: manifest.acquisition,
    inputChannels: channels,
    inputScale,
  };
  await saveCheckpoint(checkpointDir, model, meta);
  const csv = ["epoch,train_mse,val_mse,fractional_error"]
    .concat(
      log.map(
        (r) =>
          `${r.epoch},${r.trainMse},${r.valMse ?? ""},${r.fractionalError ?? ""}`
      )
    )
    .join("\n");
  fs.writeFileSync(path.join(checkpointDir, "epochs.csv"), csv + "\n");
  return { log, checkpointDir };
}
