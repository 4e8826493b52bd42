/** Self-describing model checkpoints on the local filesystem. */

import * as fs from "node:fs";
import * as path from "node:path";
import * as tf from "@tensorflow/tfjs";
import type { Grid, Geometry, Acquisition, NetSpec } from "./types.js";

export interface CheckpointMeta {
  netSpec: NetSpec;
  grid: Grid;
  geometry: Geometry;
  acquisition: Acquisition;
  inputChannels: number;
  /** per-channel normalization scale applied to network inputs */
  inputScale: number;
}

export async function saveCheckpoint(
  dir: string,
  model: tf.LayersModel,
  meta: CheckpointMeta
): Promise<void> {
  fs.mkdirSync(dir, { recursive: true });
  const artifacts = await new Promise<tf.io.ModelArtifacts>((resolve, reject) => {
    model
      .save(
        tf.io.withSaveHandler(async (a) => {
          resolve(a);
          return { modelArtifactsInfo: { dateSaved: new Date(), modelTopologyType: "JSON" } };
        })
      )
      .catch(reject);
  });
  const weights = Buffer.from(artifacts.weightData as ArrayBuffer);
  fs.writeFileSync(path.join(dir, "weights.bin"), weights);
  fs.writeFileSync(
    path.join(dir, "model.json"),
    JSON.stringify(
      {
        modelTopology: artifacts.modelTopology,
        weightSpecs: artifacts.weightSpecs,
        format: artifacts.format,
        generatedBy: artifacts.generatedBy,
        convertedBy: null,
      },
      null,
      2
    )
  );
  fs.writeFileSync(path.join(dir, "meta.json"), JSON.stringify(meta, null, 2));
}

export async function loadCheckpoint(
  dir: string
): Promise<{ model: tf.LayersModel; meta: CheckpointMeta }> {
  const spec = JSON.parse(fs.readFileSync(path.join(dir, "model.json"), "utf-8"));
  const weights = fs.readFileSync(path.join(dir, "weights.bin"));
  const artifacts: tf.io.ModelArtifacts = {
    modelTopology: spec.modelTopology,
    weightSpecs: spec.weightSpecs,
    weightData: weights.buffer.slice(
      weights.byteOffset,
      weights.byteOffset + weights.byteLength
    ),
    format: spec.format,
    generatedBy: spec.generatedBy,
  };
  const model = await tf.loadLayersModel(tf.io.fromMemory(artifacts));
  const meta = JSON.parse(
    fs.readFileSync(path.join(dir, "meta.json"), "utf-8")
  ) as CheckpointMeta;
  return { model, meta };
}
