/** Inference: checkpoint + dataset directory -> estimates directory. */

import * as tf from "@tensorflow/tfjs";
import { loadCheckpoint } from "./checkpoint.js";
import { loadDataset, writeEstimates } from "./dataset.js";
import { applyDelayLut, buildDelayLut, dasImage } from "./delay.js";

export async function infer(
  checkpointDir: string,
  datasetDir: string,
  outDir: string
): Promise<Float32Array[]> {
  const { model, meta } = await loadCheckpoint(checkpointDir);
  const data = loadDataset(datasetDir);
  const manifest = data.manifest;
  const [nz, nx] = manifest.grid.shape;
  const J = manifest.geometry.element_count;
  const K = manifest.acquisition.sample_count;
  if (nz !== meta.grid.shape[0] || nx !== meta.grid.shape[1]) {
    throw new Error(
      `dataset grid ${nz}x${nx} does not match checkpoint ` +
        `${meta.grid.shape[0]}x${meta.grid.shape[1]}`
    );
  }
  const channels = meta.inputChannels;
  if (meta.netSpec.mode === "upgunet_tensor" && channels !== J) {
    throw new Error(
      `checkpoint expects ${channels} channels but dataset has ${J} elements`
    );
  }

  const lut = buildDelayLut(manifest.grid, manifest.geometry, manifest.acquisition);
  const images: Float32Array[] = [];
  for (const rec of data.records) {
    const tensor = applyDelayLut(lut, rec.raw, K);
    let input =
      meta.netSpec.mode === "upgunet_tensor" ? tensor : dasImage(tensor, nz, nx, J);
    const scaled = new Float32Array(input.length);
    for (let i = 0; i < input.length; i++) scaled[i] = input[i] * meta.inputScale;
    const x = tf.tensor4d(scaled, [1, nz, nx, channels]);
    const y = model.predict(x) as tf.Tensor;
    const out = (await y.data()) as Float32Array;
    images.push(Float32Array.from(out));
    x.dispose();
    y.dispose();
  }
  writeEstimates(outDir, manifest.grid, "nn", images, datasetDir);
  return images;
}
