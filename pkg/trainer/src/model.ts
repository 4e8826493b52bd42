/** Encoder-decoder reconstruction network.
 *
 * Each level applies two (3x3 conv -> ReLU -> batch norm) blocks, halves the
 * spatial dims with 2x2 max-pooling on the way down and restores them with
 * 2x2 up-convolution plus skip concatenation on the way up; the head is a
 * linear 1x1 conv. Input is either the J-channel delay tensor or the
 * single-channel delay-and-sum image.
 */

import * as tf from "@tensorflow/tfjs";
import type { NetSpec } from "./types.js";

function convBlock(
  x: tf.SymbolicTensor,
  filters: number,
  batchNorm: boolean,
  seedBox: { seed: number }
): tf.SymbolicTensor {
  let out = tf.layers
    .conv2d({
      filters,
      kernelSize: 3,
      padding: "same",
      activation: "relu",
      kernelInitializer: tf.initializers.glorotUniform({ seed: seedBox.seed++ }),
    })
    .apply(x) as tf.SymbolicTensor;
  if (batchNorm) {
    out = tf.layers.batchNormalization().apply(out) as tf.SymbolicTensor;
  }
  return out;
}

export function buildModel(
  spec: NetSpec,
  height: number,
  width: number,
  inputChannels: number,
  seed = 0
): tf.LayersModel {
  const div = 2 ** spec.depth;
  if (height % div !== 0 || width % div !== 0) {
    throw new Error(
      `input ${height}x${width} not divisible by 2^depth = ${div}`
    );
  }
  const seedBox = { seed: seed + 1 };
  const input = tf.input({ shape: [height, width, inputChannels] });
  let x = input as tf.SymbolicTensor;
  const skips: tf.SymbolicTensor[] = [];
  let channels = spec.baseChannels;
  for (let level = 0; level < spec.depth; level++) {
    x = convBlock(x, channels, spec.batchNorm, seedBox);
    x = convBlock(x, channels, spec.batchNorm, seedBox);
    skips.push(x);
    x = tf.layers.maxPooling2d({ poolSize: 2 }).apply(x) as tf.SymbolicTensor;
    channels *= 2;
  }
  x = convBlock(x, channels, spec.batchNorm, seedBox);
  x = convBlock(x, channels, spec.batchNorm, seedBox);
  for (let level = spec.depth - 1; level >= 0; level--) {
    channels = Math.floor(channels / 2);
    x = tf.layers.upSampling2d({ size: [2, 2] }).apply(x) as tf.SymbolicTensor;
    x = tf.layers
      .conv2d({
        filters: channels,
        kernelSize: 2,
        padding: "same",
        kernelInitializer: tf.initializers.glorotUniform({ seed: seedBox.seed++ }),
      })
      .apply(x) as tf.SymbolicTensor;
    x = tf.layers.concatenate().apply([x, skips[level]]) as tf.SymbolicTensor;
    x = convBlock(x, channels, spec.batchNorm, seedBox);
    x = convBlock(x, channels, spec.batchNorm, seedBox);
  }
  const output = tf.layers
    .conv2d({
      filters: 1,
      kernelSize: 1,
      padding: "same",
      kernelInitializer: tf.initializers.glorotUniform({ seed: seedBox.seed++ }),
    })
    .apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: input, outputs: output as tf.SymbolicTensor });
}

export function inputChannelCount(spec: NetSpec, elementCount: number): number {
  return spec.mode === "upgunet_tensor" ? elementCount : 1;
}
