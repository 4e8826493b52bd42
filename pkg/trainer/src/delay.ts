/** Delay transform: raw channel data to the 3-D network input tensor.
 *
 * Re-implements the toolkit's lookup-table formula from the manifest
 * parameters: sample position (|r - r'_j| / v_s - t0) * f_s with two-tap
 * linear interpolation, zeros outside the recording window. Verified against
 * toolkit-emitted golden tensors in the tests.
 */

import type { Acquisition, Geometry, Grid } from "./types.js";

export interface DelayLut {
  nz: number;
  nx: number;
  channels: number;
  /** first tap per (pixel, channel), -1 when out of range; length nz*nx*J */
  k0: Int32Array;
  /** weight of the second tap */
  w1: Float64Array;
}

export function elementPositions(geometry: Geometry): Float64Array {
  const J = geometry.element_count;
  const out = new Float64Array(J);
  for (let j = 0; j < J; j++) {
    out[j] = geometry.pitch * (j - (J - 1) / 2);
  }
  return out;
}

export function buildDelayLut(
  grid: Grid,
  geometry: Geometry,
  acquisition: Acquisition
): DelayLut {
  const [nz, nx] = grid.shape;
  const J = geometry.element_count;
  const K = acquisition.sample_count;
  const positions = elementPositions(geometry);
  const k0 = new Int32Array(nz * nx * J);
  const w1 = new Float64Array(nz * nx * J);
  let m = 0;
  for (let iz = 0; iz < nz; iz++) {
    const z = grid.origin[0] + iz * grid.z_res;
    for (let ix = 0; ix < nx; ix++) {
      const x = grid.origin[1] + ix * grid.x_res;
      for (let j = 0; j < J; j++) {
        const dx = x - positions[j];
        const dist = Math.sqrt(z * z + dx * dx);
        const p =
          (dist / acquisition.sound_speed - acquisition.acquisition_delay) *
          acquisition.sampling_rate;
        if (p >= 0 && p <= K - 1) {
          let base = Math.floor(p);
          if (base > K - 2) base = K - 2;
          k0[m] = base;
          w1[m] = p - base;
        } else {
          k0[m] = -1;
          w1[m] = 0;
        }
        m++;
      }
    }
  }
  return { nz, nx, channels: J, k0, w1 };
}

/** Apply the LUT: raw (K, J) row-major -> tensor (nz, nx, J) row-major. */
export function applyDelayLut(lut: DelayLut, raw: Float32Array, sampleCount: number): Float32Array {
  const { nz, nx, channels: J, k0, w1 } = lut;
  if (raw.length !== sampleCount * J) {
    throw new Error(`raw length ${raw.length} does not match K*J = ${sampleCount * J}`);
  }
  const out = new Float32Array(nz * nx * J);
  for (let m = 0; m < out.length; m++) {
    const base = k0[m];
    if (base < 0) continue;
    const j = m % J;
    const a = raw[base * J + j];
    const b = raw[(base + 1) * J + j];
    out[m] = a + w1[m] * (b - a);
  }
  return out;
}

/** Plain unapodized delay-and-sum (no envelope): the single-channel net input. */
export function dasImage(tensor: Float32Array, nz: number, nx: number, J: number): Float32Array {
  const out = new Float32Array(nz * nx);
  for (let p = 0; p < nz * nx; p++) {
    let acc = 0;
    const base = p * J;
    for (let j = 0; j < J; j++) acc += tensor[base + j];
    out[p] = acc / J;
  }
  return out;
}
