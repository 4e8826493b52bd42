/** Dataset manifest structures shared with the reconstruction toolkit. */

export interface Geometry {
  element_count: number;
  pitch: number;
  center_frequency: number;
  sound_speed: number;
}

export interface Acquisition {
  sample_count: number;
  sampling_rate: number;
  sound_speed: number;
  acquisition_delay: number;
}

export interface Grid {
  shape: [number, number];
  z_res: number;
  x_res: number;
  origin: [number, number];
}

export interface BlobRef {
  file: string;
  shape: number[];
}

export interface RecordEntry {
  index: number;
  seed: number;
  snr_db: number | null;
  noise_std: number;
  ground_truth: BlobRef;
  raw: BlobRef;
}

export interface Manifest {
  schema_version: number;
  geometry: Geometry;
  acquisition: Acquisition;
  grid: Grid;
  records: RecordEntry[];
  split?: { train: number[]; validation: number[] };
  stats?: Record<string, number>;
}

export type NetMode = "unet_image" | "upgunet_tensor";

export interface NetSpec {
  mode: NetMode;
  /** number of pooling levels */
  depth: number;
  baseChannels: number;
  batchNorm: boolean;
}

export interface TrainSpec {
  learningRate: number;
  batchSize: number;
  epochs: number;
  seed: number;
  /** multiply the learning rate by lrDecayFactor at this epoch (0 = never) */
  lrDecayEpoch?: number;
  lrDecayFactor?: number;
}

export const defaultNetSpec: NetSpec = {
  mode: "upgunet_tensor",
  depth: 3,
  baseChannels: 16,
  batchNorm: true,
};

export const defaultTrainSpec: TrainSpec = {
  learningRate: 0.005,
  batchSize: 8,
  epochs: 150,
  seed: 0,
};

export interface EpochLogRow {
  epoch: number;
  trainMse: number;
  valMse: number | null;
  /** fractional error |e_j - e_{j-1}| / e_j of the tracked MSE */
  fractionalError: number | null;
}
