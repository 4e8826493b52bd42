/** Reading the dataset directory format and writing estimates directories. */

import * as fs from "node:fs";
import * as path from "node:path";
import type { Grid, Manifest, RecordEntry } from "./types.js";

export interface LoadedRecord {
  entry: RecordEntry;
  /** row-major (Nz, Nx) */
  truth: Float32Array;
  /** row-major (K, J) */
  raw: Float32Array;
}

export interface LoadedDataset {
  manifest: Manifest;
  records: LoadedRecord[];
}

export function readBlob(file: string, expectedLength: number): Float32Array {
  const buf = fs.readFileSync(file);
  if (buf.byteLength !== expectedLength * 4) {
    throw new Error(
      `blob ${file} has ${buf.byteLength} bytes, expected ${expectedLength * 4}`
    );
  }
  // copy into an aligned Float32Array (Buffer may be offset)
  const out = new Float32Array(expectedLength);
  for (let i = 0; i < expectedLength; i++) {
    out[i] = buf.readFloatLE(4 * i);
  }
  return out;
}

export function writeBlob(file: string, data: Float32Array): void {
  const buf = Buffer.alloc(data.length * 4);
  for (let i = 0; i < data.length; i++) {
    buf.writeFloatLE(data[i], 4 * i);
  }
  fs.writeFileSync(file, buf);
}

export function loadManifest(dir: string): Manifest {
  const file = path.join(dir, "manifest.json");
  if (!fs.existsSync(file)) {
    throw new Error(`missing manifest: ${file}`);
  }
  return JSON.parse(fs.readFileSync(file, "utf-8")) as Manifest;
}

export function loadDataset(dir: string, indices?: number[]): LoadedDataset {
  const manifest = loadManifest(dir);
  const [nz, nx] = manifest.grid.shape;
  const K = manifest.acquisition.sample_count;
  const J = manifest.geometry.element_count;
  const wanted = indices ?? manifest.records.map((r) => r.index);
  const byIndex = new Map(manifest.records.map((r) => [r.index, r]));
  const records: LoadedRecord[] = [];
  for (const idx of wanted) {
    const entry = byIndex.get(idx);
    if (!entry) {
      throw new Error(`record ${idx} not present in manifest`);
    }
    records.push({
      entry,
      truth: readBlob(path.join(dir, entry.ground_truth.file), nz * nx),
      raw: readBlob(path.join(dir, entry.raw.file), K * J),
    });
  }
  return { manifest, records };
}

/** Write reconstructed images in the estimates layout the metrics CLI reads. */
export function writeEstimates(
  dir: string,
  grid: Grid,
  method: string,
  images: Float32Array[],
  sourceDataset: string
): void {
  fs.mkdirSync(dir, { recursive: true });
  const recordsOut = [] as Array<Record<string, unknown>>;
  images.forEach((img, k) => {
    const name = `rec${String(k).padStart(5, "0")}_${method}.bin`;
    writeBlob(path.join(dir, name), img);
    recordsOut.push({ index: k, file: name, shape: [grid.shape[0], grid.shape[1]] });
  });
  const manifest = {
    schema_version: 1,
    method,
    grid,
    records: recordsOut,
    source_dataset: sourceDataset,
  };
  fs.writeFileSync(
    path.join(dir, "images.json"),
    JSON.stringify(manifest, null, 2) + "\n"
  );
}
