/** Shared helpers: drive the reconstruction toolkit CLI to produce fixtures. */

import { execFileSync } from "node:child_process";
import * as fs from "node:fs";
import * as path from "node:path";
import { fileURLToPath } from "node:url";

const HERE = path.dirname(fileURLToPath(import.meta.url));

export const TOY_OVERRIDES = [
  "--set", "geometry.element_count=8",
  "--set", "geometry.pitch=2e-4",
  "--set", "acquisition.sample_count=256",
  "--set", "grid.shape=[32, 16]",
  "--set", "grid.z_res=1e-4",
  "--set", "grid.x_res=1e-4",
  "--set", "dataset.augment.combine_count=2",
  "--set", "preview.emit=false",
];

export function runToolkit(args: string[]): string {
  return execFileSync("python3", ["-m", "parec.cli", ...args], {
    encoding: "utf-8",
    cwd: path.resolve(HERE, "..", ".."),
    timeout: 1_800_000,
  });
}

export function generateToyDataset(dir: string, count: number, seed: number): void {
  if (fs.existsSync(path.join(dir, "manifest.json"))) return;
  runToolkit([
    "dataset", "--count", String(count), "--seed", String(seed),
    "--out", dir, ...TOY_OVERRIDES,
  ]);
}

export function metricsMeanPsnr(truthDir: string, estimatesDir: string): number {
  runToolkit(["metrics", "--truth", truthDir, "--estimates", estimatesDir]);
  const csv = fs.readFileSync(path.join(estimatesDir, "metrics.csv"), "utf-8");
  const meanLine = csv
    .trim()
    .split("\n")
    .find((line) => line.startsWith("mean,"));
  if (!meanLine) throw new Error("metrics.csv has no mean row");
  return parseFloat(meanLine.split(",")[1]);
}

export const CACHE_DIR = path.resolve(HERE, ".cache");

export function cachePath(name: string): string {
  fs.mkdirSync(CACHE_DIR, { recursive: true });
  return path.join(CACHE_DIR, name);
}
