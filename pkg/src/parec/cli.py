"""Batch command-line front end.

Subcommands: simulate, reconstruct, dataset, metrics, benchmark, lut-cache.
Every run is driven by a declarative config (TOML or JSON) plus flag
overrides, and writes the fully-resolved config next to its outputs.
Exit codes: 0 success, 2 config/validation error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import os
import platform
import sys
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

import numpy as np

from . import io as pio
from .beamform import DasConfig, DmasConfig, MvConfig, das, dmas, envelope, minimum_variance
from .core import AcquisitionParams, ArrayGeometry, GridSpec, RawFrame, ValidationError
from .delay import LutCache, apply_lut, build_lut, lut_key
from .forward import (
    ForwardConfig,
    PhotoacousticOperator,
    default_impulse_response,
    identity_impulse_response,
    load_impulse_response,
    seeded_channel_noise,
)
from .io import DatasetFormatError
from .metrics import batch_metrics
from .phantoms import AugmentSpec, generate_dataset
from .solvers import CsConfig, KspaceConfig, ista_solve, kspace_reconstruct, normalized_problem

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


class ConfigError(ValueError):
    """Run configuration is malformed; message names the offending key."""


DEFAULT_CONFIG = {
    "seed": 0,
    "jobs": 1,
    "geometry": {
        "element_count": 128,
        "pitch": 0.1e-3,
        "center_frequency": 15.63e6,
        "sound_speed": 1540.0,
    },
    "acquisition": {
        "sample_count": 2048,
        "sampling_rate": 62.5e6,
        "sound_speed": 1540.0,
        "acquisition_delay": 0.0,
    },
    "grid": {
        "shape": [512, 128],
        "z_res": 0.05e-3,
        "x_res": 0.1e-3,
        "origin": None,
    },
    "forward": {
        "use_derivative": True,
        "use_directivity": True,
        "noise_std": 0.0,
        "grueneisen_scale": 1.0,
        "impulse_response": "default",
    },
    "method": {
        "name": "das",
        "das": {"f_number": 0.5, "apply_hilbert": True},
        "mv": {
            "subarray_length": 32,
            "axial_half_width": 2,
            "diagonal_loading": 1e-2,
            "analytic": True,
            "gain_compensation": True,
            "gain_clamp": 0.02,
        },
        "dmas": {"highpass_cutoff": 6e6, "filter_order": 6},
        "ista": {
            "tv_weight": 0.02,
            "wavelet_weight": 0.005,
            "levels": 3,
            "step": "auto",
            "max_iters": 100,
            "grad_norm_tol": 1e-4,
        },
        "kspace": {"band_low": 0.0, "band_high": 0.0, "amplitude_floor": 1e-3},
    },
    "dataset": {
        "count": 10,
        "masks_path": None,
        "augment": {
            "partition_grid": [2, 2],
            "resize_range": [0.75, 1.5],
            "rotation_range": 180.0,
            "combine_count": 3,
            "vessel_dynamic_range": 20.0,
            "snr_range": [10.0, 35.0],
            "vessel_diameter_range": [0.05e-3, 0.3e-3],
        },
    },
    "metrics": {"normalize": "max", "i_max": 1.0},
    "preview": {"emit": True, "db_range": 40.0},
    "benchmark": {"repetitions": 50, "lut_cache": None},
    "io": {"input": None, "out": None, "save_tensor": False},
}


def _merge(base: dict, override: dict, path="") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and base[key]:
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where} expects a table")
            out[key] = _merge(base[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=None) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        if p.suffix.lower() == ".json":
            user = json.loads(p.read_text(encoding="utf-8"))
        else:
            user = tomllib.loads(p.read_text(encoding="utf-8"))
        cfg = _merge(cfg, user)
    for dotted, value in (overrides or {}).items():
        node = cfg
        parts = dotted.split(".")
        for part in parts[:-1]:
            if part not in node or not isinstance(node[part], dict):
                raise ConfigError(f"unknown config key: {dotted}")
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(f"unknown config key: {dotted}")
        node[parts[-1]] = value
    return cfg


def _geometry(cfg) -> ArrayGeometry:
    g = cfg["geometry"]
    return ArrayGeometry(
        element_count=int(g["element_count"]),
        pitch=float(g["pitch"]),
        center_frequency=float(g["center_frequency"]),
        sound_speed=float(g["sound_speed"]),
    )


def _acquisition(cfg) -> AcquisitionParams:
    a = cfg["acquisition"]
    return AcquisitionParams(
        sample_count=int(a["sample_count"]),
        sampling_rate=float(a["sampling_rate"]),
        sound_speed=float(a["sound_speed"]),
        acquisition_delay=float(a["acquisition_delay"]),
    )


def _grid(cfg) -> GridSpec:
    g = cfg["grid"]
    origin = g.get("origin")
    return GridSpec(
        shape=tuple(int(n) for n in g["shape"]),
        z_res=float(g["z_res"]),
        x_res=float(g["x_res"]),
        origin=None if origin is None else tuple(float(v) for v in origin),
    )


def _forward_config(cfg) -> ForwardConfig:
    f = cfg["forward"]
    return ForwardConfig(
        use_derivative=bool(f["use_derivative"]),
        use_directivity=bool(f["use_directivity"]),
        noise_std=float(f["noise_std"]),
        grueneisen_scale=float(f["grueneisen_scale"]),
    )


def _impulse_response(cfg, sampling_rate):
    spec = cfg["forward"]["impulse_response"]
    if spec in (None, "identity"):
        return identity_impulse_response(sampling_rate)
    if spec == "default":
        return default_impulse_response(sampling_rate)
    return load_impulse_response(spec, sampling_rate)


def _augment_spec(cfg) -> AugmentSpec:
    a = cfg["dataset"]["augment"]
    return AugmentSpec(
        partition_grid=tuple(int(n) for n in a["partition_grid"]),
        resize_range=tuple(float(v) for v in a["resize_range"]),
        rotation_range=float(a["rotation_range"]),
        combine_count=int(a["combine_count"]),
        vessel_dynamic_range=float(a["vessel_dynamic_range"]),
        snr_range=tuple(float(v) for v in a["snr_range"]),
        vessel_diameter_range=tuple(float(v) for v in a["vessel_diameter_range"]),
        seed=int(cfg["seed"]),
    )


def _write_resolved_config(cfg, out_dir: Path):
    out_dir.mkdir(parents=True, exist_ok=True)
    dump = copy.deepcopy(cfg)
    # the output directory is implicit (this file's location); keeping it out
    # makes reruns byte-identical regardless of where they land
    dump["io"]["out"] = None
    (out_dir / "run_config.json").write_text(
        json.dumps(dump, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )


def _require(cfg, key, value):
    if value is None:
        raise ConfigError(f"missing required config key: {key}")
    return value


def save_preview(image_data: np.ndarray, path, db_range: float = 40.0):
    """8-bit grayscale preview with log compression over ``db_range`` dB."""
    from PIL import Image

    arr = np.abs(np.asarray(image_data, dtype=np.float64))
    peak = arr.max()
    if peak <= 0:
        gray = np.zeros(arr.shape, dtype=np.uint8)
    else:
        with np.errstate(divide="ignore"):
            db = 20.0 * np.log10(arr / peak)
        db = np.clip(db, -db_range, 0.0)
        gray = np.round((db / db_range + 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(gray, mode="L").save(Path(path))


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(cfg) -> int:
    """Re-simulate raw frames for every ground truth in a dataset directory."""
    in_path = _require(cfg, "io.input", cfg["io"]["input"])
    out_path = Path(_require(cfg, "io.out", cfg["io"]["out"]))
    if not Path(in_path).exists():
        raise ConfigError(f"io.input path does not exist: {in_path}")
    records = pio.read_dataset(in_path)
    if not records:
        raise ConfigError(f"io.input dataset is empty: {in_path}")

    geometry = _geometry(cfg)
    acquisition = _acquisition(cfg)
    fwd = _forward_config(cfg)
    h = _impulse_response(cfg, acquisition.sampling_rate)
    grid = records[0].ground_truth.descriptor()
    op = PhotoacousticOperator(grid, geometry, acquisition, h, fwd)

    out_records = []
    for k, rec in enumerate(records):
        seed = int(cfg["seed"]) ^ rec.seed
        clean = op.apply(rec.ground_truth.data.astype(np.float64))
        if fwd.noise_std > 0:
            raw = clean + seeded_channel_noise(clean.shape, fwd.noise_std, seed)
            peak = float(np.abs(clean).max())
            snr_db = 20.0 * np.log10(peak / fwd.noise_std) if peak > 0 else None
        else:
            raw = clean
            snr_db = None
        out_records.append(
            pio.DatasetRecord(
                ground_truth=rec.ground_truth,
                raw=RawFrame(raw.astype(np.float32), geometry, acquisition),
                snr_db=snr_db,
                seed=seed,
                noise_std=fwd.noise_std,
            )
        )
    pio.write_dataset(out_records, out_path)
    _write_resolved_config(cfg, out_path)
    print(f"simulated {len(out_records)} frames -> {out_path}")
    return EXIT_OK


def _reconstruct_one(method, frame, grid, cfg, lut, op, h):
    m = cfg["method"]
    if method in ("das", "mv", "dmas"):
        tensor = apply_lut(lut, frame)
        if method == "das":
            d = m["das"]
            return das(tensor, DasConfig(f_number=float(d["f_number"]),
                                         apply_hilbert=bool(d["apply_hilbert"]))).data
        if method == "mv":
            v = m["mv"]
            mv_cfg = MvConfig(
                subarray_length=int(v["subarray_length"]),
                axial_half_width=int(v["axial_half_width"]),
                diagonal_loading=float(v["diagonal_loading"]),
                analytic=bool(v["analytic"]),
                gain_compensation=bool(v["gain_compensation"]),
                gain_clamp=float(v["gain_clamp"]),
            )
            img = minimum_variance(tensor, mv_cfg)
            if not mv_cfg.analytic:
                return envelope(img.data, axis=0)
            return img.data
        d = m["dmas"]
        return dmas(tensor, DmasConfig(highpass_cutoff=float(d["highpass_cutoff"]),
                                       filter_order=int(d["filter_order"]))).data
    if method == "ista":
        i = m["ista"]
        cs = CsConfig(
            tv_weight=float(i["tv_weight"]),
            wavelet_weight=float(i["wavelet_weight"]),
            levels=int(i["levels"]),
            step="auto" if i["step"] == "auto" else float(i["step"]),
            max_iters=int(i["max_iters"]),
            grad_norm_tol=float(i["grad_norm_tol"]),
        )
        op_n, y_n = normalized_problem(op, frame.data, cs.power_iterations)
        result = ista_solve(op_n, y_n, cs)
        return result.image, result
    if method == "kspace":
        k = m["kspace"]
        band_high = float(k["band_high"])
        kcfg = KspaceConfig(
            band_low=float(k["band_low"]),
            band_high=np.inf if band_high == 0 else band_high,
            amplitude_floor=float(k["amplitude_floor"]),
        )
        return kspace_reconstruct(frame, grid, kcfg).data
    raise ConfigError(f"unknown method: {method}")


def cmd_reconstruct(cfg) -> int:
    """Reconstruct every frame of a dataset directory with one method."""
    in_path = _require(cfg, "io.input", cfg["io"]["input"])
    out_path = Path(_require(cfg, "io.out", cfg["io"]["out"]))
    method = cfg["method"]["name"]
    if method not in ("das", "mv", "dmas", "ista", "kspace"):
        raise ConfigError(f"unknown method.name: {method}")
    records = pio.read_dataset(in_path)
    if not records:
        raise ConfigError(f"io.input dataset is empty: {in_path}")
    grid = _grid(cfg)
    frames = [r.raw for r in records]
    geometry = frames[0].geometry
    acquisition = frames[0].acquisition

    lut = None
    op = None
    h = _impulse_response(cfg, acquisition.sampling_rate)
    if method in ("das", "mv", "dmas"):
        cache_dir = cfg["benchmark"]["lut_cache"]
        if cache_dir:
            lut = LutCache(cache_dir).get(grid, geometry, acquisition)
        else:
            lut = build_lut(grid, geometry, acquisition)
    if method == "ista":
        op = PhotoacousticOperator(grid, geometry, acquisition, h, _forward_config(cfg))

    jobs = max(1, int(cfg["jobs"]))

    def work(frame):
        return _reconstruct_one(method, frame, grid, cfg, lut, op, h)

    if jobs == 1:
        results = [work(f) for f in frames]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, frames))

    out_path.mkdir(parents=True, exist_ok=True)
    if cfg["io"]["save_tensor"]:
        tensor_lut = lut if lut is not None else build_lut(grid, geometry, acquisition)
        for k, frame in enumerate(frames):
            tensor = apply_lut(tensor_lut, frame)
            pio.write_blob(out_path / f"rec{k:05d}_tensor.bin", tensor.data)
    entries = []
    estimates = []
    for k, res in enumerate(results):
        if isinstance(res, tuple):
            image, ista_result = res
            log_file = out_path / f"rec{k:05d}_{method}_iterations.csv"
            with log_file.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    ["iteration", "objective", "data_term", "tv_term", "wavelet_term",
                     "grad_norm"]
                )
                for row in ista_result.log:
                    writer.writerow(
                        [row.iteration, row.objective, row.data_term, row.tv_term,
                         row.wavelet_term, row.grad_norm]
                    )
        else:
            image = res
        name = f"rec{k:05d}_{method}.bin"
        pio.write_blob(out_path / name, image)
        estimates.append(np.asarray(image, dtype=np.float64))
        entry = {"index": k, "file": name, "shape": list(image.shape)}
        if cfg["preview"]["emit"]:
            preview = f"rec{k:05d}_{method}.png"
            save_preview(image, out_path / preview, float(cfg["preview"]["db_range"]))
            entry["preview"] = preview
        entries.append(entry)

    images_manifest = {
        "schema_version": pio.SCHEMA_VERSION,
        "method": method,
        "grid": pio.grid_to_dict(grid),
        "records": entries,
        "source_dataset": str(in_path),
    }
    (out_path / "images.json").write_text(
        json.dumps(images_manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )

    truths = [r.ground_truth for r in records]
    if truths[0].shape == tuple(grid.shape):
        rows, summary = batch_metrics(
            truths, estimates,
            i_max=float(cfg["metrics"]["i_max"]),
            normalize=cfg["metrics"]["normalize"],
        )
        _write_metrics_csv(out_path / "metrics.csv", rows, summary)
        print(
            f"{method}: PSNR {summary['psnr_mean']:.2f} ({summary['psnr_std']:.2f}) dB, "
            f"SSIM {summary['ssim_mean']:.3f} ({summary['ssim_std']:.3f})"
        )
    _write_resolved_config(cfg, out_path)
    print(f"reconstructed {len(results)} frames with {method} -> {out_path}")
    return EXIT_OK


def cmd_dataset(cfg) -> int:
    """Generate a synthetic dataset directory."""
    out_path = Path(_require(cfg, "io.out", cfg["io"]["out"]))
    count = int(cfg["dataset"]["count"])
    spec = _augment_spec(cfg)
    grid = _grid(cfg)
    geometry = _geometry(cfg)
    acquisition = _acquisition(cfg)
    h = _impulse_response(cfg, acquisition.sampling_rate)
    records = generate_dataset(
        count,
        spec,
        grid,
        geometry,
        acquisition,
        out_path,
        h=h,
        forward_config=_forward_config(cfg),
        master_seed=int(cfg["seed"]),
        masks_path=cfg["dataset"]["masks_path"],
    )
    if cfg["preview"]["emit"]:
        for k, rec in enumerate(records):
            save_preview(rec.ground_truth.data, out_path / f"rec{k:05d}_truth.png",
                         float(cfg["preview"]["db_range"]))
    _write_resolved_config(cfg, out_path)

    snrs = [r.snr_db for r in records if r.snr_db is not None]
    mean_power = float(
        np.mean([np.mean(r.ground_truth.data.astype(np.float64) ** 2) for r in records])
    )
    n_train = len(json.loads((out_path / "manifest.json").read_text())["split"]["train"])
    print(f"dataset: {count} records ({n_train} train / {count - n_train} validation)")
    if snrs:
        print(f"snr_db range: [{min(snrs):.2f}, {max(snrs):.2f}]")
    print(f"mean ground-truth power: {mean_power:.8f}")
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_metrics(cfg) -> int:
    """Score an estimates directory against a truth dataset."""
    truth_path = _require(cfg, "io.input", cfg["io"]["input"])
    est_path = Path(_require(cfg, "io.out", cfg["io"]["out"]))
    records = pio.read_dataset(truth_path)
    manifest_file = est_path / "images.json"
    if not manifest_file.is_file():
        raise ConfigError(f"estimates manifest not found: {manifest_file}")
    manifest = json.loads(manifest_file.read_text(encoding="utf-8"))
    estimates = [
        pio.read_blob(est_path / entry["file"], tuple(entry["shape"]))
        for entry in manifest["records"]
    ]
    truths = [r.ground_truth for r in records]
    if len(truths) != len(estimates):
        raise ConfigError(
            f"truth dataset has {len(truths)} records but estimates manifest has "
            f"{len(estimates)}"
        )
    rows, summary = batch_metrics(
        truths, estimates,
        i_max=float(cfg["metrics"]["i_max"]),
        normalize=cfg["metrics"]["normalize"],
    )
    _write_metrics_csv(est_path / "metrics.csv", rows, summary)
    print(
        f"PSNR {summary['psnr_mean']:.2f} ({summary['psnr_std']:.2f}) dB, "
        f"SSIM {summary['ssim_mean']:.3f} ({summary['ssim_std']:.3f})"
    )
    return EXIT_OK


def _write_metrics_csv(path, rows, summary):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index", "psnr_db", "ssim"])
        for row in rows:
            writer.writerow([row["index"], row["psnr_db"], row["ssim"]])
        writer.writerow(["mean", summary["psnr_mean"], summary["ssim_mean"]])
        writer.writerow(["std", summary["psnr_std"], summary["ssim_std"]])


def cmd_benchmark(cfg) -> int:
    """Time the LUT apply / beamform / post-process stages."""
    out_path = Path(_require(cfg, "io.out", cfg["io"]["out"]))
    reps = max(1, int(cfg["benchmark"]["repetitions"]))
    grid = _grid(cfg)
    geometry = _geometry(cfg)
    acquisition = _acquisition(cfg)
    cache_dir = cfg["benchmark"]["lut_cache"]
    t0 = time.perf_counter()
    if cache_dir:
        lut = LutCache(cache_dir).get(grid, geometry, acquisition)
    else:
        lut = build_lut(grid, geometry, acquisition)
    build_s = time.perf_counter() - t0

    rng = np.random.default_rng(int(cfg["seed"]))
    frame = RawFrame(
        rng.standard_normal((acquisition.sample_count, geometry.element_count)).astype(
            np.float32
        ),
        geometry,
        acquisition,
    )
    das_cfg = DasConfig(
        f_number=float(cfg["method"]["das"]["f_number"]), apply_hilbert=False
    )

    # warmup (also JIT-compiles the kernels)
    tensor = apply_lut(lut, frame)
    img = das(tensor, das_cfg)
    envelope(img.data, axis=0)

    stages = {"lut_apply": [], "beamform": [], "postprocess": [], "total": []}
    for _ in range(reps):
        t0 = time.perf_counter()
        tensor = apply_lut(lut, frame)
        t1 = time.perf_counter()
        img = das(tensor, das_cfg)
        t2 = time.perf_counter()
        envelope(img.data, axis=0)
        t3 = time.perf_counter()
        stages["lut_apply"].append(t1 - t0)
        stages["beamform"].append(t2 - t1)
        stages["postprocess"].append(t3 - t2)
        stages["total"].append(t3 - t0)

    report = {
        "grid_shape": list(grid.shape),
        "frame_shape": [acquisition.sample_count, geometry.element_count],
        "repetitions": reps,
        "lut_build_seconds": build_s,
        "machine": {
            "platform": platform.platform(),
            "processor": platform.processor(),
            "cpu_count": os.cpu_count(),
        },
        "stages": {},
    }
    out_path.mkdir(parents=True, exist_ok=True)
    lines = [f"benchmark over {reps} repetitions (seconds):"]
    with (out_path / "benchmark.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["stage", "median_s", "p95_s"])
        for name, values in stages.items():
            median = float(np.median(values))
            p95 = float(np.percentile(values, 95))
            report["stages"][name] = {"median_s": median, "p95_s": p95}
            writer.writerow([name, median, p95])
            lines.append(f"  {name:12s} median {median * 1e3:8.2f} ms   p95 {p95 * 1e3:8.2f} ms")
    (out_path / "benchmark.json").write_text(
        json.dumps(report, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    _write_resolved_config(cfg, out_path)
    print("\n".join(lines))
    print(f"wrote {out_path / 'benchmark.csv'}")
    return EXIT_OK


def cmd_lut_cache(cfg) -> int:
    """Build (or load) the LUT for the configured geometry into the cache."""
    out_path = Path(_require(cfg, "io.out", cfg["io"]["out"]))
    grid = _grid(cfg)
    geometry = _geometry(cfg)
    acquisition = _acquisition(cfg)
    cache = LutCache(out_path)
    key = lut_key(grid, geometry, acquisition)
    t0 = time.perf_counter()
    lut = cache.get(grid, geometry, acquisition)
    dt = time.perf_counter() - t0
    print(f"key: {key}")
    print(f"file: {cache.path_for(grid, geometry, acquisition)}")
    print(f"nonzeros: {lut.nonzero_count} ({dt:.2f}s)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _parse_override(value: str):
    try:
        return json.loads(value)
    except json.JSONDecodeError:
        return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="parec", description="Photoacoustic linear-array reconstruction toolkit"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="TOML or JSON run configuration")
        p.add_argument("--seed", type=int, help="master seed (overrides config)")
        p.add_argument("--jobs", type=int, help="parallel frames (overrides config)")
        p.add_argument("--out", help="output directory (overrides config io.out)")
        p.add_argument(
            "--set",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override any config key by dotted path, e.g. method.das.f_number=0.1",
        )

    p = sub.add_parser("simulate", help="ground truths -> raw frames")
    add_common(p)
    p.add_argument("--input", help="input dataset directory")

    p = sub.add_parser("reconstruct", help="raw frames -> images")
    add_common(p)
    p.add_argument("--input", help="input dataset directory")
    p.add_argument("--method", choices=["das", "mv", "dmas", "ista", "kspace"])
    p.add_argument("--lut-cache", help="LUT cache directory")
    p.add_argument("--save-tensor", action="store_true",
                   help="also write each frame's delay tensor blob")

    p = sub.add_parser("dataset", help="generate a synthetic dataset")
    add_common(p)
    p.add_argument("--count", type=int, help="number of records")
    p.add_argument("--masks", help="folder of binary vessel masks (PNG/PGM)")

    p = sub.add_parser("metrics", help="score estimates against ground truth")
    add_common(p)
    p.add_argument("--truth", help="truth dataset directory")
    p.add_argument("--estimates", help="estimates directory (from reconstruct)")
    p.add_argument("--normalize", choices=["max", "none"])

    p = sub.add_parser("benchmark", help="time the DAS pipeline stages")
    add_common(p)
    p.add_argument("--repetitions", type=int)

    p = sub.add_parser("lut-cache", help="build or inspect the LUT cache")
    add_common(p)
    return parser


def _collect_overrides(args) -> dict:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, _, value = item.partition("=")
        overrides[key.strip()] = _parse_override(value.strip())
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.jobs is not None:
        overrides["jobs"] = args.jobs
    if args.out is not None:
        overrides["io.out"] = args.out
    if getattr(args, "input", None) is not None:
        overrides["io.input"] = args.input
    if getattr(args, "method", None) is not None:
        overrides["method.name"] = args.method
    if getattr(args, "lut_cache", None) is not None:
        overrides["benchmark.lut_cache"] = args.lut_cache
    if getattr(args, "save_tensor", False):
        overrides["io.save_tensor"] = True
    if getattr(args, "count", None) is not None:
        overrides["dataset.count"] = args.count
    if getattr(args, "masks", None) is not None:
        overrides["dataset.masks_path"] = args.masks
    if getattr(args, "truth", None) is not None:
        overrides["io.input"] = args.truth
    if getattr(args, "estimates", None) is not None:
        overrides["io.out"] = args.estimates
    if getattr(args, "normalize", None) is not None:
        overrides["metrics.normalize"] = args.normalize
    if getattr(args, "repetitions", None) is not None:
        overrides["benchmark.repetitions"] = args.repetitions
    return overrides


COMMANDS = {
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "dataset": cmd_dataset,
    "metrics": cmd_metrics,
    "benchmark": cmd_benchmark,
    "lut-cache": cmd_lut_cache,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.config, _collect_overrides(args))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return COMMANDS[args.command](cfg)
    except (ConfigError, ValidationError, DatasetFormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
