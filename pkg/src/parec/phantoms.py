"""Synthetic vascular phantoms and paired raw-data generation.

Ground truths come either from a user-supplied folder of binary vessel
masks (randomly partitioned, resized, rotated and combined) or from a
procedural generator drawing smooth random strokes, so the toolkit is
self-sufficient without redistributing any mask corpus. Each binary image
is turned into grayscale with a configured per-vessel dynamic range, the
set is normalized to unit mean power, and every record is simulated with
per-record noise realizing a target max-signal to noise-std ratio.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.interpolate import CubicSpline

from .core import (
    AcquisitionParams,
    ArrayGeometry,
    DatasetRecord,
    GridSpec,
    RawFrame,
    ValidationError,
)
from .forward import ForwardConfig, ImpulseResponse, PhotoacousticOperator, seeded_channel_noise
from .io import write_dataset

MIN_MASK_SIZE = 64

#: 8-connectivity for vessel components; diagonal strokes stay one vessel.
_LABEL_STRUCTURE = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class AugmentSpec:
    """Augmentation and scaling parameters for dataset synthesis."""

    partition_grid: tuple[int, int] = (2, 2)
    resize_range: tuple[float, float] = (0.75, 1.5)
    rotation_range: float = 180.0
    combine_count: int = 3
    vessel_dynamic_range: float = 20.0
    snr_range: tuple[float, float] = (10.0, 35.0)
    vessel_diameter_range: tuple[float, float] = (0.05e-3, 0.3e-3)
    seed: int = 0

    def __post_init__(self):
        if self.combine_count < 0:
            raise ValidationError("combine_count must be >= 0")
        if self.vessel_dynamic_range < 0:
            raise ValidationError("vessel_dynamic_range must be >= 0")
        lo, hi = self.snr_range
        if lo > hi:
            raise ValidationError("snr_range must be (low, high)")
        lo, hi = self.vessel_diameter_range
        if not (0 < lo <= hi):
            raise ValidationError("vessel_diameter_range must be positive and ordered")
        gz, gx = self.partition_grid
        if gz < 1 or gx < 1:
            raise ValidationError("partition_grid entries must be >= 1")
        if not (0 < self.resize_range[0] <= self.resize_range[1]):
            raise ValidationError("resize_range must be positive and ordered")
        if self.rotation_range < 0:
            raise ValidationError("rotation_range must be >= 0")


def ingest_masks(path) -> list[np.ndarray]:
    """Load binary vessel masks from 8-bit grayscale PGM/PNG files.

    Thresholds at 50% of full scale; rejects images smaller than 64x64.
    Files are read in sorted order for determinism.
    """
    root = Path(path)
    files = sorted(
        p for p in root.iterdir() if p.suffix.lower() in (".png", ".pgm", ".pbm")
    )
    if not files:
        raise ValidationError(f"no mask images (.png/.pgm) found in {root}")
    masks = []
    for p in files:
        try:
            with Image.open(p) as im:
                arr = np.asarray(im.convert("L"))
        except Exception as exc:
            raise ValidationError(f"unreadable mask file {p}: {exc}") from exc
        if arr.shape[0] < MIN_MASK_SIZE or arr.shape[1] < MIN_MASK_SIZE:
            raise ValidationError(
                f"mask {p.name} is {arr.shape[0]}x{arr.shape[1]}, smaller than "
                f"{MIN_MASK_SIZE}x{MIN_MASK_SIZE}"
            )
        masks.append(arr >= 128)
    return masks


def _rasterize_stroke(grid: GridSpec, rng: np.random.Generator, diameter: float) -> np.ndarray:
    """One smooth random curve of the given physical diameter, as a mask."""
    nz, nx = grid.shape
    z = grid.z_coords()
    x = grid.x_coords()
    margin_z = 0.1 * (z[-1] - z[0])
    margin_x = 0.1 * (x[-1] - x[0]) if nx > 1 else 0.0
    n_ctrl = int(rng.integers(3, 6))
    cz = rng.uniform(z[0] + margin_z, z[-1] - margin_z, n_ctrl)
    cx = rng.uniform(x[0] + margin_x, x[-1] - margin_x, n_ctrl)
    t = np.linspace(0.0, 1.0, n_ctrl)
    dense = np.linspace(0.0, 1.0, 4 * max(nz, nx))
    pz = CubicSpline(t, cz)(dense)
    px = CubicSpline(t, cx)(dense)

    curve = np.zeros((nz, nx), dtype=bool)
    iz = np.clip(np.round((pz - grid.origin[0]) / grid.z_res).astype(int), 0, nz - 1)
    ix = np.clip(np.round((px - grid.origin[1]) / grid.x_res).astype(int), 0, nx - 1)
    curve[iz, ix] = True
    dist = ndimage.distance_transform_edt(~curve, sampling=(grid.z_res, grid.x_res))
    return dist <= diameter / 2.0


def synthesize_vessels(grid: GridSpec, spec: AugmentSpec, seed: int) -> np.ndarray:
    """Procedural binary vessel image: combine_count smooth random strokes."""
    rng = np.random.default_rng(seed)
    mask = np.zeros(grid.shape, dtype=bool)
    lo, hi = spec.vessel_diameter_range
    for _ in range(spec.combine_count):
        diameter = rng.uniform(lo, hi)
        mask |= _rasterize_stroke(grid, rng, diameter)
    return mask


def _augment_from_masks(
    masks: list[np.ndarray], grid: GridSpec, spec: AugmentSpec, rng: np.random.Generator
) -> np.ndarray:
    """Partition, resize, rotate and combine corpus masks into one image."""
    nz, nx = grid.shape
    canvas = np.zeros((nz, nx), dtype=bool)
    gz, gx = spec.partition_grid
    for _ in range(spec.combine_count):
        src = masks[int(rng.integers(len(masks)))]
        tz = src.shape[0] // gz
        tx = src.shape[1] // gx
        iz = int(rng.integers(gz)) * tz
        ix = int(rng.integers(gx)) * tx
        tile = src[iz : iz + tz, ix : ix + tx].astype(np.float64)

        factor = rng.uniform(*spec.resize_range)
        zoom = (factor * nz / tile.shape[0], factor * nx / tile.shape[1])
        tile = ndimage.zoom(tile, zoom, order=1) > 0.5

        angle = rng.uniform(-spec.rotation_range, spec.rotation_range)
        tile = ndimage.rotate(tile.astype(np.float64), angle, reshape=False, order=1) > 0.5

        # paste centered, cropping or padding to the target frame
        pz = min(tile.shape[0], nz)
        px = min(tile.shape[1], nx)
        sz = (tile.shape[0] - pz) // 2
        sx = (tile.shape[1] - px) // 2
        dz = (nz - pz) // 2
        dx = (nx - px) // 2
        canvas[dz : dz + pz, dx : dx + px] |= tile[sz : sz + pz, sx : sx + px]
    return canvas


def grayscale_and_scale(
    binary: np.ndarray, spec: AugmentSpec, seed: int
) -> tuple[np.ndarray, float]:
    """Assign per-vessel intensities and draw a target SNR.

    Each connected component gets an intensity uniform in
    [10^(-DR/20), 1]; vessels are piecewise-uniform absorbers. Returns the
    grayscale image and the record's snr_db drawn from the configured range.
    """
    rng = np.random.default_rng(seed)
    labels, ncomp = ndimage.label(np.asarray(binary, dtype=bool), structure=_LABEL_STRUCTURE)
    img = np.zeros(labels.shape, dtype=np.float64)
    if ncomp:
        low = 10.0 ** (-spec.vessel_dynamic_range / 20.0)
        intensities = rng.uniform(low, 1.0, ncomp)
        img = np.where(labels > 0, intensities[np.maximum(labels - 1, 0)], 0.0)
    snr_db = float(rng.uniform(*spec.snr_range))
    return img, snr_db


def noise_std_for_snr(peak_signal: float, snr_db: float) -> float:
    """Noise std realizing max-signal/noise-std = 10^(snr_db/20)."""
    return peak_signal / 10.0 ** (snr_db / 20.0)


def record_seed(master_seed: int, index: int) -> int:
    """Stable per-record seed derived from the master seed."""
    ss = np.random.SeedSequence([int(master_seed), int(index)])
    return int(ss.generate_state(1, np.uint64)[0] >> 1)


def generate_dataset(
    count: int,
    spec: AugmentSpec,
    grid: GridSpec,
    geometry: ArrayGeometry,
    acquisition: AcquisitionParams,
    out_path,
    h: ImpulseResponse | None = None,
    forward_config: ForwardConfig = ForwardConfig(),
    master_seed: int = 0,
    masks_path=None,
) -> list[DatasetRecord]:
    """Generate ``count`` ground-truth/raw pairs and write a dataset directory.

    The whole pipeline is a pure function of (spec, master seed, count):
    per-record seeds are derived from the master seed, ground truths are
    normalized so the set has unit mean power, and each record's noise std
    realizes its drawn snr_db against the noise-free peak signal.
    """
    if count < 1:
        raise ValidationError("count must be >= 1")
    masks = ingest_masks(masks_path) if masks_path is not None else None

    seeds = [record_seed(master_seed, k) for k in range(count)]
    images = []
    snrs = []
    for seed in seeds:
        if masks is None:
            binary = synthesize_vessels(grid, spec, seed)
        else:
            binary = _augment_from_masks(masks, grid, spec, np.random.default_rng(seed))
        img, snr_db = grayscale_and_scale(binary, spec, seed)
        images.append(img)
        snrs.append(snr_db)

    mean_power = float(np.mean([np.mean(img**2) for img in images]))
    scale = 1.0 / np.sqrt(mean_power) if mean_power > 0 else 1.0
    # cast to the stored payload precision first so the recorded snr_db holds
    # exactly against the stored ground truth
    images = [(img * scale).astype(np.float32) for img in images]

    op = PhotoacousticOperator(grid, geometry, acquisition, h, forward_config)
    records = []
    for k, (img, snr_db, seed) in enumerate(zip(images, snrs, seeds)):
        clean = op.apply(img.astype(np.float64))
        peak = float(np.abs(clean).max())
        if peak > 0:
            std = noise_std_for_snr(peak, snr_db)
            raw = clean + seeded_channel_noise(clean.shape, std, seed)
        else:
            std = 0.0
            snr_db = None
            raw = clean
        records.append(
            DatasetRecord(
                ground_truth=grid.image(img),
                raw=RawFrame(raw.astype(np.float32), geometry, acquisition),
                snr_db=snr_db,
                seed=seed,
                noise_std=std,
            )
        )

    n_train = min(count, max(1, int(round(0.8 * count))))
    split = {
        "train": list(range(n_train)),
        "validation": list(range(n_train, count)),
    }
    stats = {
        "mean_power": float(
            np.mean([np.mean(r.ground_truth.data.astype(np.float64) ** 2) for r in records])
        ),
        "master_seed": int(master_seed),
    }
    write_dataset(records, out_path, split=split, stats=stats)
    return records
