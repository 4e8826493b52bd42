"""Dataset directory format: manifest.json plus headerless float32 blobs.

This format is the interchange contract with external consumers (for
instance a network trainer): a UTF-8 JSON manifest describing geometry,
acquisition, grid and per-record blob files, and one ``.bin`` blob per
array stored as raw little-endian IEEE-754 binary32 in row-major order.
Writing is deterministic: identical records produce byte-identical output.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import (
    AcquisitionParams,
    ArrayGeometry,
    DatasetRecord,
    GridSpec,
    RawFrame,
)

SCHEMA_VERSION = 1
MANIFEST_NAME = "manifest.json"


class DatasetFormatError(ValueError):
    """Manifest or blob contents violate the dataset format."""


def geometry_to_dict(g: ArrayGeometry) -> dict:
    return {
        "element_count": g.element_count,
        "pitch": g.pitch,
        "center_frequency": g.center_frequency,
        "sound_speed": g.sound_speed,
    }


def geometry_from_dict(d: dict) -> ArrayGeometry:
    return ArrayGeometry(
        element_count=int(d["element_count"]),
        pitch=float(d["pitch"]),
        center_frequency=float(d["center_frequency"]),
        sound_speed=float(d["sound_speed"]),
    )


def acquisition_to_dict(a: AcquisitionParams) -> dict:
    return {
        "sample_count": a.sample_count,
        "sampling_rate": a.sampling_rate,
        "sound_speed": a.sound_speed,
        "acquisition_delay": a.acquisition_delay,
    }


def acquisition_from_dict(d: dict) -> AcquisitionParams:
    return AcquisitionParams(
        sample_count=int(d["sample_count"]),
        sampling_rate=float(d["sampling_rate"]),
        sound_speed=float(d["sound_speed"]),
        acquisition_delay=float(d["acquisition_delay"]),
    )


def grid_to_dict(g: GridSpec) -> dict:
    return {
        "shape": list(g.shape),
        "z_res": g.z_res,
        "x_res": g.x_res,
        "origin": list(g.origin),
    }


def grid_from_dict(d: dict) -> GridSpec:
    return GridSpec(
        shape=tuple(int(n) for n in d["shape"]),
        z_res=float(d["z_res"]),
        x_res=float(d["x_res"]),
        origin=tuple(float(v) for v in d["origin"]),
    )


def write_blob(path: Path, arr: np.ndarray):
    data = np.ascontiguousarray(arr, dtype="<f4")
    path.write_bytes(data.tobytes())


def read_blob(path: Path, shape, context="") -> np.ndarray:
    expected = int(np.prod(shape)) * 4
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise DatasetFormatError(f"missing blob {path.name}{context}") from None
    if len(raw) != expected:
        raise DatasetFormatError(
            f"blob {path.name}{context} has {len(raw)} bytes, expected {expected} "
            f"for shape {tuple(shape)}"
        )
    return np.frombuffer(raw, dtype="<f4").reshape(shape).astype(np.float32)


def write_dataset(
    records: Sequence[DatasetRecord],
    path,
    split: dict | None = None,
    stats: dict | None = None,
):
    """Write records to a dataset directory, deterministically.

    Raises on empty input, inconsistent record shapes or non-finite payloads
    (non-finiteness is already rejected by the record types themselves).
    """
    records = list(records)
    if not records:
        raise DatasetFormatError("cannot write an empty dataset")
    first = records[0]
    geometry = first.raw.geometry
    acquisition = first.raw.acquisition
    grid = first.ground_truth.descriptor()
    for i, rec in enumerate(records):
        if rec.raw.geometry != geometry or rec.raw.acquisition != acquisition:
            raise DatasetFormatError(f"record {i}: geometry/acquisition differs from record 0")
        if rec.ground_truth.descriptor() != grid:
            raise DatasetFormatError(f"record {i}: image grid differs from record 0")

    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, rec in enumerate(records):
        truth_name = f"rec{i:05d}_truth.bin"
        raw_name = f"rec{i:05d}_raw.bin"
        write_blob(out / truth_name, rec.ground_truth.data)
        write_blob(out / raw_name, rec.raw.data)
        entries.append(
            {
                "index": i,
                "seed": int(rec.seed),
                "snr_db": None if rec.snr_db is None else float(rec.snr_db),
                "noise_std": float(rec.noise_std),
                "ground_truth": {"file": truth_name, "shape": list(rec.ground_truth.shape)},
                "raw": {"file": raw_name, "shape": list(rec.raw.shape)},
            }
        )
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "geometry": geometry_to_dict(geometry),
        "acquisition": acquisition_to_dict(acquisition),
        "grid": grid_to_dict(grid),
        "records": entries,
    }
    if split is not None:
        manifest["split"] = split
    if stats is not None:
        manifest["stats"] = stats
    text = json.dumps(manifest, sort_keys=True, indent=2) + "\n"
    (out / MANIFEST_NAME).write_text(text, encoding="utf-8")


def load_manifest(path) -> dict:
    manifest_path = Path(path) / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetFormatError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DatasetFormatError(
            f"unsupported schema version {manifest.get('schema_version')!r}"
        )
    return manifest


def read_dataset(path) -> list[DatasetRecord]:
    """Load all records from a dataset directory.

    Round-trips bit-exactly with :func:`write_dataset`. Dimension or blob
    errors are reported with the offending record index.
    """
    root = Path(path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise DatasetFormatError(f"missing manifest: {manifest_path}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if not manifest or not manifest.get("records"):
        return []
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DatasetFormatError(
            f"unsupported schema version {manifest.get('schema_version')!r}"
        )
    geometry = geometry_from_dict(manifest["geometry"])
    acquisition = acquisition_from_dict(manifest["acquisition"])
    grid = grid_from_dict(manifest["grid"])
    frame_shape = (acquisition.sample_count, geometry.element_count)

    records = []
    for entry in manifest["records"]:
        i = entry["index"]
        ctx = f" (record {i})"
        truth_shape = tuple(entry["ground_truth"]["shape"])
        raw_shape = tuple(entry["raw"]["shape"])
        if truth_shape != grid.shape:
            raise DatasetFormatError(
                f"record {i}: ground truth shape {truth_shape} does not match "
                f"manifest grid {grid.shape}"
            )
        if raw_shape != frame_shape:
            raise DatasetFormatError(
                f"record {i}: raw shape {raw_shape} does not match "
                f"(sample_count, element_count) = {frame_shape}"
            )
        truth = read_blob(root / entry["ground_truth"]["file"], truth_shape, ctx)
        raw = read_blob(root / entry["raw"]["file"], raw_shape, ctx)
        records.append(
            DatasetRecord(
                ground_truth=grid.image(truth),
                raw=RawFrame(raw, geometry, acquisition),
                snr_db=entry["snr_db"],
                seed=int(entry["seed"]),
                noise_std=float(entry.get("noise_std", 0.0)),
            )
        )
    return records
