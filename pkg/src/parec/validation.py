"""Input validation helpers shared across modules."""

from __future__ import annotations

import numpy as np

from .core import AcquisitionParams, ArrayGeometry, GridSpec, ValidationError


def check_finite(arr, name="array") -> np.ndarray:
    arr = np.asarray(arr)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


def check_nonnegative(arr, name="array") -> np.ndarray:
    arr = check_finite(arr, name)
    if arr.size and arr.min() < 0:
        raise ValidationError(f"{name} contains negative values")
    return arr


def check_shape(arr, shape, name="array") -> np.ndarray:
    arr = np.asarray(arr)
    if arr.shape != tuple(shape):
        raise ValidationError(f"{name} has shape {arr.shape}, expected {tuple(shape)}")
    return arr


def check_consistent_sound_speed(geometry: ArrayGeometry, acquisition: AcquisitionParams):
    """Geometry and acquisition both carry a sound speed; they must agree."""
    if not np.isclose(geometry.sound_speed, acquisition.sound_speed, rtol=1e-9):
        raise ValidationError(
            f"geometry sound speed {geometry.sound_speed} differs from "
            f"acquisition sound speed {acquisition.sound_speed}"
        )


def check_same_geometry(a: ArrayGeometry, b: ArrayGeometry, context=""):
    if a != b:
        raise ValidationError(f"geometry mismatch{': ' + context if context else ''}")


def check_same_grid(a: GridSpec, b: GridSpec, context=""):
    if a != b:
        raise ValidationError(f"grid mismatch{': ' + context if context else ''}")


def check_lateral_lattice_matches(grid: GridSpec, geometry: ArrayGeometry):
    """k-space mapping requires image columns on the element lattice."""
    if grid.shape[1] != geometry.element_count:
        raise ValidationError(
            f"grid lateral size {grid.shape[1]} must equal element count "
            f"{geometry.element_count} for k-space mapping"
        )
    if not np.isclose(grid.x_res, geometry.pitch, rtol=1e-9):
        raise ValidationError(
            f"grid x_res {grid.x_res} must equal element pitch {geometry.pitch} "
            "for k-space mapping"
        )
