"""Sparse lookup-table operator turning raw channel data into delay tensors.

For every image pixel and every element the LUT stores the fractional
arrival-time sample with two-tap linear-interpolation weights, so applying
it costs O(2 * Nz * Nx * J) gathers. Out-of-range delays store no taps and
yield zeros. The LUT is immutable after build and safe to share.
"""

from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

# The default TBB layer on some hosts is too old and warns on import; OpenMP
# behaves identically for these kernels.
os.environ.setdefault("NUMBA_THREADING_LAYER", "omp")

import numba
import numpy as np

from .core import (
    AcquisitionParams,
    ArrayGeometry,
    DelayTensor,
    GridSpec,
    RawFrame,
    ValidationError,
)
from .forward import _delay_positions, _interp_taps
from .io import acquisition_to_dict, geometry_to_dict, grid_to_dict


@numba.njit(parallel=True, cache=True)
def _gather_channels(y_cm, k0, w1, valid, out):
    # y_cm: (J, K) channel-major frame; k0/w1/valid/out: (J, P)
    J, P = k0.shape
    for j in numba.prange(J):
        yj = y_cm[j]
        for i in range(P):
            if valid[j, i]:
                k = k0[j, i]
                a = yj[k]
                out[j, i] = a + w1[j, i] * (yj[k + 1] - a)
            else:
                out[j, i] = 0.0


@numba.njit(parallel=True, cache=True)
def _transpose_to_pixel_major(src, dst):
    # src: (J, P) -> dst: (P, J); blocked over pixels for cache locality
    J, P = src.shape
    block = 1024
    nblocks = (P + block - 1) // block
    for b in numba.prange(nblocks):
        lo = b * block
        hi = min(lo + block, P)
        for j in range(J):
            row = src[j]
            for i in range(lo, hi):
                dst[i, j] = row[i]


class DelayLut:
    """Immutable delay lookup table for one (grid, geometry, acquisition)."""

    #: Nonzeros per operator column; the sparsity bound behind the fast apply.
    max_nonzeros_per_column = 2

    def __init__(self, grid: GridSpec, geometry: ArrayGeometry, acquisition: AcquisitionParams,
                 k0, w1, valid):
        self.grid = grid
        self.geometry = geometry
        self.acquisition = acquisition
        # channel-major internal layout: (J, Nz*Nx)
        self._k0 = np.ascontiguousarray(k0, dtype=np.int32)
        self._w1 = np.ascontiguousarray(w1, dtype=np.float64)
        self._valid = np.ascontiguousarray(valid, dtype=np.bool_)
        for arr in (self._k0, self._w1, self._valid):
            arr.flags.writeable = False
        self._w1_f32 = None

    # -- inspection --------------------------------------------------------

    @property
    def shape(self):
        nz, nx = self.grid.shape
        return (nz, nx, self.geometry.element_count)

    def _pixel_major(self, arr):
        J = self.geometry.element_count
        nz, nx = self.grid.shape
        return np.moveaxis(arr.reshape(J, nz, nx), 0, 2)

    @property
    def sample_indices(self) -> np.ndarray:
        """First interpolation tap per (pixel, channel), shape (Nz, Nx, J)."""
        return self._pixel_major(self._k0)

    @property
    def weights(self) -> tuple[np.ndarray, np.ndarray]:
        """(w0, w1) interpolation weight pair, each shape (Nz, Nx, J).

        Out-of-range entries carry no taps: both weights are zero there.
        """
        w1 = self._pixel_major(self._w1)
        valid = self._pixel_major(self._valid)
        return np.where(valid, 1.0 - w1, 0.0), w1

    @property
    def valid(self) -> np.ndarray:
        """True where the delay falls inside the recording window."""
        return self._pixel_major(self._valid)

    @property
    def nonzero_count(self) -> int:
        return 2 * int(np.count_nonzero(self._valid))

    def __eq__(self, other):
        if not isinstance(other, DelayLut):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.geometry == other.geometry
            and self.acquisition == other.acquisition
            and np.array_equal(self._k0, other._k0)
            and np.array_equal(self._w1, other._w1)
            and np.array_equal(self._valid, other._valid)
        )

    # -- application -------------------------------------------------------

    def apply(self, frame: RawFrame) -> DelayTensor:
        if frame.geometry != self.geometry:
            raise ValidationError("frame geometry does not match LUT")
        if frame.acquisition != self.acquisition:
            raise ValidationError("frame acquisition does not match LUT")
        J = self.geometry.element_count
        nz, nx = self.grid.shape
        P = nz * nx

        if frame.data.dtype == np.float32:
            if self._w1_f32 is None:
                self._w1_f32 = self._w1.astype(np.float32)
            w1 = self._w1_f32
            y_cm = np.ascontiguousarray(frame.data.T, dtype=np.float32)
            out = np.empty((J, P), dtype=np.float32)
            dst = np.empty((P, J), dtype=np.float32)
        else:
            w1 = self._w1
            y_cm = np.ascontiguousarray(frame.data.T, dtype=np.float64)
            out = np.empty((J, P), dtype=np.float64)
            dst = np.empty((P, J), dtype=np.float64)
        _gather_channels(y_cm, self._k0, w1, self._valid, out)
        _transpose_to_pixel_major(out, dst)
        return DelayTensor(dst.reshape(nz, nx, J), self.grid, self.geometry)


def build_lut(grid: GridSpec, geometry: ArrayGeometry,
              acquisition: AcquisitionParams) -> DelayLut:
    """Build the delay LUT: sample position (|r - r'_j| / v_s - t0) * f_s."""
    p, _, _ = _delay_positions(grid, geometry, acquisition)
    k0, _, w1, valid = _interp_taps(p, acquisition.sample_count)
    J = geometry.element_count
    k0 = np.moveaxis(k0, 2, 0).reshape(J, -1)
    w1 = np.where(valid, w1, 0.0)
    w1 = np.moveaxis(w1, 2, 0).reshape(J, -1)
    valid = np.moveaxis(valid, 2, 0).reshape(J, -1)
    return DelayLut(grid, geometry, acquisition, k0, w1, valid)


def apply_lut(lut: DelayLut, frame: RawFrame) -> DelayTensor:
    """Gather delayed samples: f(r_i, j) = y((|r_i - r'_j|)/v_s, r'_j)."""
    return lut.apply(frame)


def lut_key(grid: GridSpec, geometry: ArrayGeometry, acquisition: AcquisitionParams) -> str:
    """Stable content hash identifying one LUT configuration."""
    spec = {
        "grid": grid_to_dict(grid),
        "geometry": geometry_to_dict(geometry),
        "acquisition": acquisition_to_dict(acquisition),
    }
    blob = json.dumps(spec, sort_keys=True).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:32]


class LutCache:
    """Directory-backed binary LUT cache keyed by configuration hash.

    Cache hits reproduce a fresh build bit for bit.
    """

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, grid, geometry, acquisition) -> Path:
        return self.directory / f"lut_{lut_key(grid, geometry, acquisition)}.npz"

    def get(self, grid: GridSpec, geometry: ArrayGeometry,
            acquisition: AcquisitionParams) -> DelayLut:
        """Load the LUT for this configuration, building and storing on miss."""
        path = self.path_for(grid, geometry, acquisition)
        if path.is_file():
            with np.load(path) as z:
                return DelayLut(grid, geometry, acquisition,
                                z["k0"], z["w1"], z["valid"])
        lut = build_lut(grid, geometry, acquisition)
        tmp = path.with_suffix(".tmp.npz")
        np.savez(tmp, k0=lut._k0, w1=lut._w1, valid=lut._valid)
        tmp.replace(path)
        return lut
