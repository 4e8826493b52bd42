"""Shared domain types for the photoacoustic linear-array toolkit.

All types are immutable value objects: construct once, share freely.
Array payloads are validated at construction and never mutated in place.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

#: Soft-tissue sound speed convention (m/s). The probe tables this toolkit
#: mirrors list a 15.63 MHz center frequency and a 0.1 mm wavelength, which
#: are mutually inconsistent by ~1.5% at any plausible sound speed; the
#: wavelength is therefore always derived from sound_speed / center_frequency.
DEFAULT_SOUND_SPEED = 1540.0

DEFAULT_CENTER_FREQUENCY = 15.63e6
DEFAULT_SAMPLING_RATE = 62.5e6
DEFAULT_PITCH = 0.1e-3
DEFAULT_ELEMENT_COUNT = 128
DEFAULT_SAMPLE_COUNT = 2048

#: Default reconstruction grid: 512 x 128 pixels at 0.05 mm x 0.1 mm.
DEFAULT_GRID_SHAPE = (512, 128)
DEFAULT_Z_RES = 0.05e-3
DEFAULT_X_RES = 0.1e-3


class ValidationError(ValueError):
    """A domain object failed one of its construction invariants."""


def _as_readonly(a, dtype=None):
    arr = np.asarray(a, dtype=dtype)
    arr = arr.copy() if arr.base is not None or arr.flags.writeable else arr
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class ArrayGeometry:
    """Linear transducer array description.

    Element positions are derived, centered on the origin and spaced
    exactly ``pitch`` apart along x.
    """

    element_count: int
    pitch: float
    center_frequency: float = DEFAULT_CENTER_FREQUENCY
    sound_speed: float = DEFAULT_SOUND_SPEED

    def __post_init__(self):
        if self.element_count < 2:
            raise ValidationError("element_count must be >= 2")
        if self.pitch <= 0:
            raise ValidationError("pitch must be positive")
        if self.center_frequency <= 0 or self.sound_speed <= 0:
            raise ValidationError("center_frequency and sound_speed must be positive")

    @property
    def wavelength(self) -> float:
        return self.sound_speed / self.center_frequency

    @property
    def element_positions(self) -> np.ndarray:
        j = np.arange(self.element_count, dtype=np.float64)
        return self.pitch * (j - (self.element_count - 1) / 2.0)

    @property
    def aperture(self) -> float:
        return self.pitch * self.element_count


@dataclass(frozen=True)
class AcquisitionParams:
    """Temporal sampling description of one channel-data acquisition."""

    sample_count: int = DEFAULT_SAMPLE_COUNT
    sampling_rate: float = DEFAULT_SAMPLING_RATE
    sound_speed: float = DEFAULT_SOUND_SPEED
    acquisition_delay: float = 0.0

    def __post_init__(self):
        if self.sample_count <= 0:
            raise ValidationError("sample_count must be positive")
        if self.sampling_rate <= 0:
            raise ValidationError("sampling_rate must be positive")
        if self.sound_speed <= 0:
            raise ValidationError("sound_speed must be positive")
        if self.acquisition_delay < 0:
            raise ValidationError("acquisition_delay must be >= 0")


@dataclass(frozen=True)
class RawFrame:
    """One frame of raw channel data, time (rows) by element (columns)."""

    data: np.ndarray
    geometry: ArrayGeometry
    acquisition: AcquisitionParams

    def __post_init__(self):
        data = _as_readonly(self.data)
        if data.ndim != 2:
            raise ValidationError("raw data must be 2-D (samples x elements)")
        expected = (self.acquisition.sample_count, self.geometry.element_count)
        if data.shape != expected:
            raise ValidationError(
                f"raw data shape {data.shape} does not match "
                f"(sample_count, element_count) = {expected}"
            )
        if not np.all(np.isfinite(data)):
            raise ValidationError("raw data contains non-finite values")
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class ImageGrid:
    """2-D absorption map on a uniform z (axial) by x (lateral) grid.

    ``origin`` is the physical (z, x) position in meters of pixel (0, 0);
    the array plane sits at z = 0 with elements along x.
    """

    data: np.ndarray
    z_res: float = DEFAULT_Z_RES
    x_res: float = DEFAULT_X_RES
    origin: tuple[float, float] | None = None

    def __post_init__(self):
        data = _as_readonly(self.data)
        if data.ndim != 2:
            raise ValidationError("image data must be 2-D")
        if self.z_res <= 0 or self.x_res <= 0:
            raise ValidationError("grid resolutions must be positive")
        if not np.all(np.isfinite(data)):
            raise ValidationError("image contains non-finite values")
        origin = self.origin
        if origin is None:
            origin = default_origin(data.shape, self.z_res, self.x_res)
        object.__setattr__(self, "origin", (float(origin[0]), float(origin[1])))
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape

    def z_coords(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.shape[0]) * self.z_res

    def x_coords(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.shape[1]) * self.x_res

    def descriptor(self) -> "GridSpec":
        return GridSpec(self.shape, self.z_res, self.x_res, self.origin)

    def with_data(self, data) -> "ImageGrid":
        return replace(self, data=_as_readonly(data))


def default_origin(shape, z_res, x_res) -> tuple[float, float]:
    """Centered-lateral origin, first pixel one axial step below the array.

    Starting at z = z_res keeps every pixel strictly off the element plane so
    spherical-spreading terms stay finite.
    """
    return (z_res, -((shape[1] - 1) / 2.0) * x_res)


@dataclass(frozen=True)
class GridSpec:
    """Shape and sampling of an image grid, without pixel data."""

    shape: tuple[int, int]
    z_res: float = DEFAULT_Z_RES
    x_res: float = DEFAULT_X_RES
    origin: tuple[float, float] | None = None

    def __post_init__(self):
        nz, nx = self.shape
        if nz <= 0 or nx <= 0:
            raise ValidationError("grid shape must be positive")
        if self.z_res <= 0 or self.x_res <= 0:
            raise ValidationError("grid resolutions must be positive")
        origin = self.origin
        if origin is None:
            origin = default_origin(self.shape, self.z_res, self.x_res)
        object.__setattr__(self, "shape", (int(nz), int(nx)))
        object.__setattr__(self, "origin", (float(origin[0]), float(origin[1])))

    def z_coords(self) -> np.ndarray:
        return self.origin[0] + np.arange(self.shape[0]) * self.z_res

    def x_coords(self) -> np.ndarray:
        return self.origin[1] + np.arange(self.shape[1]) * self.x_res

    def image(self, data) -> ImageGrid:
        img = ImageGrid(data, self.z_res, self.x_res, self.origin)
        if img.shape != self.shape:
            raise ValidationError(f"data shape {img.shape} does not match grid {self.shape}")
        return img


@dataclass(frozen=True)
class DelayTensor:
    """Delayed channel samples per pixel: shape (N_z, N_x, J).

    Summing over the channel axis with unit weights reproduces the
    unapodized delay-and-sum image by construction.
    """

    data: np.ndarray
    grid: GridSpec
    geometry: ArrayGeometry

    def __post_init__(self):
        data = _as_readonly(self.data)
        if data.ndim != 3:
            raise ValidationError("delay tensor must be 3-D (z, x, channel)")
        if data.shape[:2] != self.grid.shape:
            raise ValidationError("delay tensor spatial shape does not match grid")
        if data.shape[2] != self.geometry.element_count:
            raise ValidationError("delay tensor channel count does not match geometry")
        object.__setattr__(self, "data", data)

    @property
    def shape(self):
        return self.data.shape


@dataclass(frozen=True)
class DatasetRecord:
    """One synthetic training pair: ground-truth image and raw channel data.

    ``snr_db`` is the realized max-signal to noise-std ratio in dB; None for
    noise-free simulation. Array payloads are float32, matching the on-disk
    dataset format bit for bit.
    """

    ground_truth: ImageGrid
    raw: RawFrame
    snr_db: float | None = None
    seed: int = 0
    noise_std: float = 0.0

    def __post_init__(self):
        for name, arr in (("ground_truth", self.ground_truth.data), ("raw", self.raw.data)):
            if arr.dtype != np.float32:
                raise ValidationError(f"{name} payload must be float32, got {arr.dtype}")
