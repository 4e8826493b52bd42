"""Discrete photoacoustic forward operator and its exact adjoint.

The forward map deposits spherical-spreading terms from every source pixel
onto every element trace at the acoustic time of flight (two-tap linear
interpolation), optionally weighted by element directivity, then applies a
temporal derivative (central difference), convolves with the system impulse
response, and adds seeded white Gaussian noise. Every step except the noise
is linear with an explicit transpose, so the operator pair passes a strict
dot-product test.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse
from scipy.signal import fftconvolve, hilbert

from .core import (
    AcquisitionParams,
    ArrayGeometry,
    GridSpec,
    ImageGrid,
    RawFrame,
    ValidationError,
)
from .validation import check_consistent_sound_speed, check_nonnegative


class NoPeakError(ValueError):
    """No usable point-source echo found in a calibration frame."""


@dataclass(frozen=True)
class ImpulseResponse:
    """Sampled system impulse response h(t)."""

    taps: np.ndarray
    sampling_rate: float

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        taps = taps.copy()
        taps.flags.writeable = False
        if taps.ndim != 1 or taps.size < 1:
            raise ValidationError("impulse response taps must be a non-empty 1-D array")
        if not np.all(np.isfinite(taps)):
            raise ValidationError("impulse response taps must be finite")
        if np.sum(taps**2) <= 0:
            raise ValidationError("impulse response must carry energy")
        if self.sampling_rate <= 0:
            raise ValidationError("impulse response sampling rate must be positive")
        object.__setattr__(self, "taps", taps)

    @property
    def peak_index(self) -> int:
        return int(np.argmax(np.abs(self.taps)))

    @property
    def is_identity(self) -> bool:
        return self.taps.size == 1 and self.taps[0] == 1.0


def identity_impulse_response(sampling_rate: float) -> ImpulseResponse:
    return ImpulseResponse(np.array([1.0]), sampling_rate)


def default_impulse_response(
    sampling_rate: float,
    center_frequency: float = 15.63e6,
    bandwidth: float = 8e6,
    halfwidth_sigmas: float = 4.0,
) -> ImpulseResponse:
    """Synthetic probe response: Gaussian-enveloped cosine burst.

    ``bandwidth`` is the -3 dB (power) full width of the spectrum around the
    center frequency.
    """
    sigma_f = bandwidth / (2.0 * np.sqrt(np.log(2.0)))
    sigma_t = 1.0 / (2.0 * np.pi * sigma_f)
    half = max(1, int(np.ceil(halfwidth_sigmas * sigma_t * sampling_rate)))
    t = (np.arange(-half, half + 1)) / sampling_rate
    taps = np.exp(-(t**2) / (2.0 * sigma_t**2)) * np.cos(2.0 * np.pi * center_frequency * t)
    return ImpulseResponse(taps, sampling_rate)


def load_impulse_response(path, sampling_rate: float) -> ImpulseResponse:
    """Load taps from a single-column text file."""
    taps = np.loadtxt(Path(path), dtype=np.float64, ndmin=1)
    return ImpulseResponse(taps, sampling_rate)


@dataclass(frozen=True)
class ForwardConfig:
    """Switches and scales of the forward model.

    ``grueneisen_scale`` lumps the Grueneisen parameter and the 1/(4 pi v_s^2)
    prefactor into one amplitude; only relative image amplitudes matter
    downstream.
    """

    use_derivative: bool = True
    use_directivity: bool = True
    noise_std: float = 0.0
    grueneisen_scale: float = 1.0

    def __post_init__(self):
        if self.noise_std < 0:
            raise ValidationError("noise_std must be >= 0")
        if self.grueneisen_scale <= 0:
            raise ValidationError("grueneisen_scale must be positive")


def directivity(theta, pitch: float, wavelength: float):
    """Element directivity sin(u)/u with u = (pi * pitch / wavelength) sin(theta).

    Total function: returns 1 at theta = 0 by the sinc limit.
    """
    if wavelength <= 0:
        raise ValidationError("wavelength must be positive")
    u = (pitch / wavelength) * np.sin(np.asarray(theta, dtype=np.float64))
    return np.sinc(u)


def _delay_positions(grid: GridSpec, geometry: ArrayGeometry, acquisition: AcquisitionParams):
    """Fractional sample positions and geometric gains for all (pixel, element) pairs.

    Returns (p, dist, sin_theta) each of shape (Nz, Nx, J).
    """
    z = grid.z_coords()[:, None, None]
    x = grid.x_coords()[None, :, None]
    xe = geometry.element_positions[None, None, :]
    dx = x - xe
    dist = np.sqrt(z**2 + dx**2)
    # Pixels placed exactly on an element would make 1/d blow up.
    np.maximum(dist, 0.5 * min(grid.z_res, grid.x_res), out=dist)
    p = (dist / acquisition.sound_speed - acquisition.acquisition_delay) * acquisition.sampling_rate
    sin_theta = dx / dist
    return p, dist, sin_theta


def _interp_taps(p, sample_count):
    """Two-tap linear-interpolation indices and weights, with validity mask.

    Positions outside [0, K-1] are invalid; the boundary position K-1 maps to
    taps (K-2, K-1) with weights (0, 1).
    """
    valid = (p >= 0.0) & (p <= sample_count - 1)
    k0 = np.floor(p).astype(np.int64)
    np.clip(k0, 0, sample_count - 2, out=k0)
    w1 = p - k0
    w0 = 1.0 - w1
    return k0, w0, w1, valid


class PhotoacousticOperator:
    """Linear forward map from an image grid to raw channel data.

    Precomputes a sparse deposition matrix (and its transpose) for the
    configured geometry; derivative and impulse-response stages are applied
    as separate exactly-transposable steps. Instances are immutable after
    construction and safe to share across threads; the spectral norm
    estimate is computed once and cached.
    """

    def __init__(
        self,
        grid: GridSpec,
        geometry: ArrayGeometry,
        acquisition: AcquisitionParams,
        h: ImpulseResponse | None = None,
        config: ForwardConfig = ForwardConfig(),
    ):
        check_consistent_sound_speed(geometry, acquisition)
        if h is None:
            h = identity_impulse_response(acquisition.sampling_rate)
        if not np.isclose(h.sampling_rate, acquisition.sampling_rate, rtol=1e-9):
            raise ValidationError(
                f"impulse response sampled at {h.sampling_rate} Hz but acquisition "
                f"runs at {acquisition.sampling_rate} Hz"
            )
        self.grid = grid
        self.geometry = geometry
        self.acquisition = acquisition
        self.h = h
        self.config = config

        K = acquisition.sample_count
        J = geometry.element_count
        nz, nx = grid.shape
        p, dist, sin_theta = _delay_positions(grid, geometry, acquisition)
        k0, w0, w1, valid = _interp_taps(p, K)
        self.truncated_pair_count = int(valid.size - np.count_nonzero(valid))

        gain = config.grueneisen_scale / dist
        if config.use_directivity:
            u = (geometry.pitch / geometry.wavelength) * sin_theta
            gain *= np.sinc(u)
        gain[~valid] = 0.0

        j_idx = np.broadcast_to(np.arange(J), (nz, nx, J))
        rows0 = (k0 * J + j_idx).ravel()
        pix = np.broadcast_to(np.arange(nz * nx)[:, None], (nz * nx, J)).reshape(nz, nx, J)
        cols = pix.ravel()
        rows = np.concatenate([rows0, rows0 + J])
        cols2 = np.concatenate([cols, cols])
        vals = np.concatenate([(w0 * gain).ravel(), (w1 * gain).ravel()])
        A = scipy.sparse.csr_matrix(
            (vals, (rows, cols2)), shape=(K * J, nz * nx), dtype=np.float64
        )
        A.sum_duplicates()
        self._A = A
        self._AT = A.T.tocsr()
        self._norm_sq = None

    # -- linear pipeline stages -------------------------------------------

    def _derivative(self, data):
        fs = self.acquisition.sampling_rate
        out = np.zeros_like(data)
        out[1:-1] = (data[2:] - data[:-2]) * (fs / 2.0)
        out[0] = data[1] * (fs / 2.0)
        out[-1] = -data[-2] * (fs / 2.0)
        return out

    def _derivative_t(self, q):
        fs = self.acquisition.sampling_rate
        out = np.zeros_like(q)
        out[1:-1] = (q[:-2] - q[2:]) * (fs / 2.0)
        out[0] = -q[1] * (fs / 2.0)
        out[-1] = q[-2] * (fs / 2.0)
        return out

    def _convolve(self, data):
        if self.h.is_identity:
            return data
        K = data.shape[0]
        full = fftconvolve(data, self.h.taps[:, None], mode="full", axes=0)
        p = self.h.peak_index
        return full[p : p + K]

    def _convolve_t(self, q):
        if self.h.is_identity:
            return q
        K = q.shape[0]
        full = fftconvolve(q, self.h.taps[::-1][:, None], mode="full", axes=0)
        off = self.h.taps.size - 1 - self.h.peak_index
        return full[off : off + K]

    # -- public API --------------------------------------------------------

    def apply(self, image: np.ndarray) -> np.ndarray:
        """Noise-free forward map: (Nz, Nx) image -> (K, J) channel data."""
        K = self.acquisition.sample_count
        J = self.geometry.element_count
        data = (self._A @ np.asarray(image, dtype=np.float64).ravel()).reshape(K, J)
        if self.config.use_derivative:
            data = self._derivative(data)
        return self._convolve(data)

    def adjoint(self, data: np.ndarray) -> np.ndarray:
        """Exact transpose of :meth:`apply`: (K, J) data -> (Nz, Nx) image."""
        q = np.asarray(data, dtype=np.float64)
        q = self._convolve_t(q)
        if self.config.use_derivative:
            q = self._derivative_t(q)
        return (self._AT @ q.ravel()).reshape(self.grid.shape)

    def spectral_norm_sq(self, iterations: int = 50, seed: int = 0) -> float:
        """Largest eigenvalue of H^T H (squared largest singular value of H).

        Estimated by power iteration; cached after the first call.
        """
        if self._norm_sq is None:
            rng = np.random.default_rng(seed)
            v = rng.standard_normal(self.grid.shape)
            v /= np.linalg.norm(v)
            lam = 0.0
            for _ in range(max(30, iterations)):
                w = self.adjoint(self.apply(v))
                lam = float(np.linalg.norm(w))
                if lam == 0.0:
                    break
                v = w / lam
            self._norm_sq = lam
        return self._norm_sq


def forward(
    image: ImageGrid,
    geometry: ArrayGeometry,
    acquisition: AcquisitionParams,
    h: ImpulseResponse | None = None,
    config: ForwardConfig = ForwardConfig(),
    rng_seed: int = 0,
) -> RawFrame:
    """Simulate raw channel data from a ground-truth absorption map.

    Noise is drawn per element from ``rng_seed ^ element_index`` so results
    are deterministic regardless of evaluation order. Source pixels whose
    arrival time falls outside the recording window are dropped and reported
    once as a truncation warning.
    """
    check_nonnegative(image.data, "image")
    op = PhotoacousticOperator(image.descriptor(), geometry, acquisition, h, config)
    return forward_with_operator(op, image.data, rng_seed)


def seeded_channel_noise(shape, std: float, seed: int) -> np.ndarray:
    """White Gaussian noise drawn per element from ``seed ^ element_index``.

    Per-element streams keep the result deterministic no matter how the
    element traces are scheduled.
    """
    K, J = shape
    noise = np.empty((K, J), dtype=np.float64)
    for j in range(J):
        rng = np.random.default_rng(seed ^ j)
        noise[:, j] = rng.normal(0.0, std, size=K)
    return noise


def forward_with_operator(
    op: PhotoacousticOperator, image_data: np.ndarray, rng_seed: int = 0
) -> RawFrame:
    """Forward map through a prebuilt operator, plus seeded noise."""
    data = op.apply(image_data)
    if op.truncated_pair_count:
        warnings.warn(
            f"{op.truncated_pair_count} pixel-element pairs arrive outside the "
            "recording window and were truncated",
            stacklevel=2,
        )
    if op.config.noise_std > 0:
        data = data + seeded_channel_noise(data.shape, op.config.noise_std, rng_seed)
    return RawFrame(data, op.geometry, op.acquisition)


def adjoint(
    frame: RawFrame,
    grid: GridSpec,
    h: ImpulseResponse | None = None,
    config: ForwardConfig = ForwardConfig(),
) -> ImageGrid:
    """Apply the transpose of the noise-free forward map to a frame.

    With ``use_derivative`` off and an identity impulse response this is
    plain unapodized backprojection with 1/distance weights.
    """
    op = PhotoacousticOperator(grid, frame.geometry, frame.acquisition, h, config)
    return grid.image(op.adjoint(frame.data))


def measure_impulse_response(
    point_frame: RawFrame, window_halfwidth: int = 32
) -> ImpulseResponse:
    """Extract the system impulse response from a point-source acquisition.

    Per-element waveforms are windowed around their envelope peak, normalized
    and averaged. Raises :class:`NoPeakError` when no echo rises at least
    6x above the robust noise floor.
    """
    data = np.asarray(point_frame.data, dtype=np.float64)
    env = np.abs(hilbert(data, axis=0))
    med = np.median(data)
    floor = 1.4826 * np.median(np.abs(data - med))
    peak = float(env.max())
    if floor > 0 and peak < 6.0 * floor:
        raise NoPeakError(
            f"strongest echo ({peak:.3g}) is below 6x the noise floor ({floor:.3g})"
        )
    if peak == 0.0:
        raise NoPeakError("frame is identically zero")

    K, J = data.shape
    w = window_halfwidth
    acc = np.zeros(2 * w + 1)
    used = 0
    freqs = np.fft.fftfreq(2 * w + 1)
    for j in range(J):
        kj = int(np.argmax(env[:, j]))
        if floor > 0 and env[kj, j] < 3.0 * floor:
            continue
        if kj - w < 0 or kj + w + 1 > K:
            continue
        seg = data[kj - w : kj + w + 1, j] / env[kj, j]
        # sub-sample alignment: parabolic refinement of the envelope peak,
        # then a fractional shift via a frequency-domain phase ramp
        if 0 < kj < K - 1:
            e0, e1, e2 = env[kj - 1 : kj + 2, j]
            denom = e0 - 2.0 * e1 + e2
            frac = 0.5 * (e0 - e2) / denom if denom != 0 else 0.0
            frac = float(np.clip(frac, -0.5, 0.5))
            if frac:
                seg = np.fft.ifft(np.fft.fft(seg) * np.exp(2j * np.pi * freqs * frac)).real
        acc += seg
        used += 1
    if used == 0:
        raise NoPeakError("no element produced a usable windowed echo")
    taps = acc / used
    taps /= np.max(np.abs(taps))
    return ImpulseResponse(taps, point_frame.acquisition.sampling_rate)
