"""Classical beamformers operating on the delay tensor.

All three reconstructions are pure functions of the tensor: delay-and-sum
with depth-dependent rectangular apodization, minimum variance with
subarray plus axial covariance averaging, and delay-multiply-and-sum with
zero-phase high-pass post-filtering.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy.signal import butter, hilbert, sosfiltfilt

from .core import DelayTensor, ImageGrid, ValidationError


def envelope(image_data: np.ndarray, axis: int = 0) -> np.ndarray:
    """Magnitude of the analytic signal along the given (axial) axis."""
    return np.abs(hilbert(np.asarray(image_data, dtype=np.float64), axis=axis))


@dataclass(frozen=True)
class DasConfig:
    """Delay-and-sum parameters. ``f_number = 0`` means full aperture."""

    f_number: float = 0.5
    apodization: str = "rectangular"
    apply_hilbert: bool = True

    def __post_init__(self):
        if self.f_number < 0:
            raise ValidationError("f_number must be >= 0")
        if self.apodization != "rectangular":
            raise ValidationError(f"unsupported apodization {self.apodization!r}")


@dataclass(frozen=True)
class MvConfig:
    """Minimum-variance parameters: subarray length L, axial half-width N,
    and diagonal loading as a fraction of trace(R)/L.

    With ``analytic`` the channel samples are taken to the analytic signal
    along z and the covariance is complex Hermitian (the unity-gain
    constraint uses the Hermitian transpose); on raw RF samples the weights
    otherwise track the carrier and cancel signal.

    ``gain_compensation`` divides each (pixel, channel) sample by the known
    element gain (directivity times spherical spreading, floored at
    ``gain_clamp`` of its maximum) before estimating the covariance. The
    unity-gain constraint assumes a unit steering vector; uncompensated
    aperture taper otherwise reads as mismatch and cancels signal.
    """

    subarray_length: int = 32
    axial_half_width: int = 2
    diagonal_loading: float = 1e-2
    analytic: bool = True
    gain_compensation: bool = True
    gain_clamp: float = 0.02

    def __post_init__(self):
        if self.subarray_length < 1:
            raise ValidationError("subarray_length must be >= 1")
        if self.axial_half_width < 0:
            raise ValidationError("axial_half_width must be >= 0")
        if self.diagonal_loading < 0:
            raise ValidationError("diagonal_loading must be >= 0")
        if not (0 < self.gain_clamp <= 1):
            raise ValidationError("gain_clamp must be in (0, 1]")


@dataclass(frozen=True)
class DmasConfig:
    """Delay-multiply-and-sum parameters (Butterworth high-pass post-filter)."""

    highpass_cutoff: float = 6e6
    filter_order: int = 6
    pair_mode: str = "unordered_distinct"

    def __post_init__(self):
        if self.highpass_cutoff <= 0:
            raise ValidationError("highpass_cutoff must be positive")
        if self.filter_order < 1:
            raise ValidationError("filter_order must be >= 1")
        if self.pair_mode != "unordered_distinct":
            raise ValidationError(f"unsupported pair_mode {self.pair_mode!r}")


@numba.njit(parallel=True, cache=True)
def _aperture_mean(t_pm, lo, hi, out):
    # t_pm: (P, J); lo/hi: (P,) inclusive channel range per pixel
    P = t_pm.shape[0]
    for i in numba.prange(P):
        a = lo[i]
        b = hi[i]
        if b < a:
            out[i] = 0.0
            continue
        s = 0.0
        for j in range(a, b + 1):
            s += t_pm[i, j]
        out[i] = s / (b - a + 1)


def aperture_bounds(tensor: DelayTensor, f_number: float):
    """Inclusive active-channel range per pixel for a rectangular aperture.

    A channel is active when |x_i - x'_j| <= z_i / (2 f_number); f_number 0
    activates the full aperture.
    """
    nz, nx = tensor.grid.shape
    J = tensor.geometry.element_count
    if f_number == 0:
        lo = np.zeros((nz, nx), dtype=np.int64)
        hi = np.full((nz, nx), J - 1, dtype=np.int64)
        return lo, hi
    xe = tensor.geometry.element_positions
    z = tensor.grid.z_coords()
    x = tensor.grid.x_coords()
    half = z / (2.0 * f_number)
    left = x[None, :] - half[:, None]
    right = x[None, :] + half[:, None]
    lo = np.searchsorted(xe, left.ravel(), side="left").reshape(nz, nx)
    hi = np.searchsorted(xe, right.ravel(), side="right").reshape(nz, nx) - 1
    return lo.astype(np.int64), hi.astype(np.int64)


def das(tensor: DelayTensor, cfg: DasConfig = DasConfig()) -> ImageGrid:
    """Delay-and-sum: aperture-limited channel mean, optional Hilbert envelope.

    Normalizing by the active-channel count keeps depth-varying apertures
    from imposing a gain slope.
    """
    nz, nx = tensor.grid.shape
    J = tensor.geometry.element_count
    t_pm = tensor.data.reshape(nz * nx, J)
    if cfg.f_number == 0:
        img = tensor.data.mean(axis=2)
    else:
        lo, hi = aperture_bounds(tensor, cfg.f_number)
        out = np.empty(nz * nx, dtype=tensor.data.dtype)
        _aperture_mean(np.ascontiguousarray(t_pm), lo.ravel(), hi.ravel(), out)
        img = out.reshape(nz, nx)
    if cfg.apply_hilbert:
        img = envelope(img, axis=0)
    return tensor.grid.image(img)


def channel_gain_compensation(tensor: DelayTensor, clamp: float) -> np.ndarray:
    """Reciprocal of the model element gain per (pixel, channel).

    The gain is element directivity times 1/distance spreading, floored at
    ``clamp`` of its maximum so directivity nulls do not blow up noise.
    """
    grid = tensor.grid
    geometry = tensor.geometry
    z = grid.z_coords()[:, None, None]
    x = grid.x_coords()[None, :, None]
    xe = geometry.element_positions[None, None, :]
    dx = x - xe
    dist = np.sqrt(z**2 + dx**2)
    np.maximum(dist, 0.5 * min(grid.z_res, grid.x_res), out=dist)
    gain = np.sinc((geometry.pitch / geometry.wavelength) * (dx / dist)) / dist
    np.maximum(gain, clamp * gain.max(), out=gain)
    comp = 1.0 / gain
    return comp / comp.min()


def mv_weights(R: np.ndarray, diagonal_loading: float = 0.0) -> np.ndarray:
    """Unity-gain minimum-variance weights w = R^-1 1 / (1^H R^-1 1).

    Accepts a single LxL covariance or a stack (..., L, L), real or complex
    Hermitian. Loading adds diagonal_loading * trace(R)/L to the diagonal
    before inversion.
    """
    R = np.asarray(R)
    if not np.iscomplexobj(R):
        R = R.astype(np.float64)
    L = R.shape[-1]
    if diagonal_loading > 0:
        tr = np.trace(R, axis1=-2, axis2=-1).real
        R = R + (diagonal_loading * tr / L)[..., None, None] * np.eye(L)
    ones = np.ones(R.shape[:-2] + (L, 1), dtype=R.dtype)
    w = np.linalg.solve(R, ones)[..., 0]
    return w / w.sum(axis=-1, keepdims=True)


def _subarray_covariances(t_pm: np.ndarray, L: int) -> np.ndarray:
    """Per-pixel subarray-averaged covariance, shape (P, L, L).

    Entry (l, m) is the sum over the J-L+1 subarrays of f[k+l] conj(f[k+m]);
    computed per diagonal with cumulative window sums to avoid the
    O(J L^2) inner product.
    """
    P, J = t_pm.shape
    S = J - L + 1
    R = np.zeros((P, L, L), dtype=t_pm.dtype)
    cs = np.empty((P, J + 1), dtype=t_pm.dtype)
    for d in range(L):
        u = t_pm[:, : J - d] * np.conj(t_pm[:, d:])
        cs[:, 0] = 0.0
        np.cumsum(u, axis=1, out=cs[:, 1 : J - d + 1])
        nl = L - d
        g = cs[:, S : S + nl] - cs[:, 0:nl]
        idx = np.arange(nl)
        R[:, idx, idx + d] = g
        if d:
            R[:, idx + d, idx] = np.conj(g)
    return R / S


def _axial_box_average(R4: np.ndarray, N: int) -> np.ndarray:
    """Mean over the axial window [i-N, i+N], truncated at the edges."""
    nz = R4.shape[0]
    cs = np.concatenate([np.zeros_like(R4[:1]), np.cumsum(R4, axis=0)], axis=0)
    hi = np.minimum(np.arange(nz) + N, nz - 1)
    lo = np.maximum(np.arange(nz) - N, 0)
    sums = cs[hi + 1] - cs[lo]
    count = (hi - lo + 1).astype(np.float64)
    return sums / count[:, None, None, None]


def minimum_variance(
    tensor: DelayTensor, cfg: MvConfig = MvConfig(), return_info: bool = False
):
    """Adaptive beamforming with per-pixel unity-gain weights.

    The covariance estimate averages the J-L+1 lateral subarrays and 2N+1
    axial neighbors (window truncated at the image edges). Pixels whose
    covariance stays singular despite loading fall back to uniform 1/L
    weights and are counted in the returned info. The output is the weighted
    subarray-averaged sample; real for RF input, complex magnitude left to
    the caller for analytic input.
    """
    nz, nx = tensor.grid.shape
    J = tensor.geometry.element_count
    L = cfg.subarray_length
    if L > J:
        raise ValidationError(f"subarray_length {L} exceeds element count {J}")
    N = cfg.axial_half_width

    data = np.asarray(tensor.data, dtype=np.float64)
    if cfg.gain_compensation:
        data = data * channel_gain_compensation(tensor, cfg.gain_clamp)
    if cfg.analytic:
        data = hilbert(data, axis=0)
    t_pm = np.ascontiguousarray(data.reshape(nz * nx, J))
    R = _subarray_covariances(t_pm, L).reshape(nz, nx, L, L)
    if N > 0:
        R = _axial_box_average(R, N)
    R = R.reshape(-1, L, L)

    tr = np.trace(R, axis1=1, axis2=2).real
    degenerate = ~(tr > 0)
    fallback = int(np.count_nonzero(degenerate))
    if fallback:
        R[degenerate] = np.eye(L)
    R += (np.where(degenerate, 1.0, cfg.diagonal_loading * tr / L))[:, None, None] * np.eye(L)

    try:
        w = mv_weights(R)
    except np.linalg.LinAlgError:
        w = np.empty((R.shape[0], L), dtype=R.dtype)
        for i in range(R.shape[0]):
            try:
                w[i] = mv_weights(R[i])
            except np.linalg.LinAlgError:
                w[i] = 1.0 / L
                fallback += 1

    # Sample vector matching the covariance dimensionality: the mean over
    # subarrays, v[m] = mean_l f[l + m].
    cs = np.concatenate(
        [np.zeros((t_pm.shape[0], 1), dtype=t_pm.dtype), np.cumsum(t_pm, axis=1)], axis=1
    )
    S = J - L + 1
    v = (cs[:, S : S + L] - cs[:, 0:L]) / S
    img = np.einsum("pl,pl->p", np.conj(w), v).reshape(nz, nx)
    if cfg.analytic:
        img = np.abs(img)
    else:
        img = img.real
    out = tensor.grid.image(img)
    if return_info:
        return out, {"uniform_fallback_pixels": fallback, "weights": w.reshape(nz, nx, L)}
    return out


def dmas_pair_sum(channel_values: np.ndarray, axis: int = -1) -> np.ndarray:
    """Sum over unordered distinct channel pairs of sign(f1 f2) sqrt(|f1 f2|).

    Uses the identity sum_{j1<j2} g_j1 g_j2 = ((sum g)^2 - sum g^2) / 2 with
    g = sign(f) sqrt(|f|), which is O(J) instead of O(J^2).
    """
    f = np.asarray(channel_values, dtype=np.float64)
    g = np.sign(f) * np.sqrt(np.abs(f))
    total = g.sum(axis=axis)
    return (total**2 - (g**2).sum(axis=axis)) / 2.0


def dmas(tensor: DelayTensor, cfg: DmasConfig = DmasConfig()) -> ImageGrid:
    """Delay-multiply-and-sum with zero-phase high-pass and envelope.

    The pair coupling modulates energy toward DC and harmonics, so the image
    is high-pass filtered along the axial direction (sampled at v_s / z_res)
    before envelope detection.
    """
    img = dmas_pair_sum(tensor.data, axis=2)
    fs_axial = tensor.geometry.sound_speed / tensor.grid.z_res
    if cfg.highpass_cutoff >= fs_axial / 2:
        raise ValidationError(
            f"highpass cutoff {cfg.highpass_cutoff} exceeds the axial Nyquist "
            f"{fs_axial / 2} of this grid"
        )
    sos = butter(cfg.filter_order, cfg.highpass_cutoff, btype="highpass", fs=fs_axial,
                 output="sos")
    filtered = sosfiltfilt(sos, img, axis=0)
    return tensor.grid.image(envelope(filtered, axis=0))
