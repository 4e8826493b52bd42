"""Model-based reconstructions: ISTA compressed sensing and k-space mapping.

The ISTA solver minimizes  1/2 ||y - H s||^2 + tv_weight * TV(s)
+ wavelet_weight * ||W^T s||_1  by proximal gradient steps: an orthonormal
periodic Daubechies-4 shrinkage followed by a fixed-budget dual TV proximal
sub-iteration. The k-space method maps the 2-D spectrum of the channel data
onto the image spectrum through k_z = sgn(f) sqrt((f/c)^2 - k_x^2); the
region f < c |k_x| is evanescent and carries no propagating information.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import GridSpec, ImageGrid, RawFrame, ValidationError
from .forward import ForwardConfig, ImpulseResponse, PhotoacousticOperator
from .validation import check_lateral_lattice_matches


def soft_threshold(x, alpha):
    """Elementwise sign(x) * max(|x| - alpha, 0)."""
    if alpha < 0:
        raise ValidationError("threshold must be >= 0")
    x = np.asarray(x)
    return np.sign(x) * np.maximum(np.abs(x) - alpha, 0.0)


# ---------------------------------------------------------------------------
# Orthonormal periodic Daubechies-4 wavelet transform
# ---------------------------------------------------------------------------

_SQRT3 = np.sqrt(3.0)
_DB2_LO = np.array([1.0 + _SQRT3, 3.0 + _SQRT3, 3.0 - _SQRT3, 1.0 - _SQRT3]) / (4.0 * np.sqrt(2.0))
_DB2_HI = np.array([_DB2_LO[3], -_DB2_LO[2], _DB2_LO[1], -_DB2_LO[0]])


def _dwt_axis(x, axis):
    x = np.moveaxis(x, axis, 0)
    n = x.shape[0]
    ext = np.concatenate([x, x[:3]], axis=0)
    lo = sum(_DB2_LO[m] * ext[m : m + n : 2] for m in range(4))
    hi = sum(_DB2_HI[m] * ext[m : m + n : 2] for m in range(4))
    return np.moveaxis(np.concatenate([lo, hi], axis=0), 0, axis)


def _idwt_axis(c, axis):
    c = np.moveaxis(c, axis, 0)
    n = c.shape[0]
    half = n // 2
    lo, hi = c[:half], c[half:]
    ext = np.zeros((n + 3,) + c.shape[1:], dtype=c.dtype)
    for m in range(4):
        ext[m : m + n : 2] += _DB2_LO[m] * lo + _DB2_HI[m] * hi
    out = ext[:n]
    out[:3] += ext[n : n + 3]
    return np.moveaxis(out, 0, axis)


def _check_wavelet_shape(shape, levels):
    nz, nx = shape
    if levels < 1:
        raise ValidationError("wavelet levels must be >= 1")
    div = 2**levels
    if nz % div or nx % div:
        raise ValidationError(f"image shape {shape} not divisible by 2^{levels}")
    if min(nz, nx) // div < 2:
        raise ValidationError(f"image shape {shape} too small for {levels} wavelet levels")


def wavelet_analysis(image: np.ndarray, levels: int = 3) -> np.ndarray:
    """Multi-level separable 2-D transform, periodic boundaries.

    The filter bank is orthonormal, so analysis is the exact transpose of
    :func:`wavelet_synthesis` and energy is preserved.
    """
    image = np.asarray(image, dtype=np.float64)
    _check_wavelet_shape(image.shape, levels)
    out = image.copy()
    nz, nx = image.shape
    for _ in range(levels):
        block = _dwt_axis(out[:nz, :nx], 0)
        out[:nz, :nx] = _dwt_axis(block, 1)
        nz //= 2
        nx //= 2
    return out


def wavelet_synthesis(coeffs: np.ndarray, levels: int = 3) -> np.ndarray:
    coeffs = np.asarray(coeffs, dtype=np.float64)
    _check_wavelet_shape(coeffs.shape, levels)
    out = coeffs.copy()
    sizes = [(coeffs.shape[0] >> k, coeffs.shape[1] >> k) for k in range(levels)]
    for nz, nx in reversed(sizes):
        block = _idwt_axis(out[:nz, :nx], 1)
        out[:nz, :nx] = _idwt_axis(block, 0)
    return out


# ---------------------------------------------------------------------------
# Total variation
# ---------------------------------------------------------------------------


def _gradient(u):
    gz = np.zeros_like(u)
    gx = np.zeros_like(u)
    gz[:-1] = u[1:] - u[:-1]
    gx[:, :-1] = u[:, 1:] - u[:, :-1]
    return gz, gx


def _divergence(pz, px):
    div = np.zeros_like(pz)
    div[:-1] += pz[:-1]
    div[1:] -= pz[:-1]
    div[:, :-1] += px[:, :-1]
    div[:, 1:] -= px[:, :-1]
    return div


def tv_value(u) -> float:
    """Isotropic total variation with forward differences."""
    gz, gx = _gradient(np.asarray(u, dtype=np.float64))
    return float(np.sum(np.sqrt(gz**2 + gx**2)))


def tv_prox(v, weight, iterations=10, dual=None):
    """Approximate prox of weight * TV at v via a projected dual iteration.

    Runs a fixed number of Chambolle-style dual steps (step 1/8). Passing the
    previous dual field warm-starts the iteration; returns (u, dual).
    """
    v = np.asarray(v, dtype=np.float64)
    if weight <= 0:
        return v.copy(), dual
    if dual is None:
        pz = np.zeros_like(v)
        px = np.zeros_like(v)
    else:
        pz, px = dual[0].copy(), dual[1].copy()
    tau = 0.125
    for _ in range(iterations):
        div = _divergence(pz, px)
        gz, gx = _gradient(div - v / weight)
        denom = 1.0 + tau * np.sqrt(gz**2 + gx**2)
        pz = (pz + tau * gz) / denom
        px = (px + tau * gx) / denom
    u = v - weight * _divergence(pz, px)
    return u, (pz, px)


# ---------------------------------------------------------------------------
# ISTA
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CsConfig:
    """Compressed-sensing reconstruction parameters."""

    tv_weight: float = 0.02
    wavelet_weight: float = 0.005
    wavelet: str = "daubechies4"
    levels: int = 3
    step: float | str = "auto"
    max_iters: int = 100
    grad_norm_tol: float = 1e-4
    tv_sub_iterations: int = 10
    power_iterations: int = 50

    def __post_init__(self):
        if self.tv_weight < 0 or self.wavelet_weight < 0:
            raise ValidationError("regularization weights must be >= 0")
        if self.max_iters < 0:
            raise ValidationError("max_iters must be >= 0")
        if self.step != "auto" and (not isinstance(self.step, (int, float)) or self.step <= 0):
            raise ValidationError("step must be 'auto' or a positive number")
        if self.wavelet not in ("daubechies4", "db2"):
            raise ValidationError(f"unsupported wavelet {self.wavelet!r}")


@dataclass
class IterationRecord:
    iteration: int
    objective: float
    data_term: float
    tv_term: float
    wavelet_term: float
    grad_norm: float
    step: float


@dataclass
class IstaResult:
    image: np.ndarray
    log: list[IterationRecord] = field(default_factory=list)
    step: float = 0.0
    step_halvings: int = 0
    stopped_by_tolerance: bool = False


_LIPSCHITZ_MARGIN = 1.05


def ista_solve(operator, y: np.ndarray, cfg: CsConfig, x0: np.ndarray | None = None) -> IstaResult:
    """Run ISTA against any linear operator exposing apply/adjoint.

    Starts from the adjoint image unless ``x0`` is given. With ``step='auto'``
    the step is 1 over a safety-inflated power-iteration estimate of the
    gradient Lipschitz constant, guaranteeing descent; five consecutive
    objective increases halve the step as a further safeguard.
    """
    y = np.asarray(y, dtype=np.float64)
    s = np.asarray(x0, dtype=np.float64).copy() if x0 is not None else operator.adjoint(y)
    _check_wavelet_shape(s.shape, cfg.levels)

    if cfg.step == "auto":
        lip = operator.spectral_norm_sq(iterations=cfg.power_iterations)
        if lip <= 0:
            raise ValidationError("operator has zero spectral norm; cannot pick a step")
        tau = 1.0 / (_LIPSCHITZ_MARGIN * lip)
    else:
        tau = float(cfg.step)

    lam_tv = cfg.tv_weight
    lam_w = cfg.wavelet_weight
    grad_denom = np.linalg.norm(operator.adjoint(y))
    grad_denom = grad_denom if grad_denom > 0 else 1.0

    def objective(s_val, residual):
        data = 0.5 * float(np.sum(residual**2))
        tv = lam_tv * tv_value(s_val) if lam_tv > 0 else 0.0
        wav = (
            lam_w * float(np.sum(np.abs(wavelet_analysis(s_val, cfg.levels))))
            if lam_w > 0
            else 0.0
        )
        return data, tv, wav

    result = IstaResult(image=s, step=tau)
    Hs = operator.apply(s)
    residual = Hs - y
    grad = operator.adjoint(residual)
    grad_rel = float(np.linalg.norm(grad) / grad_denom)
    data, tv, wav = objective(s, residual)
    prev_obj = data + tv + wav
    result.log.append(IterationRecord(0, prev_obj, data, tv, wav, grad_rel, tau))

    if not np.isfinite(prev_obj):
        raise FloatingPointError("non-finite objective at initialization")

    dual = None
    increases = 0
    for it in range(1, cfg.max_iters + 1):
        if grad_rel < cfg.grad_norm_tol:
            result.stopped_by_tolerance = True
            break
        z = s - tau * grad
        if lam_w > 0:
            coeffs = soft_threshold(wavelet_analysis(z, cfg.levels), lam_w * tau)
            z = wavelet_synthesis(coeffs, cfg.levels)
        if lam_tv > 0:
            s, dual = tv_prox(z, lam_tv * tau, cfg.tv_sub_iterations, dual)
        else:
            s = z

        Hs = operator.apply(s)
        residual = Hs - y
        grad = operator.adjoint(residual)
        grad_rel = float(np.linalg.norm(grad) / grad_denom)
        data, tv, wav = objective(s, residual)
        obj = data + tv + wav
        if not np.isfinite(obj):
            raise FloatingPointError(f"non-finite objective at iteration {it}")
        result.log.append(IterationRecord(it, obj, data, tv, wav, grad_rel, tau))

        if obj > prev_obj:
            increases += 1
            if increases >= 5:
                tau *= 0.5
                result.step_halvings += 1
                increases = 0
        else:
            increases = 0
        prev_obj = obj

    result.image = s
    result.step = tau
    return result


class ScaledOperator:
    """A linear operator multiplied by a scalar, with matching adjoint."""

    def __init__(self, operator, scale: float):
        self.operator = operator
        self.scale = float(scale)

    def apply(self, x):
        return self.scale * self.operator.apply(x)

    def adjoint(self, y):
        return self.scale * self.operator.adjoint(y)

    def spectral_norm_sq(self, iterations: int = 50) -> float:
        return self.scale**2 * self.operator.spectral_norm_sq(iterations=iterations)


def normalized_problem(operator, y: np.ndarray, power_iterations: int = 50):
    """Rescale (H, y) to unit spectral norm and unit peak data.

    The regularization weights were tuned for unit-scale problems; spectral
    normalization is a pure rescaling of the solution amplitude and changes
    nothing about the iteration itself.
    """
    norm_sq = operator.spectral_norm_sq(iterations=power_iterations)
    op_scale = 1.0 / np.sqrt(norm_sq) if norm_sq > 0 else 1.0
    y = np.asarray(y, dtype=np.float64)
    peak = float(np.abs(y).max()) if y.size else 0.0
    y_scale = 1.0 / peak if peak > 0 else 1.0
    return ScaledOperator(operator, op_scale), y * y_scale


def ista_reconstruct(
    frame: RawFrame,
    grid: GridSpec,
    h: ImpulseResponse | None = None,
    forward_config: ForwardConfig = ForwardConfig(),
    cs: CsConfig = CsConfig(),
) -> tuple[ImageGrid, IstaResult]:
    """Compressed-sensing reconstruction of one frame.

    The problem is solved in spectrally-normalized units (reconstruction
    amplitudes are relative, like every other method here). Returns the
    image and the full iteration log with the objective split per term.
    """
    op = PhotoacousticOperator(grid, frame.geometry, frame.acquisition, h, forward_config)
    op_n, y_n = normalized_problem(op, frame.data, cs.power_iterations)
    result = ista_solve(op_n, y_n, cs)
    return grid.image(result.image), result


# ---------------------------------------------------------------------------
# k-space mapping
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KspaceConfig:
    """Band limits (Hz) and the relative floor on |k_z| in the 1/sqrt factor."""

    band_low: float = 0.0
    band_high: float = np.inf
    amplitude_floor: float = 1e-3

    def __post_init__(self):
        if not (0 <= self.band_low < self.band_high):
            raise ValidationError("need 0 <= band_low < band_high")
        if self.amplitude_floor < 0:
            raise ValidationError("amplitude_floor must be >= 0")


def kz_of(f, kx, sound_speed):
    """Map temporal frequency to axial spatial frequency on the wave cone.

    Returns sgn(f) sqrt((f/c)^2 - kx^2); NaN where |f| < c |kx| (evanescent).
    """
    f = np.asarray(f, dtype=np.float64)
    kx = np.asarray(kx, dtype=np.float64)
    radic = (f / sound_speed) ** 2 - kx**2
    with np.errstate(invalid="ignore"):
        kz = np.sign(f) * np.sqrt(radic)
    return np.where(radic < 0, np.nan, kz)


def _interp_complex_columns(targets, lattice, values):
    """Linearly interpolate complex column data; out-of-range targets -> 0."""
    out = np.zeros(targets.shape, dtype=np.complex128)
    lo, hi = lattice[0], lattice[-1]
    for col in range(targets.shape[1]):
        t = targets[:, col]
        inside = (t >= lo) & (t <= hi)
        out[inside, col] = np.interp(t[inside], lattice, values[:, col].real) + 1j * np.interp(
            t[inside], lattice, values[:, col].imag
        )
    return out


#: Axial zero-padding factor before spectral interpolation. Linear
#: interpolation of a spectrum whose phase turns ~pi per lattice step (any
#: content away from the reference plane) is meaningless; padding refines the
#: lattice, and interpolating around a centered reference phase removes the
#: bulk rotation.
_KSPACE_PAD = 4


def kspace_forward_map(
    image: ImageGrid,
    acquisition,
    geometry,
    cfg: KspaceConfig = KspaceConfig(),
) -> np.ndarray:
    """Predicted channel-data spectrum Y(f, k_x) from an image.

    Output is a (sample_count, element_count) complex array on the unshifted
    FFT lattice of the raw frame; the evanescent region f < c |k_x| is
    identically zero. The overall scale is arbitrary.
    """
    grid = image.descriptor()
    check_lateral_lattice_matches(grid, geometry)
    c = acquisition.sound_speed
    K = acquisition.sample_count
    nz = grid.shape[0]

    data = np.asarray(image.data, dtype=np.float64)
    padded = np.zeros((_KSPACE_PAD * nz, grid.shape[1]))
    padded[:nz] = data
    S = np.fft.fft(np.fft.fft(padded, axis=0), axis=1)
    kz_lattice = np.fft.fftshift(np.fft.fftfreq(_KSPACE_PAD * nz, grid.z_res))
    S_sorted = np.fft.fftshift(S, axes=0)
    # interpolate around the mid-grid reference depth where phase is slowest
    z_ref = (nz / 2.0) * grid.z_res
    S_sorted = S_sorted * np.exp(2j * np.pi * kz_lattice * z_ref)[:, None]

    f = np.fft.fftfreq(K, 1.0 / acquisition.sampling_rate)
    kx = np.fft.fftfreq(geometry.element_count, geometry.pitch)
    F, KX = np.meshgrid(f, kx, indexing="ij")
    radic = (F / c) ** 2 - KX**2
    prop = radic >= 0
    kz_star = np.where(prop, np.sign(F) * np.sqrt(np.where(prop, radic, 0.0)), 0.0)

    Y = _interp_complex_columns(kz_star, kz_lattice, S_sorted)
    Y *= np.exp(-2j * np.pi * kz_star * z_ref)
    kz_max = float(np.max(np.abs(kz_lattice)))
    floor = cfg.amplitude_floor * kz_max
    amp = np.abs(F) / (c * np.maximum(np.abs(kz_star), floor))
    Y *= amp
    # The image FFT references pixel (0, 0) while the data FFT references the
    # array plane z = 0; shift by the grid's axial origin.
    Y *= np.exp(-2j * np.pi * kz_star * grid.origin[0])
    Y[~prop] = 0.0
    band = (np.abs(F) >= cfg.band_low) & (np.abs(F) <= cfg.band_high)
    Y[~band] = 0.0
    if acquisition.acquisition_delay:
        Y *= np.exp(-2j * np.pi * F * acquisition.acquisition_delay)
    return Y


def kspace_reconstruct(
    frame: RawFrame,
    grid: GridSpec,
    cfg: KspaceConfig = KspaceConfig(),
) -> ImageGrid:
    """Invert the k-space mapping: channel data -> real image.

    The amplitude factor is clamped by ``amplitude_floor`` exactly as in the
    forward map, Hermitian symmetry is enforced, and band limits emulate a
    finite-bandwidth detector.
    """
    check_lateral_lattice_matches(grid, frame.geometry)
    acq = frame.acquisition
    c = acq.sound_speed
    K = acq.sample_count
    nz, nx = grid.shape

    data = np.asarray(frame.data, dtype=np.float64)
    padded = np.zeros((_KSPACE_PAD * K, nx))
    padded[:K] = data
    Y = np.fft.fft(np.fft.fft(padded, axis=0), axis=1)
    f = np.fft.fftfreq(_KSPACE_PAD * K, 1.0 / acq.sampling_rate)
    if acq.acquisition_delay:
        Y *= np.exp(2j * np.pi * f[:, None] * acq.acquisition_delay)
    band = (np.abs(f) >= cfg.band_low) & (np.abs(f) <= cfg.band_high)
    Y[~band] = 0.0

    f_lattice = np.fft.fftshift(f)
    Y_sorted = np.fft.fftshift(Y, axes=0)
    # interpolate around the mid-window reference time where phase is slowest
    t_ref = (K / 2.0) / acq.sampling_rate
    Y_sorted = Y_sorted * np.exp(2j * np.pi * f_lattice * t_ref)[:, None]

    kz = np.fft.fftfreq(nz, grid.z_res)
    kx = np.fft.fftfreq(nx, grid.x_res)
    KZ, KX = np.meshgrid(kz, kx, indexing="ij")
    kmag = np.sqrt(KZ**2 + KX**2)
    sign = np.where(KZ != 0, np.sign(KZ), 1.0)
    f_star = c * sign * kmag

    S = _interp_complex_columns(f_star, f_lattice, Y_sorted)
    S *= np.exp(-2j * np.pi * f_star * t_ref)
    kz_max = float(np.max(np.abs(kz))) if nz > 1 else 1.0
    floor = cfg.amplitude_floor * kz_max
    amp = np.abs(f_star) / (c * np.maximum(np.abs(KZ), floor))
    with np.errstate(divide="ignore", invalid="ignore"):
        S = np.where(amp > 0, S / amp, 0.0)
    # undo the axial origin shift (image pixel (0,0) sits at grid.origin)
    S *= np.exp(2j * np.pi * KZ * grid.origin[0])

    S_sym = 0.5 * (S + np.conj(np.roll(S[::-1, ::-1], 1, axis=(0, 1))))
    img = np.fft.ifft2(S_sym).real
    return grid.image(img)
