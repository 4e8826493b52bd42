"""Image-quality metrics and block-Hankel rank diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import uniform_filter

from .core import DelayTensor, ImageGrid, ValidationError


def _image_array(img) -> np.ndarray:
    if isinstance(img, ImageGrid):
        return np.asarray(img.data, dtype=np.float64)
    return np.asarray(img, dtype=np.float64)


def psnr(truth, estimate, i_max: float = 1.0) -> float:
    """Peak signal-to-noise ratio 10 log10(n1 n2 Imax^2 / ||s - s_hat||_F^2).

    Returns +inf for identical images.
    """
    s = _image_array(truth)
    e = _image_array(estimate)
    if s.shape != e.shape:
        raise ValidationError(f"shape mismatch: {s.shape} vs {e.shape}")
    if i_max <= 0:
        raise ValidationError("i_max must be positive")
    err = float(np.sum((s - e) ** 2))
    if err == 0.0:
        return np.inf
    n1, n2 = s.shape
    return 10.0 * np.log10(n1 * n2 * i_max**2 / err)


@dataclass(frozen=True)
class SsimParams:
    """Stabilizers and windowing for SSIM. The default single global window
    follows the metric's plain formula; 'uniform11' switches to an 11x11
    sliding-window mean."""

    c1: float = 0.01**2
    c2: float = 0.03**2
    window: str = "global"

    def __post_init__(self):
        if self.window not in ("global", "uniform11"):
            raise ValidationError(f"unsupported window {self.window!r}")


def ssim(truth, estimate, params: SsimParams = SsimParams()) -> float:
    """Structural similarity between two images, in [-1, 1]."""
    a = _image_array(truth)
    b = _image_array(estimate)
    if a.shape != b.shape:
        raise ValidationError(f"shape mismatch: {a.shape} vs {b.shape}")
    c1, c2 = params.c1, params.c2
    if params.window == "global":
        mu_a = a.mean()
        mu_b = b.mean()
        da = a - mu_a
        db = b - mu_b
        var_a = np.mean(da * da)
        var_b = np.mean(db * db)
        cov = np.mean(da * db)
        num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
        den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
        return float(num / den)
    size = 11
    mu_a = uniform_filter(a, size)
    mu_b = uniform_filter(b, size)
    var_a = uniform_filter(a * a, size) - mu_a**2
    var_b = uniform_filter(b * b, size) - mu_b**2
    cov = uniform_filter(a * b, size) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
    den = (mu_a**2 + mu_b**2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


# ---------------------------------------------------------------------------
# Block-Hankel construction (periodic, three-level)
# ---------------------------------------------------------------------------

#: Hankel diagnostics exist for property tests, not production; the matrix
#: grows as (N M) x (d1 d2 J), so tensors are capped at this shape.
HANKEL_MAX_SHAPE = (32, 32, 8)


@dataclass(frozen=True)
class HankelSpec:
    """Window sizes of the periodic block-Hankel construction."""

    d1: int
    d2: int
    periodic: bool = True

    def __post_init__(self):
        if self.d1 < 1 or self.d2 < 1:
            raise ValidationError("window sizes must be >= 1")
        if not self.periodic:
            raise ValidationError("only the periodic construction is supported")


def _tensor_array(tensor) -> np.ndarray:
    if isinstance(tensor, DelayTensor):
        return np.asarray(tensor.data, dtype=np.float64)
    arr = np.asarray(tensor, dtype=np.float64)
    if arr.ndim != 3:
        raise ValidationError("expected a 3-D (axial, lateral, channel) tensor")
    return arr


def block_hankel(tensor, spec: HankelSpec) -> np.ndarray:
    """Periodic block-Hankel matrix of shape (N M) x (d1 d2 J).

    Channel blocks side by side; within a channel, M block-rows of d2 column
    blocks with lateral wraparound; each inner block is the periodic Hankel
    matrix of one column vector.
    """
    arr = _tensor_array(tensor)
    N, M, J = arr.shape
    if any(n > cap for n, cap in zip((N, M, J), HANKEL_MAX_SHAPE)):
        raise ValidationError(
            f"tensor shape {(N, M, J)} exceeds the Hankel guardrail {HANKEL_MAX_SHAPE}"
        )
    d1, d2 = spec.d1, spec.d2
    if d1 > N or d2 > M:
        raise ValidationError(f"window sizes {(d1, d2)} exceed tensor extent {(N, M)}")

    rows = (np.arange(N)[:, None] + np.arange(d1)[None, :]) % N
    out = np.empty((N * M, d1 * d2 * J))
    for j in range(J):
        base = j * d1 * d2
        for m in range(M):
            for q in range(d2):
                col = arr[:, (m + q) % M, j]
                out[m * N : (m + 1) * N, base + q * d1 : base + (q + 1) * d1] = col[rows]
    return out


def hankel_rank_profile(tensor, spec: HankelSpec, tol: float = 1e-6):
    """Singular values of the block-Hankel matrix and its numerical rank.

    Rank counts singular values above ``tol`` relative to the largest.
    """
    H = block_hankel(tensor, spec)
    sv = np.linalg.svd(H, compute_uv=False)
    if sv.size == 0 or sv[0] == 0.0:
        return sv, 0
    return sv, int(np.count_nonzero(sv > tol * sv[0]))


# ---------------------------------------------------------------------------
# Batch comparison
# ---------------------------------------------------------------------------


def _normalize(arr: np.ndarray, mode: str) -> np.ndarray:
    if mode == "none":
        return arr
    if mode == "max":
        peak = np.abs(arr).max()
        return arr / peak if peak > 0 else arr
    raise ValidationError(f"unsupported normalization {mode!r}")


def lsq_gain(truth: np.ndarray, estimate: np.ndarray) -> float:
    """Scalar gain minimizing ||truth - gain * estimate||_F."""
    denom = float(np.sum(estimate * estimate))
    return float(np.sum(truth * estimate)) / denom if denom > 0 else 1.0


def batch_metrics(truths, estimates, i_max: float = 1.0, normalize: str = "max"):
    """Per-record PSNR/SSIM plus mean and standard deviation.

    Reconstruction methods output arbitrary linear gain, so images are
    aligned before scoring: 'max' scales both to unit peak, 'lsq' scales the
    truth to unit peak and fits the estimate's gain by least squares (the
    PSNR-optimal gain, fair across methods), 'none' compares raw values.
    """
    truths = list(truths)
    estimates = list(estimates)
    if len(truths) != len(estimates):
        raise ValidationError(f"{len(truths)} truths vs {len(estimates)} estimates")
    rows = []
    for i, (t, e) in enumerate(zip(truths, estimates)):
        ta = _image_array(t)
        ea = _image_array(e)
        if normalize == "lsq":
            ta = _normalize(ta, "max")
            ea = ea * lsq_gain(ta, ea)
        else:
            ta = _normalize(ta, normalize)
            ea = _normalize(ea, normalize)
        rows.append({"index": i, "psnr_db": psnr(ta, ea, i_max), "ssim": ssim(ta, ea)})
    psnrs = np.array([r["psnr_db"] for r in rows])
    ssims = np.array([r["ssim"] for r in rows])
    summary = {
        "psnr_mean": float(psnrs.mean()),
        "psnr_std": float(psnrs.std()),
        "ssim_mean": float(ssims.mean()),
        "ssim_std": float(ssims.std()),
    }
    return rows, summary
