"""Scikit-learn style estimators wrapping the reconstruction pipeline.

Each reconstruction stage is a transformer over domain objects, so stages
compose with :class:`sklearn.pipeline.Pipeline`::

    pipe = Pipeline([("delay", DelayTransform(grid_shape=(256, 128))),
                     ("das", DasBeamformer(f_number=0.5))])
    images = pipe.fit(frames).transform(frames)

Transformers accept either a single frame/tensor or a sequence and return
the matching container. Hyper-parameters follow sklearn conventions:
stored verbatim in ``__init__``, validated at fit time, introspectable via
``get_params`` and clonable.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .beamform import DasConfig, DmasConfig, MvConfig, das, dmas, minimum_variance
from .core import DelayTensor, GridSpec, RawFrame, ValidationError
from .delay import LutCache, build_lut
from .forward import (
    ForwardConfig,
    PhotoacousticOperator,
    default_impulse_response,
    identity_impulse_response,
)
from .solvers import (
    CsConfig,
    KspaceConfig,
    ista_solve,
    kspace_reconstruct,
    normalized_problem,
)


def _as_list(X, kind):
    if isinstance(X, kind):
        return [X], True
    X = list(X)
    if not all(isinstance(x, kind) for x in X):
        raise ValidationError(f"expected {kind.__name__} inputs")
    return X, False


def _unwrap(items, single):
    return items[0] if single else items


class DelayTransform(BaseEstimator, TransformerMixin):
    """Raw frames to 3-D delay tensors through a precomputed lookup table.

    ``fit`` builds (or loads from ``cache_dir``) the LUT for the geometry and
    acquisition carried by the first frame; ``transform`` applies it.
    """

    def __init__(self, grid_shape=(512, 128), z_res=0.05e-3, x_res=0.1e-3,
                 origin=None, cache_dir=None):
        self.grid_shape = grid_shape
        self.z_res = z_res
        self.x_res = x_res
        self.origin = origin
        self.cache_dir = cache_dir

    def fit(self, X, y=None):
        frames, _ = _as_list(X, RawFrame)
        grid = GridSpec(tuple(self.grid_shape), self.z_res, self.x_res, self.origin)
        frame = frames[0]
        if self.cache_dir is not None:
            self.lut_ = LutCache(self.cache_dir).get(grid, frame.geometry, frame.acquisition)
        else:
            self.lut_ = build_lut(grid, frame.geometry, frame.acquisition)
        return self

    def transform(self, X):
        check_is_fitted(self, "lut_")
        frames, single = _as_list(X, RawFrame)
        return _unwrap([self.lut_.apply(f) for f in frames], single)


class DasBeamformer(BaseEstimator, TransformerMixin):
    """Delay-and-sum over delay tensors."""

    def __init__(self, f_number=0.5, apply_hilbert=True):
        self.f_number = f_number
        self.apply_hilbert = apply_hilbert

    def fit(self, X, y=None):
        self.config_ = DasConfig(f_number=self.f_number, apply_hilbert=self.apply_hilbert)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        tensors, single = _as_list(X, DelayTensor)
        return _unwrap([das(t, self.config_) for t in tensors], single)


class MinimumVarianceBeamformer(BaseEstimator, TransformerMixin):
    """Minimum-variance adaptive beamforming over delay tensors."""

    def __init__(self, subarray_length=32, axial_half_width=2, diagonal_loading=1e-2,
                 analytic=True, gain_compensation=True, gain_clamp=0.02):
        self.subarray_length = subarray_length
        self.axial_half_width = axial_half_width
        self.diagonal_loading = diagonal_loading
        self.analytic = analytic
        self.gain_compensation = gain_compensation
        self.gain_clamp = gain_clamp

    def fit(self, X, y=None):
        self.config_ = MvConfig(
            subarray_length=self.subarray_length,
            axial_half_width=self.axial_half_width,
            diagonal_loading=self.diagonal_loading,
            analytic=self.analytic,
            gain_compensation=self.gain_compensation,
            gain_clamp=self.gain_clamp,
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        tensors, single = _as_list(X, DelayTensor)
        return _unwrap([minimum_variance(t, self.config_) for t in tensors], single)


class DmasBeamformer(BaseEstimator, TransformerMixin):
    """Delay-multiply-and-sum with high-pass post-filter over delay tensors."""

    def __init__(self, highpass_cutoff=6e6, filter_order=6):
        self.highpass_cutoff = highpass_cutoff
        self.filter_order = filter_order

    def fit(self, X, y=None):
        self.config_ = DmasConfig(
            highpass_cutoff=self.highpass_cutoff, filter_order=self.filter_order
        )
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        tensors, single = _as_list(X, DelayTensor)
        return _unwrap([dmas(t, self.config_) for t in tensors], single)


def _resolve_impulse_response(spec, sampling_rate):
    if spec is None or spec == "identity":
        return identity_impulse_response(sampling_rate)
    if spec == "default":
        return default_impulse_response(sampling_rate)
    return spec


class IstaReconstructor(BaseEstimator, TransformerMixin):
    """Compressed-sensing reconstruction of raw frames.

    ``fit`` builds the forward operator for the first frame's geometry and
    caches the power-iteration step estimate; ``transform`` solves each frame
    and stores the iteration logs in ``logs_``.
    """

    def __init__(self, grid_shape=(512, 128), z_res=0.05e-3, x_res=0.1e-3, origin=None,
                 tv_weight=0.02, wavelet_weight=0.005, levels=3, step="auto",
                 max_iters=100, grad_norm_tol=1e-4, use_derivative=True,
                 use_directivity=True, impulse_response="default"):
        self.grid_shape = grid_shape
        self.z_res = z_res
        self.x_res = x_res
        self.origin = origin
        self.tv_weight = tv_weight
        self.wavelet_weight = wavelet_weight
        self.levels = levels
        self.step = step
        self.max_iters = max_iters
        self.grad_norm_tol = grad_norm_tol
        self.use_derivative = use_derivative
        self.use_directivity = use_directivity
        self.impulse_response = impulse_response

    def fit(self, X, y=None):
        frames, _ = _as_list(X, RawFrame)
        frame = frames[0]
        grid = GridSpec(tuple(self.grid_shape), self.z_res, self.x_res, self.origin)
        h = _resolve_impulse_response(self.impulse_response, frame.acquisition.sampling_rate)
        self.config_ = CsConfig(
            tv_weight=self.tv_weight,
            wavelet_weight=self.wavelet_weight,
            levels=self.levels,
            step=self.step,
            max_iters=self.max_iters,
            grad_norm_tol=self.grad_norm_tol,
        )
        self.operator_ = PhotoacousticOperator(
            grid, frame.geometry, frame.acquisition, h,
            ForwardConfig(use_derivative=self.use_derivative,
                          use_directivity=self.use_directivity),
        )
        if self.step == "auto":
            self.operator_.spectral_norm_sq(iterations=self.config_.power_iterations)
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        frames, single = _as_list(X, RawFrame)
        grid = self.operator_.grid
        images = []
        self.logs_ = []
        for f in frames:
            op_n, y_n = normalized_problem(
                self.operator_, f.data, self.config_.power_iterations
            )
            result = ista_solve(op_n, y_n, self.config_)
            images.append(grid.image(result.image))
            self.logs_.append(result)
        return _unwrap(images, single)


class KspaceReconstructor(BaseEstimator, TransformerMixin):
    """Fourier-domain mapping reconstruction of raw frames."""

    def __init__(self, grid_shape=(512, 128), z_res=0.05e-3, x_res=0.1e-3, origin=None,
                 band_low=0.0, band_high=np.inf, amplitude_floor=1e-3):
        self.grid_shape = grid_shape
        self.z_res = z_res
        self.x_res = x_res
        self.origin = origin
        self.band_low = band_low
        self.band_high = band_high
        self.amplitude_floor = amplitude_floor

    def fit(self, X, y=None):
        self.config_ = KspaceConfig(
            band_low=self.band_low, band_high=self.band_high,
            amplitude_floor=self.amplitude_floor,
        )
        self.grid_ = GridSpec(tuple(self.grid_shape), self.z_res, self.x_res, self.origin)
        return self

    def transform(self, X):
        check_is_fitted(self, "config_")
        frames, single = _as_list(X, RawFrame)
        return _unwrap([kspace_reconstruct(f, self.grid_, self.config_) for f in frames],
                       single)
