import numpy as np
import pytest

from parec import (
    AcquisitionParams,
    ArrayGeometry,
    ForwardConfig,
    GridSpec,
    LutCache,
    RawFrame,
    ValidationError,
    apply_lut,
    build_lut,
    forward,
)
from conftest import random_frame


def brute_force_das_sum(frame, grid):
    """Direct evaluation of the delay-and-sum over raw data, per pixel."""
    K, J = frame.shape
    fs = frame.acquisition.sampling_rate
    vs = frame.acquisition.sound_speed
    t0 = frame.acquisition.acquisition_delay
    out = np.zeros(grid.shape)
    zs, xs = grid.z_coords(), grid.x_coords()
    positions = frame.geometry.element_positions
    samples = np.arange(K, dtype=np.float64)
    for iz in range(grid.shape[0]):
        for ix in range(grid.shape[1]):
            acc = 0.0
            for j in range(J):
                d = np.hypot(zs[iz], xs[ix] - positions[j])
                p = (d / vs - t0) * fs
                if 0 <= p <= K - 1:
                    acc += np.interp(p, samples, frame.data[:, j])
            out[iz, ix] = acc
    return out


def test_lut_hand_example():
    geometry = ArrayGeometry(element_count=128, pitch=0.1e-3, sound_speed=1540.0)
    acquisition = AcquisitionParams(sample_count=2048, sampling_rate=62.5e6,
                                    sound_speed=1540.0)
    grid = GridSpec((200, 128), 0.05e-3, 0.1e-3)
    lut = build_lut(grid, geometry, acquisition)
    # pixel (199, 64): depth exactly 10 mm above element 64
    k0 = lut.sample_indices[199, 64, 64]
    w0, w1 = lut.weights
    p = 10e-3 / 1540.0 * 62.5e6
    assert k0 == 405
    assert w0[199, 64, 64] == pytest.approx(406 - p, abs=1e-9)
    assert w1[199, 64, 64] == pytest.approx(p - 405, abs=1e-9)
    assert round(w0[199, 64, 64], 2) == 0.16
    assert round(w1[199, 64, 64], 2) == 0.84
    assert lut.valid[199, 64, 64]


def test_out_of_range_delay_is_empty(small_geometry):
    acquisition = AcquisitionParams(sample_count=16, sampling_rate=31.25e6,
                                    sound_speed=1540.0)
    grid = GridSpec((32, 16), 0.2e-3, 0.2e-3)  # deep pixels arrive after sample 15
    lut = build_lut(grid, small_geometry, acquisition)
    assert not lut.valid[-1].any()
    w0, w1 = lut.weights
    assert not w0[~lut.valid].any()
    assert not w1[~lut.valid].any()


def test_build_is_deterministic(small_geometry, small_acquisition, small_grid):
    a = build_lut(small_grid, small_geometry, small_acquisition)
    b = build_lut(small_grid, small_geometry, small_acquisition)
    assert a == b


def test_weight_pairs_sum_to_one_exactly(small_geometry, small_acquisition, small_grid):
    lut = build_lut(small_grid, small_geometry, small_acquisition)
    w0, w1 = lut.weights
    valid = lut.valid
    assert np.all((w0[valid] + w1[valid]) == 1.0)


def test_nonzero_bound(small_geometry, small_acquisition, small_grid):
    lut = build_lut(small_grid, small_geometry, small_acquisition)
    nz, nx = small_grid.shape
    assert lut.nonzero_count <= 2 * nz * nx * small_geometry.element_count


def test_apply_zero_frame(small_geometry, small_acquisition, small_grid):
    lut = build_lut(small_grid, small_geometry, small_acquisition)
    frame = RawFrame(np.zeros((256, 16)), small_geometry, small_acquisition)
    tensor = apply_lut(lut, frame)
    assert not np.any(tensor.data)


def test_apply_is_linear(small_geometry, small_acquisition, small_grid):
    lut = build_lut(small_grid, small_geometry, small_acquisition)
    f1 = random_frame(small_geometry, small_acquisition, seed=1)
    f2 = random_frame(small_geometry, small_acquisition, seed=2)
    combo = RawFrame(3.0 * f1.data - 0.5 * f2.data, small_geometry, small_acquisition)
    lhs = apply_lut(lut, combo).data
    rhs = 3.0 * apply_lut(lut, f1).data - 0.5 * apply_lut(lut, f2).data
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


def test_apply_matches_brute_force_das(small_geometry, small_acquisition, small_grid):
    lut = build_lut(small_grid, small_geometry, small_acquisition)
    for seed in range(3):
        frame = random_frame(small_geometry, small_acquisition, seed=seed)
        tensor = apply_lut(lut, frame)
        fast = tensor.data.sum(axis=2)
        brute = brute_force_das_sum(frame, small_grid)
        assert np.allclose(fast, brute, rtol=1e-12, atol=1e-12 * np.abs(brute).max())


def test_apply_rejects_mismatched_geometry(small_geometry, small_acquisition, small_grid):
    lut = build_lut(small_grid, small_geometry, small_acquisition)
    other = ArrayGeometry(element_count=16, pitch=0.3e-3, sound_speed=1540.0)
    frame = RawFrame(np.zeros((256, 16)), other, small_acquisition)
    with pytest.raises(ValidationError):
        apply_lut(lut, frame)


def test_point_source_packet_is_delay_aligned(small_geometry):
    from parec import default_impulse_response

    acquisition = AcquisitionParams(sample_count=512, sampling_rate=62.5e6,
                                    sound_speed=1540.0)
    grid = GridSpec((48, 16), 0.1e-3, 0.2e-3)
    iz, ix = 30, 8
    img = np.zeros(grid.shape)
    img[iz, ix] = 1.0
    frame = forward(grid.image(img), small_geometry, acquisition,
                    default_impulse_response(acquisition.sampling_rate),
                    ForwardConfig(use_derivative=False, use_directivity=False,
                                  noise_std=0.0))
    lut = build_lut(grid, small_geometry, acquisition)
    tensor = apply_lut(lut, frame)
    # remove the known 1/distance weight; the packet at the true pixel is then
    # near-constant across channels, unlike an axially offset pixel where the
    # channels sample different phases of the pulse
    zs, xs = grid.z_coords(), grid.x_coords()
    d_true = np.hypot(zs[iz], xs[ix] - small_geometry.element_positions)
    aligned = tensor.data[iz, ix] * d_true
    cv_true = aligned.std() / np.abs(aligned.mean())
    d_off = np.hypot(zs[iz - 2], xs[ix] - small_geometry.element_positions)
    off = tensor.data[iz - 2, ix] * d_off
    cv_off = off.std() / max(np.abs(off.mean()), 1e-30)
    assert cv_true < 0.2
    assert cv_off > 2 * cv_true


def test_cache_hit_is_bit_identical(tmp_path, small_geometry, small_acquisition,
                                    small_grid):
    cache = LutCache(tmp_path)
    first = cache.get(small_grid, small_geometry, small_acquisition)
    fresh = build_lut(small_grid, small_geometry, small_acquisition)
    assert first == fresh
    path = cache.path_for(small_grid, small_geometry, small_acquisition)
    assert path.is_file()
    second = cache.get(small_grid, small_geometry, small_acquisition)
    assert second == fresh
    assert np.array_equal(second._w1, fresh._w1)
    assert second._w1.dtype == fresh._w1.dtype


def test_apply_float32_path(small_geometry, small_acquisition, small_grid):
    lut = build_lut(small_grid, small_geometry, small_acquisition)
    f64 = random_frame(small_geometry, small_acquisition, seed=4)
    f32 = RawFrame(f64.data.astype(np.float32), small_geometry, small_acquisition)
    t64 = apply_lut(lut, f64)
    t32 = apply_lut(lut, f32)
    assert t32.data.dtype == np.float32
    assert np.allclose(t32.data, t64.data, rtol=1e-5, atol=1e-5)
