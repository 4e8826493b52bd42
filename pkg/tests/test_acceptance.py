"""Acceptance suite: one test per release criterion, tolerances pinned.

Each test prints a single PASS line with its measured numbers (visible with
``pytest -s`` or in captured output on failure). The comparison study runs
the four classical methods on 50 generated phantoms and scores them in the
40 dB log-compressed display domain, the convention used for every figure
this toolkit is compared against.
"""

import json
import time

import numpy as np
import pytest

from parec import (
    AcquisitionParams,
    ArrayGeometry,
    AugmentSpec,
    CsConfig,
    DasConfig,
    DmasConfig,
    ForwardConfig,
    GridSpec,
    HankelSpec,
    MvConfig,
    PhotoacousticOperator,
    RawFrame,
    apply_lut,
    build_lut,
    das,
    dmas,
    default_impulse_response,
    forward,
    generate_dataset,
    hankel_rank_profile,
    ista_solve,
    kspace_forward_map,
    kspace_reconstruct,
    minimum_variance,
    mv_weights,
    psnr,
    ssim,
)
from parec.beamform import envelope
from parec.cli import main as cli_main
from parec.forward import seeded_channel_noise
from parec.solvers import normalized_problem


def _report(name, detail):
    print(f"[PASS] {name}: {detail}")


# ---------------------------------------------------------------------------
# 1. adjoint identity
# ---------------------------------------------------------------------------


def test_acceptance_adjoint_identity():
    start = time.perf_counter()
    geometry = ArrayGeometry(element_count=32, pitch=0.2e-3, sound_speed=1540.0)
    acquisition = AcquisitionParams(sample_count=256, sampling_rate=31.25e6,
                                    sound_speed=1540.0)
    grid = GridSpec((64, 32), 0.1e-3, 0.2e-3)
    op = PhotoacousticOperator(grid, geometry, acquisition,
                               default_impulse_response(acquisition.sampling_rate),
                               ForwardConfig())
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(20):
        s = rng.standard_normal(grid.shape)
        q = rng.standard_normal((256, 32))
        lhs = float(np.sum(op.apply(s) * q))
        rhs = float(np.sum(s * op.adjoint(q)))
        worst = max(worst, abs(lhs - rhs) / abs(lhs))
    elapsed = time.perf_counter() - start
    assert worst < 1e-6
    assert elapsed < 10.0
    _report("adjoint identity", f"worst relative error {worst:.2e}, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. LUT/DAS oracle equivalence
# ---------------------------------------------------------------------------


def test_acceptance_lut_das_oracle():
    geometry = ArrayGeometry(element_count=16, pitch=0.2e-3, sound_speed=1540.0)
    acquisition = AcquisitionParams(sample_count=256, sampling_rate=31.25e6,
                                    sound_speed=1540.0)
    grid = GridSpec((64, 32), 0.1e-3, 0.1e-3)
    lut = build_lut(grid, geometry, acquisition)
    samples = np.arange(256, dtype=np.float64)
    positions = geometry.element_positions
    zs, xs = grid.z_coords(), grid.x_coords()
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        frame = RawFrame(rng.standard_normal((256, 16)), geometry, acquisition)
        fast = apply_lut(lut, frame).data.sum(axis=2)
        brute = np.zeros(grid.shape)
        for iz in range(grid.shape[0]):
            for ix in range(grid.shape[1]):
                acc = 0.0
                for j in range(16):
                    d = np.hypot(zs[iz], xs[ix] - positions[j])
                    p = d / 1540.0 * 31.25e6
                    if 0 <= p <= 255:
                        acc += np.interp(p, samples, frame.data[:, j])
                brute[iz, ix] = acc
        scale = np.abs(brute).max()
        err = np.abs(fast - brute).max() / scale
        worst = max(worst, err)
    assert worst < 1e-12
    _report("LUT/DAS oracle equivalence", f"worst relative error {worst:.2e} over 5 frames")


# ---------------------------------------------------------------------------
# 3. DMAS brute force
# ---------------------------------------------------------------------------


def test_acceptance_dmas_brute_force():
    from parec import dmas_pair_sum

    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(1000):
        J = int(rng.integers(2, 17))
        vec = rng.standard_normal(J) * 10 ** rng.uniform(-2, 2)
        g = np.sign(vec) * np.sqrt(np.abs(vec))
        brute = sum(g[a] * g[b] for a in range(J) for b in range(a + 1, J))
        fast = dmas_pair_sum(vec)
        # relative to the enumeration's magnitude scale: a nearly-cancelling
        # pair sum would otherwise amplify pure float ordering noise
        magnitude = sum(abs(g[a] * g[b]) for a in range(J) for b in range(a + 1, J))
        denom = max(abs(brute), magnitude, 1e-30)
        worst = max(worst, abs(fast - brute) / denom)
    assert worst < 1e-12
    _report("DMAS brute-force equivalence", f"worst relative error {worst:.2e} over 1000 vectors")


# ---------------------------------------------------------------------------
# 4. MV unity gain
# ---------------------------------------------------------------------------


def test_acceptance_mv_unity_gain():
    geometry = ArrayGeometry(element_count=32, pitch=0.2e-3, sound_speed=1540.0)
    acquisition = AcquisitionParams(sample_count=512, sampling_rate=62.5e6,
                                    sound_speed=1540.0)
    grid = GridSpec((64, 32), 0.1e-3, 0.2e-3)
    img = np.zeros(grid.shape)
    img[30, 10] = 1.0
    img[45, 20] = 0.5
    clean = forward(grid.image(img), geometry, acquisition,
                    default_impulse_response(acquisition.sampling_rate),
                    ForwardConfig()).data
    std = np.abs(clean).max() / 10 ** (25 / 20)
    frame = RawFrame(clean + seeded_channel_noise(clean.shape, std, 2), geometry,
                     acquisition)
    tensor = apply_lut(build_lut(grid, geometry, acquisition), frame)
    _, info = minimum_variance(tensor, MvConfig(subarray_length=16), return_info=True)
    sums = info["weights"].sum(axis=2)
    gain_err = np.abs(sums - 1.0).max()
    assert gain_err < 1e-10

    uniform_err = np.abs(mv_weights(np.eye(32)) - 1.0 / 32).max()
    assert uniform_err < 1e-6
    _report("MV unity gain",
            f"max |sum(w)-1| {gain_err:.2e} over {sums.size} pixels; "
            f"identity-limit deviation {uniform_err:.2e}")


# ---------------------------------------------------------------------------
# 5. ISTA descent
# ---------------------------------------------------------------------------


def test_acceptance_ista_descent():
    geometry = ArrayGeometry(element_count=32, pitch=0.1e-3, sound_speed=1540.0)
    acquisition = AcquisitionParams(sample_count=256, sampling_rate=31.25e6,
                                    sound_speed=1540.0)
    grid = GridSpec((64, 32), 0.1e-3, 0.1e-3)
    img = np.zeros(grid.shape)
    img[20:24, 10:20] = 1.0
    img[40, 5:25] = 0.7
    h = default_impulse_response(acquisition.sampling_rate)
    clean = forward(grid.image(img), geometry, acquisition, h,
                    ForwardConfig(noise_std=0.0)).data
    std = np.abs(clean).max() / 10 ** (20 / 20)
    frame = RawFrame(clean + seeded_channel_noise(clean.shape, std, 3),
                     geometry, acquisition)
    op = PhotoacousticOperator(grid, geometry, acquisition, h, ForwardConfig())
    op_n, y_n = normalized_problem(op, frame.data)
    cfg = CsConfig(tv_weight=0.02, wavelet_weight=0.005, step="auto", max_iters=100,
                   grad_norm_tol=0.0)
    result = ista_solve(op_n, y_n, cfg)
    objectives = np.array([r.objective for r in result.log])
    assert len(objectives) == 101
    ratios = objectives[1:] / objectives[:-1]
    assert np.all(ratios <= 1 + 1e-9)
    _report("ISTA descent",
            f"objective {objectives[0]:.4f} -> {objectives[-1]:.4f}, "
            f"max step ratio {ratios.max():.12f}, 100 iterations")


# ---------------------------------------------------------------------------
# 6. k-space evanescent rule and line asymmetry
# ---------------------------------------------------------------------------


def test_acceptance_kspace_evanescent_and_lines():
    geometry = ArrayGeometry(element_count=128, pitch=0.1e-3, sound_speed=1540.0)
    acquisition = AcquisitionParams(sample_count=2048, sampling_rate=62.5e6,
                                    sound_speed=1540.0)
    grid = GridSpec((256, 128), 0.1e-3, 0.1e-3)
    rng = np.random.default_rng(4)
    Y = kspace_forward_map(grid.image(rng.random(grid.shape)), acquisition, geometry)
    f = np.fft.fftfreq(2048, 1 / 62.5e6)
    kx = np.fft.fftfreq(128, 0.1e-3)
    F, KX = np.meshgrid(f, kx, indexing="ij")
    evanescent = np.abs(F) < 1540.0 * np.abs(KX)
    leak = np.abs(Y[evanescent]).max()
    assert leak == 0.0

    cfg = ForwardConfig(use_derivative=True, use_directivity=False, noise_std=0.0)
    vertical = np.zeros(grid.shape)
    vertical[96:160, 64] = 1.0  # 6.4 mm along z
    horizontal = np.zeros(grid.shape)
    horizontal[128, 32:96] = 1.0  # 6.4 mm along x
    rec_v = kspace_reconstruct(forward(grid.image(vertical), geometry, acquisition,
                                       None, cfg), grid)
    rec_h = kspace_reconstruct(forward(grid.image(horizontal), geometry, acquisition,
                                       None, cfg), grid)
    energy_v = float(np.sum(np.abs(rec_v.data)[vertical > 0] ** 2))
    energy_h = float(np.sum(np.abs(rec_h.data)[horizontal > 0] ** 2))
    ratio = energy_v / energy_h
    assert ratio < 0.2
    _report("k-space evanescent rule",
            f"evanescent leak {leak}, vertical/horizontal in-support energy "
            f"ratio {ratio:.3f}")


# ---------------------------------------------------------------------------
# 7. comparison trend on generated phantoms
# ---------------------------------------------------------------------------


def _log_compress(image, db_range=40.0):
    image = np.abs(np.asarray(image, dtype=np.float64))
    peak = image.max()
    if peak == 0:
        return np.zeros_like(image)
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(image / peak)
    return np.clip(db, -db_range, 0.0) / db_range + 1.0


@pytest.mark.slow
def test_acceptance_method_comparison_trend(tmp_path):
    """DAS < {MV, DMAS, ISTA} in mean PSNR by >= 0.5 dB on 50 phantoms.

    Scores are computed in the 40 dB log-compressed envelope domain (the
    display convention of this field); the raw linear-domain PSNR of
    derivative-band-limited reconstructions of solid vessels saturates at the
    zero-prediction bound for every classical method and cannot rank them.
    """
    start = time.perf_counter()
    geometry = ArrayGeometry(element_count=128, pitch=0.1e-3, sound_speed=1540.0)
    acquisition = AcquisitionParams(sample_count=2048, sampling_rate=62.5e6,
                                    sound_speed=1540.0)
    # desk-scale field of view starting at 2 mm depth: keeps the singular
    # near-field rows out of every method's comparison
    grid = GridSpec((256, 128), 0.05e-3, 0.1e-3, origin=(2e-3, -63.5 * 0.1e-3))
    spec = AugmentSpec()
    h = default_impulse_response(acquisition.sampling_rate)
    fwd = ForwardConfig(use_derivative=True, use_directivity=True, noise_std=0.0)

    records = generate_dataset(50, spec, grid, geometry, acquisition,
                               tmp_path / "trend", h=h, forward_config=fwd,
                               master_seed=2024)
    lut = build_lut(grid, geometry, acquisition)
    op = PhotoacousticOperator(grid, geometry, acquisition, h, fwd)
    op.spectral_norm_sq()
    cs = CsConfig(tv_weight=0.02, wavelet_weight=0.005, max_iters=60,
                  grad_norm_tol=1e-4)

    scores = {m: {"psnr": [], "ssim": []} for m in ("das", "mv", "dmas", "ista")}
    for rec in records:
        truth = _log_compress(rec.ground_truth.data)
        frame = RawFrame(rec.raw.data.astype(np.float64), geometry, acquisition)
        tensor = apply_lut(lut, frame)
        images = {
            "das": das(tensor, DasConfig(f_number=0.5, apply_hilbert=True)).data,
            "mv": minimum_variance(tensor, MvConfig()).data,
            "dmas": dmas(tensor, DmasConfig()).data,
        }
        op_n, y_n = normalized_problem(op, frame.data)
        images["ista"] = np.maximum(ista_solve(op_n, y_n, cs).image, 0.0)
        for method, image in images.items():
            estimate = _log_compress(image)
            scores[method]["psnr"].append(psnr(truth, estimate))
            scores[method]["ssim"].append(ssim(truth, estimate))

    mean_psnr = {m: float(np.mean(v["psnr"])) for m, v in scores.items()}
    mean_ssim = {m: float(np.mean(v["ssim"])) for m, v in scores.items()}
    elapsed = time.perf_counter() - start

    for method in ("mv", "dmas", "ista"):
        assert mean_psnr[method] >= mean_psnr["das"] + 0.5, (
            f"{method} does not beat DAS by 0.5 dB: {mean_psnr}"
        )
    assert all(v < 0.5 for v in mean_ssim.values()), mean_ssim
    assert mean_ssim["ista"] >= mean_ssim["das"]
    assert elapsed < 30 * 60
    _report(
        "method comparison trend",
        "PSNR " + " ".join(f"{m}={mean_psnr[m]:.2f}" for m in scores)
        + " | SSIM " + " ".join(f"{m}={mean_ssim[m]:.3f}" for m in scores)
        + f" | {elapsed / 60:.1f} min for 50 phantoms",
    )


# ---------------------------------------------------------------------------
# 8. metrics exactness
# ---------------------------------------------------------------------------


def test_acceptance_metrics_exactness():
    truth = np.zeros((2, 2))
    assert psnr(truth, truth + 0.1, i_max=1.0) == pytest.approx(20.0, abs=1e-9)

    big = np.zeros((512, 128))
    spike = big.copy()
    spike[7, 9] = 1.0
    assert psnr(big, spike, i_max=1.0) == pytest.approx(48.16479930623699, abs=1e-9)

    rng = np.random.default_rng(5)
    for _ in range(100):
        img = rng.random((32, 16))
        assert ssim(img, img) == 1.0
    _report("metrics exactness",
            "PSNR hand cases within 1e-9 dB; SSIM(a,a)=1 exact for 100 images")


# ---------------------------------------------------------------------------
# 9. Hankel rank diagnostic
# ---------------------------------------------------------------------------


def test_acceptance_hankel_rank_diagnostic():
    """Numerical rank (tol 1e-6) of the aligned tensor strictly below the
    +5% sound-speed-mismatched tensor, over 10 seeds.

    Known-red: two-tap interpolation keeps every relative singular value of
    these tensors above ~1e-1, so rank at 1e-6 saturates at the full matrix
    dimension for both tensors (see the project decision log for the full
    analysis and the energy-concentration diagnostic that does separate).
    """
    geometry = ArrayGeometry(element_count=8, pitch=0.2e-3, sound_speed=1540.0)
    acquisition = AcquisitionParams(sample_count=512, sampling_rate=62.5e6,
                                    sound_speed=1540.0)
    grid = GridSpec((32, 32), 0.1e-3, 0.1e-3)
    wrong_geom = ArrayGeometry(element_count=8, pitch=0.2e-3, sound_speed=1540.0 * 1.05)
    wrong_acq = AcquisitionParams(sample_count=512, sampling_rate=62.5e6,
                                  sound_speed=1540.0 * 1.05)
    lut_good = build_lut(grid, geometry, acquisition)
    lut_bad = build_lut(grid, wrong_geom, wrong_acq)
    spec = HankelSpec(4, 4)
    h = default_impulse_response(acquisition.sampling_rate)
    wins = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        img = np.zeros(grid.shape)
        img[rng.integers(12, 20), rng.integers(12, 20)] = 1.0
        frame = forward(grid.image(img), geometry, acquisition, h,
                        ForwardConfig(use_derivative=False, use_directivity=False,
                                      noise_std=0.0))
        frame_bad = RawFrame(frame.data, wrong_geom, wrong_acq)
        _, rank_aligned = hankel_rank_profile(apply_lut(lut_good, frame), spec,
                                              tol=1e-6)
        _, rank_mismatched = hankel_rank_profile(apply_lut(lut_bad, frame_bad), spec,
                                                 tol=1e-6)
        if rank_aligned < rank_mismatched:
            wins += 1
    assert wins == 10, (
        f"aligned rank strictly lower in {wins}/10 seeds at tol 1e-6 "
        "(saturates at full rank; see decision log)"
    )
    _report("Hankel rank diagnostic", f"{wins}/10 seeds")


# ---------------------------------------------------------------------------
# 10. performance
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_acceptance_performance(tmp_path):
    out = tmp_path / "bench"
    rc = cli_main([
        "benchmark", "--repetitions", "20", "--out", str(out), "--seed", "0",
    ])
    assert rc == 0
    report = json.loads((out / "benchmark.json").read_text())
    assert report["grid_shape"] == [512, 128]
    assert report["frame_shape"] == [2048, 128]
    total_median = report["stages"]["total"]["median_s"]
    assert total_median < 0.2
    assert (out / "benchmark.csv").is_file()
    _report(
        "performance",
        f"LUT apply + DAS + Hilbert median {total_median * 1e3:.1f} ms "
        f"(apply {report['stages']['lut_apply']['median_s'] * 1e3:.1f} ms) "
        f"on {report['machine']['cpu_count']} cores",
    )


# ---------------------------------------------------------------------------
# 11. dataset determinism through the CLI
# ---------------------------------------------------------------------------


def test_acceptance_dataset_determinism(tmp_path):
    args = [
        "dataset", "--count", "3", "--seed", "99",
        "--set", "geometry.element_count=32",
        "--set", "acquisition.sample_count=512",
        "--set", "grid.shape=[64, 32]",
        "--set", "grid.z_res=1e-4",
        "--set", "grid.x_res=1e-4",
        "--set", "dataset.augment.combine_count=2",
    ]
    assert cli_main(args + ["--out", str(tmp_path / "a")]) == 0
    assert cli_main(args + ["--out", str(tmp_path / "b")]) == 0
    names_a = sorted(p.name for p in (tmp_path / "a").iterdir())
    names_b = sorted(p.name for p in (tmp_path / "b").iterdir())
    assert names_a == names_b
    for name in names_a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    _report("dataset determinism", f"{len(names_a)} files byte-identical across reruns")
