import json

import numpy as np

from parec import (
    AcquisitionParams,
    ArrayGeometry,
    DatasetRecord,
    ForwardConfig,
    GridSpec,
    PhotoacousticOperator,
    RawFrame,
    read_dataset,
    write_dataset,
)
from parec.cli import EXIT_CONFIG, EXIT_OK, load_config, main
from parec.solvers import normalized_problem


GEOM = ArrayGeometry(element_count=32, pitch=0.1e-3, sound_speed=1540.0)
ACQ = AcquisitionParams(sample_count=512, sampling_rate=62.5e6, sound_speed=1540.0)
GRID = GridSpec((64, 32), 0.1e-3, 0.1e-3)

SMALL_OVERRIDES = [
    "--set", "geometry.element_count=32",
    "--set", "acquisition.sample_count=512",
    "--set", 'grid.shape=[64, 32]',
    "--set", "grid.z_res=1e-4",
    "--set", "grid.x_res=1e-4",
]


def _write_point_dataset(path, amplitude=1.0):
    from parec import default_impulse_response

    img = np.zeros(GRID.shape, dtype=np.float32)
    img[40, 16] = amplitude
    op = PhotoacousticOperator(GRID, GEOM, ACQ,
                               default_impulse_response(ACQ.sampling_rate),
                               ForwardConfig())
    raw = op.apply(img.astype(np.float64))
    record = DatasetRecord(
        ground_truth=GRID.image(img),
        raw=RawFrame(raw.astype(np.float32), GEOM, ACQ),
        snr_db=None,
        seed=1,
    )
    write_dataset([record], path)


def test_dataset_command_and_determinism(tmp_path):
    args = [
        "dataset", "--count", "4", "--seed", "11",
        *SMALL_OVERRIDES,
        "--set", "dataset.augment.combine_count=2",
        "--set", "preview.emit=false",
    ]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    files_a = sorted(p.name for p in (tmp_path / "a").iterdir())
    files_b = sorted(p.name for p in (tmp_path / "b").iterdir())
    assert files_a == files_b
    for name in files_a:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    records = read_dataset(tmp_path / "a")
    assert len(records) == 4


def test_simulate_zero_image_gives_zero_frames(tmp_path):
    src = tmp_path / "src"
    img = np.zeros(GRID.shape, dtype=np.float32)
    record = DatasetRecord(
        ground_truth=GRID.image(img),
        raw=RawFrame(np.zeros((512, 32), dtype=np.float32), GEOM, ACQ),
        seed=0,
    )
    write_dataset([record], src)
    out = tmp_path / "out"
    args = [
        "simulate", "--input", str(src), "--out", str(out),
        *SMALL_OVERRIDES,
        "--set", "forward.noise_std=0.0",
    ]
    assert main(args) == EXIT_OK
    sim = read_dataset(out)
    assert not np.any(sim[0].raw.data)
    assert (out / "run_config.json").is_file()


def test_simulate_deterministic(tmp_path):
    src = tmp_path / "src"
    _write_point_dataset(src)
    args = [
        "simulate", "--input", str(src),
        *SMALL_OVERRIDES,
        "--set", "forward.noise_std=0.1",
        "--seed", "3",
    ]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    a = read_dataset(tmp_path / "a")
    b = read_dataset(tmp_path / "b")
    assert np.array_equal(a[0].raw.data, b[0].raw.data)


def test_simulate_missing_input_exits_2(tmp_path, capsys):
    assert main(["simulate", "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert "io.input" in capsys.readouterr().err


def test_reconstruct_das_peak_and_outputs(tmp_path):
    src = tmp_path / "src"
    _write_point_dataset(src)
    out = tmp_path / "das"
    args = [
        "reconstruct", "--input", str(src), "--out", str(out), "--method", "das",
        *SMALL_OVERRIDES,
    ]
    assert main(args) == EXIT_OK
    manifest = json.loads((out / "images.json").read_text())
    assert manifest["method"] == "das"
    img = np.fromfile(out / manifest["records"][0]["file"], dtype="<f4").reshape(64, 32)
    peak = np.unravel_index(np.argmax(img), img.shape)
    assert abs(peak[0] - 40) <= 1 and abs(peak[1] - 16) <= 1
    assert (out / "metrics.csv").is_file()
    assert (out / "rec00000_das.png").is_file()
    assert (out / "run_config.json").is_file()


def test_reconstruct_ista_zero_iterations_returns_initialization(tmp_path):
    src = tmp_path / "src"
    _write_point_dataset(src)
    out = tmp_path / "ista0"
    args = [
        "reconstruct", "--input", str(src), "--out", str(out), "--method", "ista",
        *SMALL_OVERRIDES,
        "--set", "method.ista.max_iters=0",
        "--set", "forward.use_directivity=false",
        "--set", "forward.impulse_response=\"identity\"",
    ]
    assert main(args) == EXIT_OK
    img = np.fromfile(out / "rec00000_ista.bin", dtype="<f4").reshape(64, 32)
    records = read_dataset(src)
    op = PhotoacousticOperator(GRID, GEOM, ACQ, None, ForwardConfig(use_directivity=False))
    op_n, y_n = normalized_problem(op, records[0].raw.data.astype(np.float64))
    expected = op_n.adjoint(y_n)
    assert np.allclose(img, expected, rtol=1e-5, atol=1e-5 * np.abs(expected).max())


def test_reconstruct_rejects_oversized_subarray(tmp_path, capsys):
    src = tmp_path / "src"
    _write_point_dataset(src)
    args = [
        "reconstruct", "--input", str(src), "--out", str(tmp_path / "o"),
        "--method", "mv",
        *SMALL_OVERRIDES,
        "--set", "method.mv.subarray_length=64",
    ]
    assert main(args) == EXIT_CONFIG
    assert "subarray" in capsys.readouterr().err


def test_unknown_method_rejected(tmp_path, capsys):
    args = ["reconstruct", "--input", "x", "--out", "y",
            "--set", 'method.name="magic"']
    assert main(args) == EXIT_CONFIG


def test_unknown_config_key_names_path(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"method": {"das": {"f_numbre": 0.5}}}))
    assert main(["benchmark", "--config", str(cfg), "--out", str(tmp_path)]) == EXIT_CONFIG
    assert "method.das.f_numbre" in capsys.readouterr().err


def test_config_file_toml_with_flag_override(tmp_path):
    cfg = tmp_path / "run.toml"
    cfg.write_text(
        "\n".join([
            "seed = 5",
            "[method]",
            'name = "das"',
            "[method.das]",
            "f_number = 0.1",
        ])
    )
    loaded = load_config(cfg, {"method.das.f_number": 0.25, "io.out": "somewhere"})
    assert loaded["seed"] == 5
    assert loaded["method"]["das"]["f_number"] == 0.25
    assert loaded["io"]["out"] == "somewhere"


def test_metrics_command(tmp_path):
    src = tmp_path / "src"
    _write_point_dataset(src)
    out = tmp_path / "rec"
    assert main([
        "reconstruct", "--input", str(src), "--out", str(out), "--method", "das",
        *SMALL_OVERRIDES, "--set", "preview.emit=false",
    ]) == EXIT_OK
    assert main(["metrics", "--truth", str(src), "--estimates", str(out)]) == EXIT_OK
    lines = (out / "metrics.csv").read_text().strip().splitlines()
    assert lines[0] == "index,psnr_db,ssim"
    assert lines[-2].startswith("mean,")
    assert lines[-1].startswith("std,")


def test_benchmark_single_repetition_median_equals_p95(tmp_path):
    out = tmp_path / "bench"
    args = [
        "benchmark", "--repetitions", "1", "--out", str(out),
        *SMALL_OVERRIDES,
    ]
    assert main(args) == EXIT_OK
    report = json.loads((out / "benchmark.json").read_text())
    for stage in ("lut_apply", "beamform", "postprocess"):
        assert stage in report["stages"]
        s = report["stages"][stage]
        assert s["median_s"] == s["p95_s"]


def test_benchmark_consecutive_runs_are_stable(tmp_path):
    args = [
        "benchmark", "--repetitions", "10",
        *SMALL_OVERRIDES,
    ]
    assert main(args + ["--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(args + ["--out", str(tmp_path / "b")]) == EXIT_OK
    med = []
    for run in ("a", "b"):
        report = json.loads((tmp_path / run / "benchmark.json").read_text())
        med.append(report["stages"]["total"]["median_s"])
    assert abs(med[0] - med[1]) < 0.5 * max(med)


def test_lut_cache_command(tmp_path, capsys):
    out = tmp_path / "cache"
    args = ["lut-cache", "--out", str(out), *SMALL_OVERRIDES]
    assert main(args) == EXIT_OK
    first = capsys.readouterr().out
    assert "key:" in first
    assert main(args) == EXIT_OK  # cache hit
    files = list(out.glob("lut_*.npz"))
    assert len(files) == 1
