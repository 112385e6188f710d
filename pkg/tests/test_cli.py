import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from opencam.tensor_store import read_tensor, save_png_visualization, write_tensor


def run_cli(*args):
    return subprocess.run(
        [sys.executable, "-m", "opencam", *map(str, args)],
        capture_output=True,
        text=True,
    )


@pytest.fixture(scope="module")
def key_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("key")
    result = run_cli(
        "keygen", "--seed", 3, "--psf-side", 24, "--scene-dims", "24x24", "--out", d
    )
    assert result.returncode == 0, result.stderr
    return d


@pytest.fixture(scope="module")
def scene_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("scene")
    rng = np.random.default_rng(0)
    scene = (rng.random((24, 24)) * 0.8).astype(np.float32)
    path = d / "scene.ocam"
    write_tensor(scene, path)
    return path


# --- keygen ---


def test_keygen_writes_artifacts(key_dir):
    for name in ("psf.ocam", "scaling.ocam", "key.json", "psf.png", "scaling.png"):
        assert (key_dir / name).exists()


def test_keygen_deterministic(tmp_path):
    hashes = []
    for sub in ("a", "b"):
        out = tmp_path / sub
        result = run_cli(
            "keygen", "--seed", 11, "--psf-side", 24, "--scene-dims", "24x24",
            "--out", out, "--quiet",
        )
        assert result.returncode == 0
        hashes.append(hashlib.sha256((out / "key.json").read_bytes()).hexdigest())
    assert hashes[0] == hashes[1]


def test_keygen_baseline_pinhole(tmp_path):
    out = tmp_path / "pin"
    result = run_cli(
        "keygen", "--seed", 2, "--psf-side", 24, "--scene-dims", "24x24",
        "--baseline", "multi_pinhole", "--out", out,
    )
    assert result.returncode == 0
    psf = read_tensor(out / "psf.ocam")
    assert int(np.count_nonzero(psf)) == 16


def test_keygen_missing_out_exits_2():
    result = run_cli("keygen", "--seed", 1)
    assert result.returncode == 2
    assert "error" in result.stderr


def test_unknown_flag_rejected():
    result = run_cli("keygen", "--seed", 1, "--bogus-flag", 3)
    assert result.returncode == 2


def test_help_exits_zero():
    for sub in ("keygen", "encrypt", "decrypt", "attack", "study", "inspect"):
        result = run_cli(sub, "--help")
        assert result.returncode == 0
        assert "--help" in result.stdout or "usage" in result.stdout


# --- encrypt ---


def test_encrypt_deterministic(key_dir, scene_file, tmp_path):
    files = []
    for sub in ("a.ocam", "b.ocam"):
        out = tmp_path / sub
        result = run_cli(
            "encrypt", "--key", key_dir, "--scene", scene_file,
            "--sigma", 0, "--out", out, "--quiet",
        )
        assert result.returncode == 0, result.stderr
        files.append(out.read_bytes())
    assert files[0] == files[1]


def test_encrypt_bright_flag(key_dir, scene_file, tmp_path):
    plain_out = tmp_path / "plain.ocam"
    run_cli("encrypt", "--key", key_dir, "--scene", scene_file, "--out", plain_out, "--quiet")
    out = tmp_path / "bright.ocam"
    result = run_cli(
        "encrypt", "--key", key_dir, "--scene", scene_file,
        "--bright", "1000@12,12", "--out", out, "--quiet",
    )
    assert result.returncode == 0, result.stderr
    # the added point of amplitude a = 1000 * max(scene) rides on top of
    # the plain capture; its flux lands scaled by S in [s_min, 1]
    scene = read_tensor(scene_file).astype(np.float64)
    diff = read_tensor(out).astype(np.float64) - read_tensor(plain_out).astype(np.float64)
    a = 1000.0 * float(scene.max())
    assert 0.2 * a <= float(diff.sum()) <= 1.001 * a


def test_encrypt_dim_mismatch_exits_4(key_dir, tmp_path):
    bad_scene = tmp_path / "bad.ocam"
    write_tensor(np.zeros((10, 10), dtype=np.float32), bad_scene)
    out = tmp_path / "m.ocam"
    result = run_cli("encrypt", "--key", key_dir, "--scene", bad_scene, "--out", out)
    assert result.returncode == 4
    assert json.loads(result.stderr.strip())["error"] == "DimMismatch"


# --- decrypt ---


@pytest.fixture(scope="module")
def measurement_file(key_dir, scene_file, tmp_path_factory):
    d = tmp_path_factory.mktemp("m")
    out = d / "m.ocam"
    result = run_cli(
        "encrypt", "--key", key_dir, "--scene", scene_file, "--sigma", 0,
        "--out", out, "--quiet",
    )
    assert result.returncode == 0
    return out


def test_decrypt_reports_high_psnr(key_dir, scene_file, measurement_file, tmp_path):
    out = tmp_path / "recon.ocam"
    result = run_cli(
        "decrypt", "--key", key_dir, "--measurement", measurement_file,
        "--gamma", 1e-6, "--epsilon", 1e-6, "--truth", scene_file,
        "--out", out, "--quiet",
    )
    assert result.returncode == 0, result.stderr
    metrics = json.loads(out.with_suffix(".metrics.json").read_text())
    assert metrics["psnr"] >= 40.0


def test_decrypt_records_default_gamma(key_dir, measurement_file, tmp_path):
    out = tmp_path / "recon.ocam"
    result = run_cli(
        "decrypt", "--key", key_dir, "--measurement", measurement_file,
        "--out", out, "--quiet",
    )
    assert result.returncode == 0
    metrics = json.loads(out.with_suffix(".metrics.json").read_text())
    assert metrics["gamma"] == pytest.approx(3e-4)
    assert metrics["epsilon"] == pytest.approx(1e-3)


def test_decrypt_wrong_key_never_crashes(measurement_file, scene_file, tmp_path):
    wrong = tmp_path / "wrongkey"
    result = run_cli(
        "keygen", "--seed", 999, "--psf-side", 24, "--scene-dims", "24x24",
        "--out", wrong, "--quiet",
    )
    assert result.returncode == 0
    out = tmp_path / "recon.ocam"
    result = run_cli(
        "decrypt", "--key", wrong, "--measurement", measurement_file,
        "--truth", scene_file, "--out", out, "--quiet",
    )
    assert result.returncode == 0
    metrics = json.loads(out.with_suffix(".metrics.json").read_text())
    assert metrics["psnr"] < 20.0


# --- attack ---


def test_attack_autocorr_reports_score(key_dir, tmp_path):
    out = tmp_path / "ac"
    result = run_cli("attack", "--kind", "autocorr", "--key", key_dir, "--out", out, "--quiet")
    assert result.returncode == 0, result.stderr
    report = json.loads((out / "report.json").read_text())
    assert "impulse_likeness" in report["metrics"]


def test_attack_threshold_on_binary_key(tmp_path):
    keyd = tmp_path / "binkey"
    run_cli(
        "keygen", "--seed", 5, "--psf-side", 24, "--scene-dims", "24x24",
        "--baseline", "phlatcam_contour", "--out", keyd, "--quiet",
    )
    out = tmp_path / "th"
    result = run_cli("attack", "--kind", "threshold", "--key", keyd, "--out", out, "--quiet")
    assert result.returncode == 0, result.stderr
    report = json.loads((out / "report.json").read_text())
    assert report["metrics"]["best_iou"] >= 0.99


def test_attack_uikpa_trace_monotone(key_dir, tmp_path):
    out = tmp_path / "ui"
    result = run_cli(
        "attack", "--kind", "uikpa", "--key", key_dir, "--r", 1000,
        "--outer-iters", 8, "--out", out, "--quiet",
    )
    assert result.returncode == 0, result.stderr
    lines = (out / "trace.csv").read_text().strip().splitlines()[1:]
    objectives = [float(line.split(",")[2]) for line in lines]
    slack = 1e-9 * max(objectives[0], 1.0) + 1e-12
    assert all(b <= a + slack for a, b in zip(objectives, objectives[1:]))
    assert (out / "montage.png").exists()


def test_attack_unknown_kind_exits_2(key_dir, tmp_path):
    result = run_cli("attack", "--kind", "nope", "--key", key_dir, "--out", tmp_path)
    assert result.returncode == 2


# --- study ---


def test_study_runs_from_config(tmp_path):
    cfg = {
        "scene_dims": [24, 24],
        "psf_side": 24,
        "key_seeds": [1, 2],
        "n_scenes": 2,
        "attacks": ["ikpa"],
        "output_dir": str(tmp_path / "out"),
        "master_seed": 3,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    result = run_cli("study", "--config", cfg_path, "--quiet")
    assert result.returncode == 0, result.stderr
    assert (tmp_path / "out" / "keyed_opencam.csv").exists()
    assert (tmp_path / "out" / "attack_ikpa_opencam.csv").exists()
    assert (tmp_path / "out" / "privacy_utility.csv").exists()


def test_study_requires_config(tmp_path):
    result = run_cli("study", "--out", tmp_path)
    assert result.returncode == 2


# --- inspect ---


def test_inspect_tensor(tmp_path):
    path = tmp_path / "t.ocam"
    write_tensor(np.arange(6, dtype=np.float32).reshape(2, 3), path)
    result = run_cli("inspect", path)
    assert result.returncode == 0
    info = json.loads(result.stdout)
    assert info["dims"] == [2, 3]
    assert info["max"] == 5.0


def test_inspect_key_dir(key_dir):
    result = run_cli("inspect", key_dir)
    assert result.returncode == 0
    info = json.loads(result.stdout)
    assert info["type"] == "key"
    assert info["psf_dims"] == [24, 24]


def test_inspect_png_scene(tmp_path):
    png = tmp_path / "s.png"
    save_png_visualization(
        np.random.default_rng(0).random((24, 24)).astype(np.float32), png, normalize=False
    )
    result = run_cli("inspect", tmp_path / "s.png.json")
    assert result.returncode == 0
