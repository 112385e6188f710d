import json

import numpy as np
import pytest

from opencam import errors
from opencam.experiment_runner import (
    ExperimentConfig,
    RunSummary,
    night_scene,
    privacy_utility_table,
    run_attack_studies,
    run_attack_study,
    run_keyed_study,
    scene_bank,
    synthetic_scene,
)
from opencam.noise_gen import Rng


def small_cfg(tmp_path, **overrides):
    defaults = dict(
        scene_dims=(24, 24),
        psf_side=24,
        channels=1,
        key_seeds=(1, 2, 3, 4, 5),
        n_scenes=4,
        output_dir=str(tmp_path / "out"),
        master_seed=7,
        gamma=1e-6,
        epsilon=1e-6,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


# --- config ---


def test_config_roundtrip(tmp_path):
    cfg = small_cfg(tmp_path, attacks=("ikpa",))
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_dict()))
    back = ExperimentConfig.from_json(path)
    assert back == cfg


def test_config_rejects_bad_r_grid(tmp_path):
    with pytest.raises(errors.ConfigError):
        small_cfg(tmp_path, r_grid=(1e3, 1e2)).validate()


def test_config_rejects_unknown_attack(tmp_path):
    with pytest.raises(errors.ConfigError):
        small_cfg(tmp_path, attacks=("bogus",)).validate()


def test_config_rejects_missing_scene_dir(tmp_path):
    with pytest.raises(errors.ConfigError):
        small_cfg(tmp_path, scene_source=str(tmp_path / "nope")).validate()


# --- scenes ---


def test_synthetic_scenes_deterministic():
    a = synthetic_scene((16, 16), 1, Rng(3).child("x"))
    b = synthetic_scene((16, 16), 1, Rng(3).child("x"))
    assert np.array_equal(a, b)
    assert a.min() >= 0.0 and a.max() <= 1.0


def test_night_scene_is_sparse():
    s = night_scene((64, 64), 1, Rng(5).child("n"))
    assert float(s.mean()) / max(float(s.max()), 1e-9) < 0.02


def test_scene_bank_from_pngs(tmp_path):
    from opencam.tensor_store import save_png_visualization

    d = tmp_path / "scenes"
    d.mkdir()
    rng = np.random.default_rng(0)
    for i in range(3):
        save_png_visualization(
            rng.random((24, 24)).astype(np.float32), d / f"img{i}.png", normalize=False
        )
    cfg = small_cfg(tmp_path, scene_source=str(d), n_scenes=2)
    bank = scene_bank(cfg)
    assert [sid for sid, _ in bank] == ["img0", "img1"]
    assert bank[0][1].shape == (24, 24)


# --- keyed study ---


def test_keyed_study_row_counts_and_gap(tmp_path):
    cfg = small_cfg(tmp_path)
    summary = run_keyed_study(cfg)
    correct = [r for r in summary.rows if r["kind"] == "correct"]
    wrong = [r for r in summary.rows if r["kind"] == "wrong"]
    assert len(correct) == 5 * 4
    assert len(wrong) == 5 * 4
    assert summary.aggregates["psnr_gap"] >= 8.0
    csv_path = tmp_path / "out" / "keyed_opencam.csv"
    assert csv_path.exists()
    assert len(csv_path.read_text().strip().splitlines()) == 41  # header + rows


def test_keyed_study_deterministic(tmp_path):
    cfg_a = small_cfg(tmp_path, key_seeds=(1, 2), n_scenes=2, output_dir=str(tmp_path / "a"))
    cfg_b = small_cfg(tmp_path, key_seeds=(1, 2), n_scenes=2, output_dir=str(tmp_path / "b"))
    run_keyed_study(cfg_a)
    run_keyed_study(cfg_b)
    csv_a = (tmp_path / "a" / "keyed_opencam.csv").read_bytes()
    csv_b = (tmp_path / "b" / "keyed_opencam.csv").read_bytes()
    assert csv_a == csv_b
    t_a = (tmp_path / "a" / "measurements" / "key1_scene000.ocam").read_bytes()
    t_b = (tmp_path / "b" / "measurements" / "key1_scene000.ocam").read_bytes()
    assert t_a == t_b


def test_keyed_study_with_workers_matches_serial(tmp_path):
    cfg_a = small_cfg(tmp_path, key_seeds=(1, 2), n_scenes=2, output_dir=str(tmp_path / "a"))
    cfg_b = small_cfg(
        tmp_path, key_seeds=(1, 2), n_scenes=2, output_dir=str(tmp_path / "b"), workers=4
    )
    sa = run_keyed_study(cfg_a)
    sb = run_keyed_study(cfg_b)
    assert sa.rows == sb.rows


# --- attack studies ---


def test_empty_attack_selection_is_noop(tmp_path):
    cfg = small_cfg(tmp_path)
    summaries = run_attack_studies(cfg)
    assert len(summaries) == 1
    assert summaries[0].rows == []
    assert summaries[0].aggregates["n_rows"] == 0


def test_autocorr_study(tmp_path):
    cfg = small_cfg(tmp_path, key_seeds=(1, 2))
    summary = run_attack_study(cfg, "autocorr")
    assert len(summary.rows) == 2
    assert all("score" in r for r in summary.rows)


def test_threshold_study(tmp_path):
    cfg = small_cfg(tmp_path, key_seeds=(1,), design="phlatcam_contour-double")
    summary = run_attack_study(cfg, "threshold")
    assert summary.rows[0]["best_iou"] >= 0.99


def test_ikpa_study_flags_single_mask_break(tmp_path):
    cfg_single = small_cfg(
        tmp_path, key_seeds=(1, 2), design="opencam-single",
        output_dir=str(tmp_path / "s"), gamma=3e-4, epsilon=1e-3,
    )
    cfg_double = small_cfg(
        tmp_path, key_seeds=(1, 2), design="opencam",
        output_dir=str(tmp_path / "d"), gamma=3e-4, epsilon=1e-3,
    )
    s = run_attack_study(cfg_single, "ikpa")
    d = run_attack_study(cfg_double, "ikpa")
    assert all(r["broken"] for r in s.rows)
    assert not any(r["broken"] for r in d.rows)
    montage = tmp_path / "s" / "attacks" / "ikpa" / "opencam-single_key1" / "montage.png"
    assert montage.exists()


def test_uikpa_study_trend_flag(tmp_path):
    cfg = small_cfg(
        tmp_path,
        key_seeds=(1,),
        n_scenes=1,
        r_grid=(1e2, 1e5),
        als_outer_iters=15,
    )
    summary = run_attack_study(cfg, "uikpa")
    assert len(summary.rows) == 2
    assert summary.aggregates["all_monotone"] == 1
    assert summary.aggregates["trend_non_decreasing"] == 1


# --- privacy-utility table ---


def test_table_requires_studies(tmp_path):
    with pytest.raises(errors.MissingStudy):
        privacy_utility_table([], [])


def test_table_single_design(tmp_path):
    keyed = RunSummary(
        "keyed",
        [{"design": "opencam", "kind": "correct", "psnr": 30.0, "ssim": 0.9}],
    )
    attack = RunSummary(
        "ikpa", [{"design": "opencam", "attack_psnr": 12.0}]
    )
    rows = privacy_utility_table([keyed], [attack], tmp_path)
    assert len(rows) == 1
    assert rows[0]["utility_psnr"] == 30.0
    assert rows[0]["privacy_attack_psnr"] == 12.0
    assert (tmp_path / "privacy_utility.csv").exists()
    assert (tmp_path / "privacy_utility.png").exists()


def test_table_identical_summaries_identical_rows(tmp_path):
    keyed = [
        RunSummary("keyed", [{"design": d, "kind": "correct", "psnr": 30.0, "ssim": 0.9}])
        for d in ("a", "b")
    ]
    attacks = [
        RunSummary("ikpa", [{"design": d, "attack_psnr": 10.0}]) for d in ("a", "b")
    ]
    rows = privacy_utility_table(keyed, attacks)
    stripped = [{k: v for k, v in r.items() if k != "design"} for r in rows]
    assert stripped[0] == stripped[1]


def test_table_orders_double_below_single_under_ikpa(tmp_path):
    cfg_single = small_cfg(
        tmp_path, key_seeds=(1, 2), design="opencam-single",
        output_dir=str(tmp_path / "s"), attacks=("ikpa",),
    )
    cfg_double = small_cfg(
        tmp_path, key_seeds=(1, 2), design="opencam",
        output_dir=str(tmp_path / "d"), attacks=("ikpa",),
    )
    keyed = [run_keyed_study(cfg_single), run_keyed_study(cfg_double)]
    attacks = [run_attack_study(cfg_single, "ikpa"), run_attack_study(cfg_double, "ikpa")]
    rows = privacy_utility_table(keyed, attacks, tmp_path)
    by_design = {r["design"]: r for r in rows}
    assert (
        by_design["opencam"]["privacy_attack_psnr"]
        < by_design["opencam-single"]["privacy_attack_psnr"]
    )
