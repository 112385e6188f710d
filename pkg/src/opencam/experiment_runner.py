"""Seeded end-to-end studies: keyed decryption, attacks, summary tables.

Every study is fully determined by its ExperimentConfig (including the
master seed): reruns produce byte-identical tensors and CSVs. Wall-clock
provenance goes only into ``run_meta.json`` so the deterministic artifacts
stay comparable.

Scenes come from a directory of PNGs or from the builtin synthetic bank
(colored-noise textures with gradients and soft blobs, low-passed to match
the spectra of downsampled photos). Bright-source captures come in two
regimes, per the amplitude law a = r * max(base) which makes the scene
clutter in the PSF estimate scale like sum(base) / a: the impulse-KPA study
uses a sparse, mostly dark base (a bright light at night; the attacker's
best case), while the joint uniform-impulse study uses a natural base so
the dependence on the source intensity r is expressed.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from . import __version__
from .attacks import (
    AlsConfig,
    autocorrelation,
    ikpa,
    impulse_likeness,
    threshold_support_attack,
    uikpa,
    ukpa_average,
    ukpa_usr,
)
from .decrypt import WienerConfig, keyed_decrypt
from .errors import ConfigError, MissingStudy
from .keygen import (
    Key,
    baseline_psf,
    draw_keyspec,
    generate_key,
    make_key,
    perlin_contour_psf,
    save_key,
)
from .metrics import psnr, ssim
from .noise_gen import ColoredNoiseSpec, Rng, colored_noise
from .optics import (
    Measurement,
    NoiseModel,
    bright_source_scene,
    forward_double,
    save_measurement,
    uniform_scene_response,
)
from .tensor_store import load_png_as_scene, save_png_visualization, write_tensor

ATTACK_KINDS = ("autocorr", "threshold", "ikpa", "ukpa-usr", "ukpa-avg", "uikpa")

# deterministic offset pairing each key with its wrong-key control
_WRONG_KEY_OFFSET = 1000003


@dataclass
class ExperimentConfig:
    scene_dims: tuple = (64, 64)
    psf_side: int = 64
    channels: int = 1
    key_seeds: tuple = (1, 2, 3)
    n_scenes: int = 4
    scene_source: str | None = None
    sigma: float = 0.0
    gamma: float = 3e-4
    epsilon: float = 1e-3
    als_outer_iters: int = 50
    als_psf_steps: int = 5
    attacks: tuple = ()
    r_grid: tuple = (1e2, 1e3, 1e4, 1e5)
    bright_r: float = 1e3
    ukpa_n: int = 100
    design: str = "opencam"
    output_dir: str = "runs/out"
    master_seed: int = 7
    workers: int = 1

    def validate(self) -> None:
        if len(self.scene_dims) != 2 or any(d <= 0 for d in self.scene_dims):
            raise ConfigError("scene_dims must be two positive ints")
        if self.psf_side <= 0 or self.n_scenes < 1 or not self.key_seeds:
            raise ConfigError("psf_side, n_scenes and key_seeds must be set")
        if list(self.r_grid) != sorted(set(self.r_grid)):
            raise ConfigError("r_grid must be strictly increasing")
        for kind in self.attacks:
            if kind not in ATTACK_KINDS:
                raise ConfigError(f"unknown attack kind {kind!r}")
        if self.scene_source is not None and not Path(self.scene_source).is_dir():
            raise ConfigError(f"scene_source {self.scene_source} does not exist")

    @property
    def sensor_dims(self) -> tuple:
        return (
            self.scene_dims[0] + self.psf_side - 1,
            self.scene_dims[1] + self.psf_side - 1,
        )

    def wiener(self) -> WienerConfig:
        return WienerConfig(gamma=self.gamma, epsilon=self.epsilon)

    def als(self) -> AlsConfig:
        return AlsConfig(
            outer_iters=self.als_outer_iters, psf_step_count=self.als_psf_steps
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("scene_dims", "key_seeds", "attacks", "r_grid"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        fields = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        for k in ("scene_dims", "key_seeds", "attacks", "r_grid"):
            if k in fields:
                fields[k] = tuple(fields[k])
        cfg = cls(**fields)
        cfg.validate()
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def config_hash(self) -> str:
        # identifies the experiment; where it runs (output_dir) and how
        # it is scheduled (workers) do not change the results
        payload = self.to_dict()
        payload.pop("output_dir", None)
        payload.pop("workers", None)
        blob = json.dumps(payload, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class RunSummary:
    study: str
    rows: list = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def save(self, out_dir, name: str) -> None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_rows_csv(self.rows, out_dir / f"{name}.csv")
        payload = {
            "study": self.study,
            "aggregates": self.aggregates,
            "provenance": self.provenance,
        }
        (out_dir / f"{name}_summary.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2)
        )


def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def write_rows_csv(rows: list, path) -> None:
    if rows:
        keys = list(rows[0].keys())
        lines = [",".join(keys)]
        lines += [",".join(_fmt(r.get(k, "")) for k in keys) for r in rows]
    else:
        lines = ["empty"]
    Path(path).write_text("\n".join(lines) + "\n")


def _mean(rows, key) -> float:
    vals = [r[key] for r in rows if key in r]
    return float(np.mean(vals)) if vals else float("nan")


def objective_non_increasing(objectives) -> bool:
    """Non-increase up to floating-point slack relative to the run scale."""
    if not objectives:
        return True
    slack = 1e-9 * max(objectives[0], 1.0) + 1e-12
    return all(b <= a + slack for a, b in zip(objectives, objectives[1:]))


def write_run_meta(cfg: ExperimentConfig, out_dir) -> None:
    """Wall-clock provenance; the only artifact allowed to differ between
    reruns of the same config."""
    meta = {
        "config_hash": cfg.config_hash(),
        "code_version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    Path(out_dir, "run_meta.json").write_text(json.dumps(meta, indent=2))


def _provenance(cfg: ExperimentConfig) -> dict:
    return {"config_hash": cfg.config_hash(), "code_version": __version__}


# --- scene synthesis --------------------------------------------------------


def synthetic_scene(dims, channels: int, rng: Rng) -> np.ndarray:
    """A diverse positive scene: colored-noise texture, blobs, a gradient.

    Texture roll-off is drawn from [2, 4] to match the ~1/f^2 power
    spectra of natural photographs the bank stands in for.
    """
    h, w = dims
    side = max(h, w)
    beta = float(rng.uniform(2.0, 4.0))
    texture = colored_noise(ColoredNoiseSpec(side, beta), rng.child("texture"))[:h, :w]
    texture = (texture - texture.min()) / max(texture.max() - texture.min(), 1e-9)

    gy, gx = np.mgrid[0:h, 0:w]
    angle = float(rng.uniform(0, 2 * np.pi))
    gradient = (np.cos(angle) * gx / w + np.sin(angle) * gy / h) * 0.5 + 0.5

    canvas = 0.6 * texture + 0.4 * gradient
    for _ in range(int(rng.integers(1, 5))):
        r = int(rng.integers(0, h))
        c = int(rng.integers(0, w))
        rad = int(rng.integers(2, max(3, side // 6)))
        amp = float(rng.uniform(-0.5, 0.8))
        yy, xx = np.mgrid[0:h, 0:w]
        canvas += amp * np.exp(-((yy - r) ** 2 + (xx - c) ** 2) / (2.0 * rad**2))
    canvas = np.clip(canvas, 0.0, 1.0)
    # photos at this resolution are downsampled captures; emulate the
    # anti-aliasing low-pass that implies
    canvas = gaussian_filter(canvas, sigma=0.8, mode="nearest")
    if channels == 3:
        tint = rng.uniform(0.6, 1.0, size=3)
        canvas = canvas[:, :, None] * tint[None, None, :]
    return canvas.astype(np.float32)


def night_scene(dims, channels: int, rng: Rng) -> np.ndarray:
    """Sparse dark base for bright-source captures (a few dim blobs)."""
    h, w = dims
    canvas = np.zeros((h, w))
    for _ in range(int(rng.integers(2, 4))):
        r = int(rng.integers(h // 8, h - h // 8))
        c = int(rng.integers(w // 8, w - w // 8))
        amp = float(rng.uniform(0.15, 0.25))
        yy, xx = np.mgrid[0:h, 0:w]
        canvas += amp * np.exp(-((yy - r) ** 2 + (xx - c) ** 2) / 2.0)
    canvas = np.clip(canvas, 0.0, 1.0)
    if channels == 3:
        canvas = np.repeat(canvas[:, :, None], 3, axis=2)
    return canvas.astype(np.float32)


def scene_bank(cfg: ExperimentConfig) -> list:
    """Deterministic list of (scene_id, tensor) pairs for a config."""
    if cfg.scene_source is not None:
        files = sorted(Path(cfg.scene_source).glob("*.png"))
        if not files:
            raise ConfigError(f"no PNGs in {cfg.scene_source}")
        out = []
        for f in files[: cfg.n_scenes]:
            out.append((f.stem, load_png_as_scene(f, cfg.channels)))
        return out
    rng = Rng(cfg.master_seed).child("scenes")
    return [
        (f"scene{i:03d}", synthetic_scene(cfg.scene_dims, cfg.channels, rng.child(i)))
        for i in range(cfg.n_scenes)
    ]


# --- keys per design --------------------------------------------------------


def design_key(design: str, seed: int, cfg: ExperimentConfig) -> Key:
    """Build the key of a given mask design; single-mask designs carry an
    all-ones scaling mask so the same pipelines apply."""
    if design in ("opencam", "opencam-double"):
        return generate_key(seed, cfg.psf_side, cfg.sensor_dims, cfg.channels)
    if design == "opencam-single":
        key = generate_key(seed, cfg.psf_side, cfg.sensor_dims, cfg.channels)
        return Key(psf=key.psf, scaling=np.ones_like(key.scaling), spec=key.spec)
    base = design.removesuffix("-double")
    double = design.endswith("-double")
    spec = draw_keyspec(seed, cfg.psf_side, cfg.sensor_dims, cfg.channels)
    psf = baseline_psf(base, spec)
    if double:
        scaling = make_key(spec).scaling
    else:
        shape = cfg.sensor_dims if cfg.channels == 1 else cfg.sensor_dims + (cfg.channels,)
        scaling = np.ones(shape, dtype=np.float32)
    return Key(psf=psf, scaling=scaling, spec=spec)


def _noise_rng(cfg: ExperimentConfig, *path) -> Rng | None:
    return Rng(cfg.master_seed).child("noise", *path) if cfg.sigma > 0 else None


# --- montage ----------------------------------------------------------------


def save_montage(panels: list, path, labels=None) -> None:
    """Horizontal side-by-side of [0, 1] panels with 2px separators."""
    norm = []
    for p in panels:
        p = np.asarray(p, dtype=np.float32)
        if p.ndim == 3 and p.shape[2] == 1:
            p = p[:, :, 0]
        norm.append(np.clip(p, 0.0, 1.0))
    h = max(p.shape[0] for p in norm)
    ndim3 = any(p.ndim == 3 for p in norm)
    sep_shape = (h, 2, 3) if ndim3 else (h, 2)
    cols = []
    for i, p in enumerate(norm):
        if ndim3 and p.ndim == 2:
            p = np.repeat(p[:, :, None], 3, axis=2)
        if p.shape[0] < h:
            pad = np.zeros((h - p.shape[0],) + p.shape[1:], dtype=p.dtype)
            p = np.concatenate([p, pad], axis=0)
        if i:
            cols.append(np.ones(sep_shape, dtype=np.float32))
        cols.append(p)
    save_png_visualization(np.concatenate(cols, axis=1), path, normalize=False)


# --- keyed study ------------------------------------------------------------


def run_keyed_study(cfg: ExperimentConfig) -> RunSummary:
    """Per (key, scene): encrypt, decrypt with the correct key, and with a
    deterministic wrong-key control; report PSNR/SSIM rows."""
    cfg.validate()
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenes = scene_bank(cfg)
    wiener = cfg.wiener()

    keys = {}
    wrong_keys = {}
    for seed in cfg.key_seeds:
        keys[seed] = design_key(cfg.design, seed, cfg)
        wrong_keys[seed] = design_key(cfg.design, seed + _WRONG_KEY_OFFSET, cfg)
        save_key(keys[seed], out / "keys" / f"key{seed}")
        save_png_visualization(keys[seed].psf, out / "keys" / f"key{seed}" / "psf.png")
        save_png_visualization(
            keys[seed].scaling, out / "keys" / f"key{seed}" / "scaling.png"
        )

    jobs = [(seed, sid, scene) for seed in cfg.key_seeds for sid, scene in scenes]

    def run_job(job):
        seed, sid, scene = job
        key = keys[seed]
        m = forward_double(
            scene, key, NoiseModel(cfg.sigma), _noise_rng(cfg, seed, sid), scene_id=sid
        )
        mdir = out / "measurements"
        mdir.mkdir(parents=True, exist_ok=True)
        save_measurement(m, mdir / f"key{seed}_{sid}.ocam")
        rows = []
        for kind, use_key in (("correct", key), ("wrong", wrong_keys[seed])):
            recon = keyed_decrypt(m, use_key, wiener, cfg.scene_dims)
            rdir = out / "recon"
            rdir.mkdir(parents=True, exist_ok=True)
            write_tensor(recon, rdir / f"key{seed}_{sid}_{kind}.ocam")
            rows.append(
                {
                    "study": "keyed",
                    "design": cfg.design,
                    "key_seed": seed,
                    "scene_id": sid,
                    "kind": kind,
                    "psnr": psnr(recon, scene),
                    "ssim": ssim(np.clip(recon, 0, 1), np.clip(scene, 0, 1)),
                }
            )
        return rows

    rows = []
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            for chunk in pool.map(run_job, jobs):
                rows.extend(chunk)
    else:
        for job in jobs:
            rows.extend(run_job(job))
    rows.sort(key=lambda r: (r["key_seed"], r["scene_id"], r["kind"]))

    correct = [r for r in rows if r["kind"] == "correct"]
    wrong = [r for r in rows if r["kind"] == "wrong"]
    aggregates = {
        "correct_psnr_mean": _mean(correct, "psnr"),
        "correct_ssim_mean": _mean(correct, "ssim"),
        "wrong_psnr_mean": _mean(wrong, "psnr"),
        "wrong_ssim_mean": _mean(wrong, "ssim"),
        "psnr_gap": _mean(correct, "psnr") - _mean(wrong, "psnr"),
        "n_rows": len(rows),
    }
    summary = RunSummary("keyed", rows, aggregates, _provenance(cfg))
    summary.save(out, f"keyed_{cfg.design}")
    write_run_meta(cfg, out)
    return summary


# --- attack studies ---------------------------------------------------------


def _keyed_reference(key, scene, cfg) -> tuple:
    """Correct-key decryption of one capture (the utility baseline)."""
    m = forward_double(scene, key, NoiseModel(cfg.sigma), _noise_rng(cfg, "ref"))
    recon = keyed_decrypt(m, key, cfg.wiener(), cfg.scene_dims)
    return m, recon, psnr(recon, scene)


def _bright_capture(key, cfg, r, seed, base_kind="night") -> Measurement:
    if base_kind == "night":
        base = night_scene(cfg.scene_dims, cfg.channels, Rng(cfg.master_seed).child("night", seed))
    else:
        base = synthetic_scene(
            cfg.scene_dims, cfg.channels, Rng(cfg.master_seed).child("bright-base", seed)
        )
    scene = bright_source_scene(base, r)
    return forward_double(
        scene, key, NoiseModel(cfg.sigma), _noise_rng(cfg, "bright", seed), scene_id="bright"
    )


def run_attack_study(cfg: ExperimentConfig, attack_kind: str) -> RunSummary:
    cfg.validate()
    if attack_kind not in ATTACK_KINDS:
        raise ConfigError(f"unknown attack kind {attack_kind!r}")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    runner = {
        "autocorr": _study_autocorr,
        "threshold": _study_threshold,
        "ikpa": _study_ikpa,
        "ukpa-usr": _study_ukpa_usr,
        "ukpa-avg": _study_ukpa_avg,
        "uikpa": _study_uikpa,
    }[attack_kind]
    rows, aggregates = runner(cfg, out)
    summary = RunSummary(attack_kind, rows, aggregates, _provenance(cfg))
    summary.save(out, f"attack_{attack_kind.replace('-', '_')}_{cfg.design}")
    write_run_meta(cfg, out)
    return summary


def run_attack_studies(cfg: ExperimentConfig) -> list:
    """Run every attack in cfg.attacks; empty selection gives a NoOp summary."""
    if not cfg.attacks:
        summary = RunSummary("noop", [], {"n_rows": 0}, _provenance(cfg))
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        summary.save(out, f"attack_noop_{cfg.design}")
        return [summary]
    return [run_attack_study(cfg, kind) for kind in cfg.attacks]


def _study_autocorr(cfg, out):
    rows = []
    for seed in cfg.key_seeds:
        key = design_key(cfg.design, seed, cfg)
        score = impulse_likeness(autocorrelation(key.psf, remove_dc=True))
        rows.append(
            {"study": "autocorr", "design": cfg.design, "key_seed": seed, "score": score}
        )
        adir = out / "attacks" / "autocorr"
        adir.mkdir(parents=True, exist_ok=True)
        save_png_visualization(
            autocorrelation(key.psf, remove_dc=True), adir / f"key{seed}_acorr.png"
        )
    return rows, {"score_mean": _mean(rows, "score"), "n_rows": len(rows)}


def structural_support(key: Key) -> np.ndarray:
    """The binary pattern a threshold attack tries to reveal: the PSF
    support for binary masks, the contour component otherwise."""
    psf2 = np.atleast_3d(key.psf)[:, :, 0]
    if len(np.unique(psf2)) <= 2:
        return (psf2 > 0).astype(np.float32)
    return perlin_contour_psf(key.spec)


def _study_threshold(cfg, out):
    from .optics import SceneSpec, synthesize_scene

    rows = []
    for seed in cfg.key_seeds:
        key = design_key(cfg.design, seed, cfg)
        impulse = synthesize_scene(
            SceneSpec(kind="impulse", dims=cfg.scene_dims, channels=cfg.channels)
        )
        y = forward_double(impulse, key, NoiseModel(cfg.sigma), _noise_rng(cfg, "th", seed))
        result = threshold_support_attack(
            y, structural_support(key), (cfg.psf_side, cfg.psf_side)
        )
        rows.append(
            {
                "study": "threshold",
                "design": cfg.design,
                "key_seed": seed,
                "best_iou": result.best_iou,
                "best_tau": result.best_tau,
            }
        )
    return rows, {"iou_mean": _mean(rows, "best_iou"), "n_rows": len(rows)}


def _study_ikpa(cfg, out):
    scenes = scene_bank(cfg)
    rows = []
    for seed in cfg.key_seeds:
        key = design_key(cfg.design, seed, cfg)
        sid, scene = scenes[seed % len(scenes)]
        m_target, keyed_recon, keyed_db = _keyed_reference(key, scene, cfg)
        y_bright = _bright_capture(key, cfg, cfg.bright_r, seed)
        report = ikpa(
            y_bright,
            m_target,
            (cfg.psf_side, cfg.psf_side),
            cfg.wiener(),
            cfg.scene_dims,
            true_scene=scene,
        )
        adir = out / "attacks" / "ikpa" / f"{cfg.design}_key{seed}"
        report.save(adir)
        save_montage(
            [scene, keyed_recon, report.decrypted], adir / "montage.png"
        )
        gap = keyed_db - report.metrics["psnr"]
        rows.append(
            {
                "study": "ikpa",
                "design": cfg.design,
                "key_seed": seed,
                "scene_id": sid,
                "r": cfg.bright_r,
                "keyed_psnr": keyed_db,
                "attack_psnr": report.metrics["psnr"],
                "gap_db": gap,
                "broken": int(gap <= 1.0),
            }
        )
    return rows, {
        "keyed_psnr_mean": _mean(rows, "keyed_psnr"),
        "attack_psnr_mean": _mean(rows, "attack_psnr"),
        "gap_mean": _mean(rows, "gap_db"),
        "n_rows": len(rows),
    }


def _study_ukpa_usr(cfg, out):
    scenes = scene_bank(cfg)
    rows = []
    for seed in cfg.key_seeds:
        key = design_key(cfg.design, seed, cfg)
        sid, scene = scenes[seed % len(scenes)]
        m_target, keyed_recon, keyed_db = _keyed_reference(key, scene, cfg)
        usr = uniform_scene_response(key, 1.0, NoiseModel(cfg.sigma), _noise_rng(cfg, "usr", seed))
        report = ukpa_usr(
            usr,
            m_target,
            key.psf,
            cfg.wiener(),
            cfg.scene_dims,
            true_scaling=key.scaling,
            true_scene=scene,
        )
        adir = out / "attacks" / "ukpa_usr" / f"{cfg.design}_key{seed}"
        report.save(adir)
        save_montage([scene, keyed_recon, report.decrypted], adir / "montage.png")
        rows.append(
            {
                "study": "ukpa_usr",
                "design": cfg.design,
                "key_seed": seed,
                "scene_id": sid,
                "scaling_error": report.metrics["scaling_error"],
                "keyed_psnr": keyed_db,
                "attack_psnr": report.metrics["psnr"],
                "gap_db": keyed_db - report.metrics["psnr"],
            }
        )
    return rows, {
        "scaling_error_mean": _mean(rows, "scaling_error"),
        "gap_mean": _mean(rows, "gap_db"),
        "n_rows": len(rows),
    }


def _study_ukpa_avg(cfg, out):
    scenes = scene_bank(cfg)
    rows = []
    rng = Rng(cfg.master_seed).child("ukpa-avg")
    for seed in cfg.key_seeds:
        key = design_key(cfg.design, seed, cfg)
        sid, scene = scenes[seed % len(scenes)]
        m_target, keyed_recon, keyed_db = _keyed_reference(key, scene, cfg)
        pool = [
            forward_double(
                synthetic_scene(cfg.scene_dims, cfg.channels, rng.child(seed, j)),
                key,
                NoiseModel(cfg.sigma),
                _noise_rng(cfg, "avg", seed, j),
            )
            for j in range(cfg.ukpa_n)
        ]
        report = ukpa_average(
            pool,
            m_target,
            key.psf,
            cfg.wiener(),
            cfg.scene_dims,
            true_scaling=key.scaling,
            true_scene=scene,
        )
        adir = out / "attacks" / "ukpa_avg" / f"{cfg.design}_key{seed}"
        report.save(adir)
        save_montage([scene, keyed_recon, report.decrypted], adir / "montage.png")
        rows.append(
            {
                "study": "ukpa_avg",
                "design": cfg.design,
                "key_seed": seed,
                "scene_id": sid,
                "n": cfg.ukpa_n,
                "scaling_error": report.metrics["scaling_error"],
                "keyed_psnr": keyed_db,
                "attack_psnr": report.metrics["psnr"],
                "gap_db": keyed_db - report.metrics["psnr"],
            }
        )
    return rows, {
        "scaling_error_mean": _mean(rows, "scaling_error"),
        "gap_mean": _mean(rows, "gap_db"),
        "n_rows": len(rows),
    }


def _study_uikpa(cfg, out):
    scenes = scene_bank(cfg)
    rows = []
    for seed in cfg.key_seeds:
        key = design_key(cfg.design, seed, cfg)
        usr = uniform_scene_response(key, 1.0, NoiseModel(cfg.sigma), _noise_rng(cfg, "usr", seed))
        for sid, scene in scenes:
            m_target, keyed_recon, keyed_db = _keyed_reference(key, scene, cfg)
            for r in cfg.r_grid:
                y_bright = _bright_capture(key, cfg, r, seed, base_kind="natural")
                report = uikpa(
                    usr,
                    y_bright,
                    m_target,
                    cfg.als(),
                    cfg.wiener(),
                    cfg.scene_dims,
                    (cfg.psf_side, cfg.psf_side),
                    true_scene=scene,
                    true_scaling=key.scaling,
                    true_psf=key.psf,
                )
                objectives = [t["objective"] for t in report.trace]
                monotone = int(objective_non_increasing(objectives))
                adir = (
                    out / "attacks" / "uikpa" / f"{cfg.design}_key{seed}_{sid}_r{int(r)}"
                )
                report.save(adir)
                save_montage([scene, keyed_recon, report.decrypted], adir / "montage.png")
                rows.append(
                    {
                        "study": "uikpa",
                        "design": cfg.design,
                        "key_seed": seed,
                        "scene_id": sid,
                        "r": float(r),
                        "keyed_psnr": keyed_db,
                        "attack_psnr": report.metrics["psnr"],
                        "monotone": monotone,
                        "final_objective": report.metrics["final_objective"],
                    }
                )
    per_r = {
        r: _mean([row for row in rows if row["r"] == float(r)], "attack_psnr")
        for r in cfg.r_grid
    }
    ordered = [per_r[r] for r in cfg.r_grid]
    aggregates = {
        "n_rows": len(rows),
        "all_monotone": int(all(row["monotone"] for row in rows)),
        "trend_non_decreasing": int(
            all(b >= a - 1e-9 for a, b in zip(ordered, ordered[1:]))
        ),
    }
    for r, val in per_r.items():
        aggregates[f"attack_psnr_mean_r{int(r)}"] = val
    return rows, aggregates


# --- privacy-utility table --------------------------------------------------


def privacy_utility_table(
    keyed_summaries: list, attack_summaries: list, out_dir=None
) -> list:
    """One row per design: utility from keyed decryption, privacy from the
    attack results (lower attack quality = more private)."""
    if not keyed_summaries or not attack_summaries:
        raise MissingStudy("need at least one keyed and one attack summary")
    keyed_by_design = {}
    for s in keyed_summaries:
        correct = [r for r in s.rows if r.get("kind") == "correct"]
        if not correct:
            raise MissingStudy("keyed summary has no correct-key rows")
        keyed_by_design[correct[0]["design"]] = correct
    attack_by_design = {}
    for s in attack_summaries:
        for r in s.rows:
            attack_by_design.setdefault(r["design"], []).append(r)

    rows = []
    for design in sorted(keyed_by_design):
        if design not in attack_by_design:
            raise MissingStudy(f"design {design} lacks an attack study")
        krows = keyed_by_design[design]
        arows = attack_by_design[design]
        rows.append(
            {
                "design": design,
                "utility_psnr": _mean(krows, "psnr"),
                "utility_ssim": _mean(krows, "ssim"),
                "privacy_attack_psnr": _mean(arows, "attack_psnr"),
                "n_keyed": len(krows),
                "n_attack": len(arows),
            }
        )

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        write_rows_csv(rows, out_dir / "privacy_utility.csv")
        _scatter_plot(rows, out_dir / "privacy_utility.png")
    return rows


def _scatter_plot(rows, path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5, 4))
    for r in rows:
        x = r["privacy_attack_psnr"]
        y = r["utility_psnr"]
        ax.scatter(x, y)
        ax.annotate(r["design"], (x, y), fontsize=7)
    ax.set_xlabel("attack PSNR (dB), lower = more private")
    ax.set_ylabel("keyed PSNR (dB), higher = better imaging")
    ax.invert_xaxis()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
