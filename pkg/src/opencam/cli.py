"""Command-line front end.

Subcommands: keygen, encrypt, decrypt, attack, study, inspect. Exit codes
are stable for scripting: 0 ok, 2 bad arguments/config, 3 degenerate key,
4 dimension mismatch, 5 attack failure. A --config JSON file supplies
defaults; flags given explicitly on the command line win. All randomness
flows from --seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

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
from .decrypt import DEFAULT_EPSILON, DEFAULT_GAMMA, WienerConfig, keyed_decrypt
from .errors import (
    ChannelMismatch,
    ConfigError,
    DegenerateKey,
    DimMismatch,
    OpencamError,
)
from .experiment_runner import (
    ExperimentConfig,
    night_scene,
    privacy_utility_table,
    run_attack_studies,
    run_keyed_study,
    save_montage,
    structural_support,
    synthetic_scene,
)
from .keygen import (
    Key,
    baseline_psf,
    draw_keyspec,
    generate_key,
    load_key,
    save_key,
    spectrum_floor,
)
from .metrics import psnr, ssim
from .noise_gen import Rng
from .optics import (
    NoiseModel,
    SceneSpec,
    bright_source_scene,
    forward_double,
    load_measurement,
    save_measurement,
    scene_dims_for_key,
    synthesize_scene,
    uniform_scene_response,
)
from .tensor_store import (
    load_png_as_scene,
    read_tensor,
    save_png_visualization,
    write_tensor,
)

EXIT_OK = 0
EXIT_ARGS = 2
EXIT_DEGENERATE = 3
EXIT_DIMS = 4
EXIT_ATTACK = 5

ATTACK_CHOICES = ("autocorr", "threshold", "ikpa", "ukpa-usr", "ukpa-avg", "uikpa")


def _error_json(exc: Exception) -> str:
    return json.dumps({"error": type(exc).__name__, "message": str(exc)})


def _say(args, message: str) -> None:
    if not getattr(args, "quiet", False):
        print(message)


def _load_config(args) -> dict:
    if getattr(args, "config", None):
        try:
            return json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
    return {}


def _pick(args, config: dict, name: str, default):
    """Explicit flag > config value > default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=None, help="master seed")
    parser.add_argument("--out", default=None, help="output path or directory")
    parser.add_argument("--quiet", action="store_true", help="suppress chatter")
    parser.add_argument("--config", default=None, help="JSON file with defaults")


def _parse_dims(text: str) -> tuple:
    try:
        h, w = text.lower().split("x")
        return (int(h), int(w))
    except ValueError as exc:
        raise ConfigError(f"dims must look like 64x64, got {text!r}") from exc


def _load_scene_file(path: str, channels: int) -> np.ndarray:
    if str(path).endswith(".png"):
        return load_png_as_scene(path, channels)
    return read_tensor(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="opencam",
        description="Key generation, encryption, decryption and classical "
        "attacks for double-mask lensless encryption cameras.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", help="generate an encryption key")
    _add_common(p)
    p.add_argument("--psf-side", type=int, default=None)
    p.add_argument("--scene-dims", default=None, help="HxW of scenes the camera images")
    p.add_argument("--channels", type=int, choices=(1, 3), default=None)
    p.add_argument("--alpha", type=float, default=None, help="override blend coefficient")
    p.add_argument("--beta", type=float, default=None, help="override noise roll-off")
    p.add_argument(
        "--baseline",
        choices=(
            "white_blend",
            "phlatcam_contour",
            "multi_pinhole",
            "random_binary",
            "random_speckle",
        ),
        default=None,
        help="emit a baseline single-mask design instead of the house design",
    )

    p = sub.add_parser("encrypt", help="simulate an encrypted capture")
    _add_common(p)
    p.add_argument("--key", required=True, help="key directory")
    p.add_argument("--scene", required=True, help="scene file (.png or .ocam)")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--bright", default=None, help="r@row,col bright source to add")

    p = sub.add_parser("decrypt", help="keyed decryption of a measurement")
    _add_common(p)
    p.add_argument("--key", required=True)
    p.add_argument("--measurement", required=True)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--truth", default=None, help="true scene for metrics")

    p = sub.add_parser("attack", help="run a classical attack protocol")
    _add_common(p)
    p.add_argument("--kind", required=True, choices=ATTACK_CHOICES)
    p.add_argument("--key", required=True)
    p.add_argument("--scene", default=None, help="target scene (default synthetic)")
    p.add_argument("--sigma", type=float, default=None)
    p.add_argument("--r", type=float, default=None, help="bright source intensity")
    p.add_argument("--n", type=int, default=None, help="measurements for ukpa-avg")
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--epsilon", type=float, default=None)
    p.add_argument("--outer-iters", type=int, default=None)

    p = sub.add_parser("study", help="run configured end-to-end studies")
    _add_common(p)
    p.add_argument(
        "--designs",
        default=None,
        help="comma list of designs to sweep (default: the config's design)",
    )

    p = sub.add_parser("inspect", help="describe a tensor/key/measurement file")
    _add_common(p)
    p.add_argument("path", help="file or key directory")

    return parser


# --- subcommand bodies ------------------------------------------------------


def _cmd_keygen(args) -> int:
    config = _load_config(args)
    seed = _pick(args, config, "seed", 0)
    out = _pick(args, config, "out", None)
    if out is None:
        raise ConfigError("keygen requires --out DIR")
    psf_side = _pick(args, config, "psf-side", 64)
    scene_dims = _pick(args, config, "scene-dims", "64x64")
    if isinstance(scene_dims, str):
        scene_dims = _parse_dims(scene_dims)
    channels = _pick(args, config, "channels", 1)
    sensor = (scene_dims[0] + psf_side - 1, scene_dims[1] + psf_side - 1)

    baseline = _pick(args, config, "baseline", None)
    if baseline is not None:
        spec = draw_keyspec(seed, psf_side, sensor, channels)
        psf = baseline_psf(baseline, spec)
        shape = sensor if channels == 1 else sensor + (channels,)
        key = Key(psf=psf, scaling=np.ones(shape, dtype=np.float32), spec=spec)
    else:
        overrides = {}
        alpha = _pick(args, config, "alpha", None)
        beta = _pick(args, config, "beta", None)
        if alpha is not None:
            overrides["alpha"] = alpha
        if beta is not None:
            overrides["beta"] = beta
        key = generate_key(seed, psf_side, sensor, channels, **overrides)

    out = Path(out)
    save_key(key, out)
    save_png_visualization(key.psf, out / "psf.png")
    save_png_visualization(key.scaling, out / "scaling.png")
    _say(args, f"key written to {out} (spectrum floor {spectrum_floor(key.psf):.3g})")
    return EXIT_OK


def _parse_bright(text: str) -> tuple:
    try:
        r, pos = text.split("@")
        row, col = pos.split(",")
        return float(r), (int(row), int(col))
    except ValueError as exc:
        raise ConfigError(f"--bright must look like 1000@64,64, got {text!r}") from exc


def _cmd_encrypt(args) -> int:
    config = _load_config(args)
    out = _pick(args, config, "out", None)
    if out is None:
        raise ConfigError("encrypt requires --out FILE")
    key = load_key(args.key)
    scene = _load_scene_file(args.scene, key.spec.channels)
    bright = _pick(args, config, "bright", None)
    if bright is not None:
        r, pos = _parse_bright(bright) if isinstance(bright, str) else bright
        scene = bright_source_scene(scene, r, pos)
    sigma = _pick(args, config, "sigma", 0.0)
    seed = _pick(args, config, "seed", 0)
    rng = Rng(seed).child("capture") if sigma > 0 else None
    m = forward_double(
        scene, key, NoiseModel(sigma), rng, scene_id=Path(args.scene).stem
    )
    save_measurement(m, out)
    _say(args, f"measurement written to {out}")
    return EXIT_OK


def _cmd_decrypt(args) -> int:
    config = _load_config(args)
    out = _pick(args, config, "out", None)
    if out is None:
        raise ConfigError("decrypt requires --out FILE")
    key = load_key(args.key)
    m = load_measurement(args.measurement)
    gamma = _pick(args, config, "gamma", DEFAULT_GAMMA)
    epsilon = _pick(args, config, "epsilon", DEFAULT_EPSILON)
    cfg = WienerConfig(gamma=gamma, epsilon=epsilon)
    scene_dims = scene_dims_for_key(key)
    recon = keyed_decrypt(m, key, cfg, scene_dims)
    out = Path(out)
    write_tensor(recon, out)
    save_png_visualization(recon, out.with_suffix(".png"))
    metrics = {"gamma": gamma, "epsilon": epsilon}
    truth_path = _pick(args, config, "truth", None)
    if truth_path:
        truth = _load_scene_file(truth_path, key.spec.channels)
        metrics["psnr"] = psnr(recon, truth)
        metrics["ssim"] = ssim(np.clip(recon, 0, 1), np.clip(truth, 0, 1))
    out.with_suffix(".metrics.json").write_text(json.dumps(metrics, sort_keys=True))
    _say(args, f"reconstruction written to {out}")
    return EXIT_OK


def _cmd_attack(args) -> int:
    config = _load_config(args)
    out = _pick(args, config, "out", None)
    if out is None:
        raise ConfigError("attack requires --out DIR")
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    key = load_key(args.key)
    seed = _pick(args, config, "seed", 0)
    sigma = _pick(args, config, "sigma", 0.0)
    gamma = _pick(args, config, "gamma", DEFAULT_GAMMA)
    epsilon = _pick(args, config, "epsilon", DEFAULT_EPSILON)
    wiener = WienerConfig(gamma=gamma, epsilon=epsilon)
    r = _pick(args, config, "r", 1e3)
    scene_dims = scene_dims_for_key(key)
    psf_dims = (key.spec.psf_side, key.spec.psf_side)
    rng = Rng(seed)
    noise_rng = rng.child("noise") if sigma > 0 else None

    if args.scene:
        scene = _load_scene_file(args.scene, key.spec.channels)
    else:
        scene = synthetic_scene(scene_dims, key.spec.channels, rng.child("scene"))
    target = forward_double(scene, key, NoiseModel(sigma), noise_rng, scene_id="target")
    keyed = keyed_decrypt(target, key, wiener, scene_dims)

    kind = args.kind
    if kind == "autocorr":
        acorr = autocorrelation(key.psf, remove_dc=True)
        score = impulse_likeness(acorr)
        save_png_visualization(acorr, out / "acorr.png")
        report = {"attack_kind": "autocorr", "metrics": {"impulse_likeness": score}}
        (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2))
        _say(args, f"impulse_likeness score {score:.4f}")
        return EXIT_OK

    if kind == "threshold":
        impulse = synthesize_scene(
            SceneSpec(kind="impulse", dims=scene_dims, channels=key.spec.channels)
        )
        y = forward_double(impulse, key, NoiseModel(sigma), noise_rng)
        result = threshold_support_attack(y, structural_support(key), psf_dims)
        write_tensor(result.support, out / "support.ocam")
        report = {
            "attack_kind": "threshold",
            "metrics": {"best_iou": result.best_iou, "best_tau": result.best_tau},
        }
        (out / "report.json").write_text(json.dumps(report, sort_keys=True, indent=2))
        _say(args, f"best support IoU {result.best_iou:.4f}")
        return EXIT_OK

    base = night_scene(scene_dims, key.spec.channels, rng.child("night"))
    y_bright = forward_double(
        bright_source_scene(base, r), key, NoiseModel(sigma), noise_rng, scene_id="bright"
    )

    if kind == "ikpa":
        report = ikpa(y_bright, target, psf_dims, wiener, scene_dims, true_scene=scene)
    elif kind == "ukpa-usr":
        usr = uniform_scene_response(key, 1.0, NoiseModel(sigma), noise_rng)
        report = ukpa_usr(
            usr, target, key.psf, wiener, scene_dims,
            true_scaling=key.scaling, true_scene=scene,
        )
    elif kind == "ukpa-avg":
        n = _pick(args, config, "n", 50)
        pool = [
            forward_double(
                synthetic_scene(scene_dims, key.spec.channels, rng.child("pool", j)),
                key,
                NoiseModel(sigma),
                noise_rng,
            )
            for j in range(n)
        ]
        report = ukpa_average(
            pool, target, key.psf, wiener, scene_dims,
            true_scaling=key.scaling, true_scene=scene,
        )
    elif kind == "uikpa":
        usr = uniform_scene_response(key, 1.0, NoiseModel(sigma), noise_rng)
        outer = _pick(args, config, "outer-iters", 50)
        report = uikpa(
            usr, y_bright, target, AlsConfig(outer_iters=outer), wiener,
            scene_dims, psf_dims,
            true_scene=scene, true_scaling=key.scaling, true_psf=key.psf,
        )
    else:  # pragma: no cover - argparse restricts choices
        raise ConfigError(f"unknown attack kind {kind!r}")

    report.save(out)
    save_montage([scene, keyed, report.decrypted], out / "montage.png")
    _say(args, f"attack report written to {out}: {report.metrics}")
    return EXIT_OK


def _cmd_study(args) -> int:
    config_path = getattr(args, "config", None)
    if not config_path:
        raise ConfigError("study requires --config JSON")
    cfg = ExperimentConfig.from_json(config_path)
    if args.seed is not None:
        cfg.master_seed = args.seed
    if args.out is not None:
        cfg.output_dir = args.out
    designs = (
        [d.strip() for d in args.designs.split(",")] if args.designs else [cfg.design]
    )
    keyed_summaries = []
    attack_summaries = []
    for design in designs:
        dcfg = replace(cfg, design=design)
        keyed_summaries.append(run_keyed_study(dcfg))
        attack_summaries.extend(run_attack_studies(dcfg))
        _say(args, f"[{design}] keyed gap {keyed_summaries[-1].aggregates['psnr_gap']:.2f} dB")
    attack_rows = [s for s in attack_summaries if s.rows]
    if keyed_summaries and attack_rows:
        privacy_utility_table(keyed_summaries, attack_rows, cfg.output_dir)
    _say(args, f"study artifacts in {cfg.output_dir}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    path = Path(args.path)
    if path.is_dir():
        key = load_key(path)
        info = {
            "type": "key",
            "psf_dims": list(key.psf.shape),
            "scaling_dims": list(key.scaling.shape),
            "seed": key.spec.seed,
            "alpha": key.spec.alpha,
            "beta": key.spec.beta,
            "spectrum_floor": spectrum_floor(key.psf),
        }
    elif path.suffix == ".json":
        info = json.loads(path.read_text())
    else:
        t = read_tensor(path)
        info = {
            "type": "tensor",
            "dims": list(t.shape),
            "min": float(t.min()),
            "max": float(t.max()),
            "mean": float(t.mean()),
        }
        meta = path.with_suffix(path.suffix + ".json")
        if meta.exists():
            info["metadata"] = json.loads(meta.read_text())
    print(json.dumps(info, sort_keys=True, indent=2))
    return EXIT_OK


_COMMANDS = {
    "keygen": _cmd_keygen,
    "encrypt": _cmd_encrypt,
    "decrypt": _cmd_decrypt,
    "attack": _cmd_attack,
    "study": _cmd_study,
    "inspect": _cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _COMMANDS[args.command](args)
    except DegenerateKey as exc:
        print(_error_json(exc), file=sys.stderr)
        return EXIT_DEGENERATE
    except (DimMismatch, ChannelMismatch) as exc:
        print(_error_json(exc), file=sys.stderr)
        return EXIT_DIMS
    except OpencamError as exc:
        print(_error_json(exc), file=sys.stderr)
        return EXIT_ATTACK if args.command == "attack" else EXIT_ARGS
    except FileNotFoundError as exc:
        print(_error_json(exc), file=sys.stderr)
        return EXIT_ARGS


if __name__ == "__main__":
    raise SystemExit(main())
