"""Classical cryptanalysis harness.

Implements the classical (non-learned) attack procedures against single-
and double-mask cameras:

* autocorrelation diagnostic + impulse-likeness score (COA resistance),
* binary-threshold support attack against point-source measurements,
* I-KPA: treat a bright-source measurement as the PSF and decrypt,
* U-KPA: estimate the scaling mask from a uniform-scene response or from
  an average of many measurements,
* UI-KPA: jointly estimate (S, P) from a uniform response plus an impulse
  response by alternating least squares:

      argmin_{S,P} sum_i || Y_i - S . (P * X_i) ||_F^2

  with X_1 all-ones and X_2 a centered unit impulse. The S update is the
  exact per-pixel minimizer (clamped to (0, 1]); the P update is projected
  gradient descent (non-negativity + per-channel sum normalization) with
  backtracking, so the objective never increases across accepted steps.

The bright-source position is assumed to be the scene center, which makes
the PSF crop offset computable from the measurement and PSF dims alone.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .decrypt import WienerConfig, scaling_normalize, wiener_decrypt
from .errors import DimMismatch, EmptySet, InvalidSpec, NonFiniteObjective, TooSmall
from .metrics import psnr, scale_optimal_error, ssim, support_iou
from .optics import Measurement
from .tensor_store import write_tensor

_S_FLOOR = 1e-6


@dataclass
class AttackReport:
    """Result bundle for one attack run."""

    attack_kind: str
    estimated_psf: np.ndarray | None = None
    estimated_scaling: np.ndarray | None = None
    decrypted: np.ndarray | None = None
    metrics: dict = field(default_factory=dict)
    trace: list = field(default_factory=list)

    def validate(self) -> None:
        for name, value in self.metrics.items():
            if not np.isfinite(value):
                raise InvalidSpec(f"metric {name} is not finite: {value}")

    def save(self, directory) -> None:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        payload = {"attack_kind": self.attack_kind, "metrics": self.metrics}
        for name in ("estimated_psf", "estimated_scaling", "decrypted"):
            tensor = getattr(self, name)
            if tensor is not None:
                write_tensor(tensor, directory / f"{name}.ocam")
                payload[name] = f"{name}.ocam"
        (directory / "report.json").write_text(
            json.dumps(payload, sort_keys=True, indent=2)
        )
        if self.trace:
            keys = list(self.trace[0].keys())
            lines = [",".join(keys)]
            for row in self.trace:
                lines.append(",".join(f"{row[k]:.12g}" if isinstance(row[k], float) else str(row[k]) for k in keys))
            (directory / "trace.csv").write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class AlsConfig:
    """Solver choices for the joint (S, P) estimate."""

    outer_iters: int = 50
    psf_step_count: int = 5
    step_init: float = 1.0
    epsilon_ls: float = 1e-8
    nonneg_projection: bool = True
    tol: float = 1e-10

    def validate(self) -> None:
        if self.outer_iters < 1:
            raise InvalidSpec("outer_iters must be >= 1")
        if self.psf_step_count < 0:
            raise InvalidSpec("psf_step_count must be >= 0")
        if self.step_init <= 0 or self.epsilon_ls <= 0:
            raise InvalidSpec("step_init and epsilon_ls must be > 0")


def _stack(a) -> np.ndarray:
    a = np.asarray(a)
    return a[:, :, None] if a.ndim == 2 else a


def _data(m) -> np.ndarray:
    return m.data if isinstance(m, Measurement) else np.asarray(m)


def autocorrelation(t: np.ndarray, remove_dc: bool = False) -> np.ndarray:
    """IDFT(|DFT(t)|^2) per channel, zero lag centered, peak-normalized.

    ``remove_dc`` subtracts the channel mean first, which discards the
    constant pedestal a non-negative field otherwise contributes; the mask
    design diagnostics use this structural variant.
    """
    ts = _stack(t).astype(np.float64)
    out = np.empty_like(ts)
    for c in range(ts.shape[2]):
        f = ts[:, :, c]
        if remove_dc:
            f = f - f.mean()
        ac = np.fft.ifft2(np.abs(np.fft.fft2(f)) ** 2).real
        ac = np.fft.fftshift(ac)
        peak = ac[ac.shape[0] // 2, ac.shape[1] // 2]
        out[:, :, c] = ac / peak if peak > 0 else 0.0
    out = out.astype(np.float32)
    return out[:, :, 0] if np.asarray(t).ndim == 2 else out


def impulse_likeness(acorr: np.ndarray) -> float:
    """1 - (squared energy in the center 3x3) / (total squared energy).

    Near 0 for an impulse-like autocorrelation, near 1 when the energy is
    spread over the field; higher means more resistant to
    autocorrelation-based ciphertext-only attacks.
    """
    ac = _stack(acorr).astype(np.float64)
    scores = []
    for c in range(ac.shape[2]):
        e = ac[:, :, c] ** 2
        total = e.sum()
        if total == 0.0:
            scores.append(0.0)
            continue
        r0 = e.shape[0] // 2
        c0 = e.shape[1] // 2
        center = e[max(r0 - 1, 0) : r0 + 2, max(c0 - 1, 0) : c0 + 2].sum()
        scores.append(1.0 - center / total)
    return float(np.mean(scores))


def psf_crop_offset(sensor_dims, psf_dims) -> tuple:
    """Top-left corner of the embedded PSF for a scene-centered impulse."""
    h1 = sensor_dims[0] - psf_dims[0] + 1
    w1 = sensor_dims[1] - psf_dims[1] + 1
    if h1 <= 0 or w1 <= 0:
        raise DimMismatch("psf dims exceed measurement dims")
    return (h1 // 2, w1 // 2)


def crop_psf_estimate(y_bright, psf_dims) -> np.ndarray:
    """Center crop of a bright-source measurement, clamped and normalized
    per channel so it is usable as a PSF."""
    data = _stack(_data(y_bright)).astype(np.float64)
    r0, c0 = psf_crop_offset(data.shape[:2], psf_dims)
    crop = data[r0 : r0 + psf_dims[0], c0 : c0 + psf_dims[1], :]
    crop = np.clip(crop, 0.0, None)
    sums = crop.sum(axis=(0, 1), keepdims=True)
    sums[sums <= 0] = 1.0
    crop = (crop / sums).astype(np.float32)
    return crop[:, :, 0] if np.asarray(_data(y_bright)).ndim == 2 else crop


@dataclass
class ThresholdAttackResult:
    support: np.ndarray
    best_iou: float
    best_tau: float
    taus: np.ndarray
    ious: np.ndarray


def default_tau_grid(y: np.ndarray, count: int = 64) -> np.ndarray:
    peak = float(np.max(np.abs(y)))
    if peak <= 0:
        return np.array([0.0])
    return np.logspace(-4, 0, count) * peak


def threshold_support_attack(
    y_bright, true_support: np.ndarray, psf_dims=None, tau_grid=None
) -> ThresholdAttackResult:
    """Sweep thresholds over a point-source measurement and score the
    recovered support against the key's structural binary support.

    The measurement is center-cropped to the support dims (the source sits
    at the scene center); channels are averaged before thresholding.
    """
    data = _stack(_data(y_bright)).astype(np.float64).mean(axis=2)
    truth = np.asarray(true_support) != 0
    if psf_dims is None:
        psf_dims = truth.shape
    r0, c0 = psf_crop_offset(data.shape, psf_dims)
    crop = data[r0 : r0 + psf_dims[0], c0 : c0 + psf_dims[1]]
    if crop.shape != truth.shape:
        raise DimMismatch(f"crop {crop.shape} vs true support {truth.shape}")
    if tau_grid is None:
        tau_grid = default_tau_grid(crop)
    taus = np.asarray(tau_grid, dtype=np.float64)
    ious = np.array([support_iou(crop > tau, truth) for tau in taus])
    best = int(np.argmax(ious))
    return ThresholdAttackResult(
        support=(crop > taus[best]).astype(np.float32),
        best_iou=float(ious[best]),
        best_tau=float(taus[best]),
        taus=taus,
        ious=ious,
    )


def _quality_metrics(decrypted: np.ndarray, true_scene) -> dict:
    out = {}
    if true_scene is not None:
        out["psnr"] = psnr(decrypted, true_scene)
        try:
            out["ssim"] = ssim(
                np.clip(decrypted, 0.0, 1.0), np.clip(true_scene, 0.0, 1.0)
            )
        except TooSmall:
            pass  # scenes below the SSIM window size report PSNR only
    return out


def ikpa(
    y_bright,
    y_target,
    psf_dims,
    cfg: WienerConfig,
    scene_dims,
    true_scene: np.ndarray | None = None,
) -> AttackReport:
    """Impulse KPA: use the bright-source measurement as the PSF estimate
    and run keyed decryption with S assumed constant (no normalization)."""
    p_hat = crop_psf_estimate(y_bright, psf_dims)
    decrypted = wiener_decrypt(_data(y_target), p_hat, cfg, scene_dims)
    report = AttackReport(
        attack_kind="ikpa",
        estimated_psf=p_hat,
        decrypted=decrypted,
        metrics=_quality_metrics(decrypted, true_scene),
    )
    report.validate()
    return report


def ukpa_usr(
    y_usr,
    y_target,
    psf_guess: np.ndarray,
    cfg: WienerConfig,
    scene_dims,
    true_scaling: np.ndarray | None = None,
    true_scene: np.ndarray | None = None,
) -> AttackReport:
    """Uniform KPA, USR variant: S_hat = Y_usr; attacker knows the PSF."""
    s_hat = _data(y_usr).astype(np.float32)
    y_n = scaling_normalize(_data(y_target), s_hat, cfg.epsilon)
    decrypted = wiener_decrypt(y_n, psf_guess, cfg, scene_dims)
    metrics = _quality_metrics(decrypted, true_scene)
    if true_scaling is not None:
        metrics["scaling_error"] = scale_optimal_error(s_hat, true_scaling)
    report = AttackReport(
        attack_kind="ukpa_usr",
        estimated_scaling=s_hat,
        decrypted=decrypted,
        metrics=metrics,
    )
    report.validate()
    return report


def ukpa_average(
    measurements,
    y_target,
    psf_guess: np.ndarray,
    cfg: WienerConfig,
    scene_dims,
    true_scaling: np.ndarray | None = None,
    true_scene: np.ndarray | None = None,
) -> AttackReport:
    """Uniform KPA, averaging variant: S_hat = mean of N measurements."""
    stack = [_data(m) for m in measurements]
    if not stack:
        raise EmptySet("ukpa_average requires at least one measurement")
    shape = stack[0].shape
    for d in stack:
        if d.shape != shape:
            raise DimMismatch("measurements must share dims")
    s_hat = np.mean(np.stack(stack, axis=0), axis=0).astype(np.float32)
    report = ukpa_usr(
        Measurement(data=s_hat),
        y_target,
        psf_guess,
        cfg,
        scene_dims,
        true_scaling=true_scaling,
        true_scene=true_scene,
    )
    report.attack_kind = "ukpa_average"
    report.metrics["n_measurements"] = float(len(stack))
    return report


# --- UI-KPA: alternating least squares -------------------------------------


def _conv_ones_valid(r: np.ndarray, scene_dims) -> np.ndarray:
    """corr(all-ones scene, r), valid mode (box sum)."""
    ones = np.ones(scene_dims)
    return fftconvolve(r, ones, mode="valid")


def _als_objective(y1, y2, s, z1, z2) -> float:
    r1 = y1 - s * z1
    r2 = y2 - s * z2
    return float(np.sum(r1 * r1) + np.sum(r2 * r2))


def als_scaling_step(y1, y2, z1, z2, epsilon_ls: float) -> np.ndarray:
    """Per-pixel minimizer of the joint objective in S, clamped to (0, 1].

    Clamping the unconstrained scalar minimizer is the constrained one
    (the per-pixel objective is a convex parabola in S).
    """
    s = (y1 * z1 + y2 * z2) / (z1 * z1 + z2 * z2 + epsilon_ls)
    return np.clip(s, _S_FLOOR, 1.0)


def als_joint_key_estimate(
    y_usr_data: np.ndarray,
    y_bright_data: np.ndarray,
    psf_dims,
    als: AlsConfig,
    init_scaling: np.ndarray | None = None,
    init_psf: np.ndarray | None = None,
    impulse_amplitude: float | np.ndarray | None = None,
    epsilon: float = 1e-3,
):
    """Alternating minimization for (S, P) from a USR and a bright capture.

    Returns (s_hat, p_hat, trace). The unknown impulse amplitude is
    absorbed by rescaling the bright measurement with the initial PSF-crop
    mass (per channel) unless ``impulse_amplitude`` is given.
    """
    als.validate()
    y1 = _stack(y_usr_data).astype(np.float64)
    y2 = _stack(y_bright_data).astype(np.float64)
    if y1.shape != y2.shape:
        raise DimMismatch("USR and bright measurement dims differ")
    h3, w3, nchan = y1.shape
    h2, w2 = psf_dims
    h1, w1 = h3 - h2 + 1, w3 - w2 + 1
    if h1 <= 0 or w1 <= 0:
        raise DimMismatch("psf dims exceed measurement dims")
    r0, c0 = psf_crop_offset((h3, w3), psf_dims)

    # Warm start from the two known responses. The USR of a sum-1 PSF is
    # S times the boundary taper P * 1, so rescaling the USR onto (0, 1]
    # divides by the taper of a bootstrap PSF estimate; a max-rescale
    # would leave taper shape inside S_hat and P_hat, a bias the S step
    # later compensates instead of fixing.
    if init_scaling is not None:
        s = np.clip(_stack(init_scaling).astype(np.float64), _S_FLOOR, 1.0)
    else:
        boot = np.clip(y2[r0 : r0 + h2, c0 : c0 + w2, :], 0.0, None)
        boot_mass = boot.sum(axis=(0, 1))
        boot_mass[boot_mass <= 0] = 1.0
        boot = boot / boot_mass[None, None, :]
        taper = np.empty_like(y1)
        for c in range(nchan):
            taper[:, :, c] = fftconvolve(
                np.ones((h1, w1)), boot[:, :, c], mode="full"
            )
        s = np.clip(y1 / (taper + epsilon), _S_FLOOR, 1.0)

    crop = np.clip(
        y2[r0 : r0 + h2, c0 : c0 + w2, :] / (s[r0 : r0 + h2, c0 : c0 + w2, :] + epsilon),
        0.0,
        None,
    )
    mass = crop.sum(axis=(0, 1))
    mass[mass <= 0] = 1.0
    if impulse_amplitude is None:
        amplitude = mass
    else:
        amplitude = np.broadcast_to(np.asarray(impulse_amplitude, dtype=np.float64), (nchan,)).copy()
        amplitude[amplitude <= 0] = 1.0
    y2 = y2 / amplitude[None, None, :]

    if init_psf is not None:
        p = _stack(init_psf).astype(np.float64).copy()
    else:
        p = crop / mass[None, None, :]

    def conv_stacks(p_cur):
        z1 = np.empty_like(y1)
        z2 = np.zeros_like(y2)
        for c in range(nchan):
            z1[:, :, c] = fftconvolve(np.ones((h1, w1)), p_cur[:, :, c], mode="full")
            z2[r0 : r0 + h2, c0 : c0 + w2, c] = p_cur[:, :, c]
        return z1, z2

    def project(p_cur):
        if als.nonneg_projection:
            p_cur = np.clip(p_cur, 0.0, None)
        sums = p_cur.sum(axis=(0, 1), keepdims=True)
        sums[sums <= 0] = 1.0
        return p_cur / sums

    p = project(p)
    z1, z2 = conv_stacks(p)
    obj = _als_objective(y1, y2, s, z1, z2)
    trace = [{"iter": 0, "stage": "init", "objective": obj}]
    step = None

    for it in range(1, als.outer_iters + 1):
        s = als_scaling_step(y1, y2, z1, z2, als.epsilon_ls)
        obj = _als_objective(y1, y2, s, z1, z2)
        if not np.isfinite(obj):
            raise NonFiniteObjective("objective diverged in S step", trace)
        trace.append({"iter": it, "stage": "s", "objective": obj})

        # Jacobi-preconditioned projected gradient: dividing by the
        # per-pixel Hessian diagonal of the data term keeps the step
        # well-scaled in the flat valley the S update leaves behind.
        s_sq = s * s
        precond = np.empty_like(p)
        for c in range(nchan):
            precond[:, :, c] = _conv_ones_valid(s_sq[:, :, c], (h1, w1))
            precond[:, :, c] += s_sq[r0 : r0 + h2, c0 : c0 + w2, c]
        precond = np.maximum(precond, 1e-12 * precond.max() + als.epsilon_ls)
        for _ in range(als.psf_step_count):
            grad = np.empty_like(p)
            r1 = s * (s * z1 - y1)
            r2 = s * (s * z2 - y2)
            for c in range(nchan):
                grad[:, :, c] = _conv_ones_valid(r1[:, :, c], (h1, w1))
                grad[:, :, c] += r2[r0 : r0 + h2, c0 : c0 + w2, c]
            direction = grad / precond
            if np.max(np.abs(direction)) == 0:
                break
            if step is None:
                step = als.step_init
            accepted = False
            for _ in range(30):
                cand = project(p - step * direction)
                z1c, z2c = conv_stacks(cand)
                cand_obj = _als_objective(y1, y2, s, z1c, z2c)
                if not np.isfinite(cand_obj):
                    raise NonFiniteObjective("objective diverged in P step", trace)
                if cand_obj <= obj:
                    p, z1, z2, obj = cand, z1c, z2c, cand_obj
                    step *= 1.25
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break
        trace.append({"iter": it, "stage": "p", "objective": obj})

        prev = trace[-3]["objective"] if len(trace) >= 3 else None
        if prev is not None and prev - obj <= als.tol * max(1.0, prev):
            break

    squeeze = np.asarray(y_usr_data).ndim == 2
    s_out = s.astype(np.float32)
    p_out = p.astype(np.float32)
    if squeeze:
        s_out = s_out[:, :, 0]
        p_out = p_out[:, :, 0]
    return s_out, p_out, trace


def uikpa(
    y_usr,
    y_bright,
    y_target,
    als: AlsConfig,
    cfg: WienerConfig,
    scene_dims,
    psf_dims,
    true_scene: np.ndarray | None = None,
    true_scaling: np.ndarray | None = None,
    true_psf: np.ndarray | None = None,
    init_scaling: np.ndarray | None = None,
    init_psf: np.ndarray | None = None,
    impulse_amplitude=None,
) -> AttackReport:
    """Uniform-impulse KPA: jointly estimate (S, P), then decrypt."""
    s_hat, p_hat, trace = als_joint_key_estimate(
        _data(y_usr),
        _data(y_bright),
        psf_dims,
        als,
        init_scaling=init_scaling,
        init_psf=init_psf,
        impulse_amplitude=impulse_amplitude,
        epsilon=cfg.epsilon,
    )
    y_n = scaling_normalize(_data(y_target), s_hat, cfg.epsilon)
    decrypted = wiener_decrypt(y_n, p_hat, cfg, scene_dims)
    metrics = _quality_metrics(decrypted, true_scene)
    metrics["final_objective"] = trace[-1]["objective"]
    if true_scaling is not None:
        metrics["scaling_error"] = scale_optimal_error(s_hat, true_scaling)
    if true_psf is not None:
        metrics["psf_error"] = scale_optimal_error(p_hat, true_psf)
    report = AttackReport(
        attack_kind="uikpa",
        estimated_psf=p_hat,
        estimated_scaling=s_hat,
        decrypted=decrypted,
        metrics=metrics,
        trace=trace,
    )
    report.validate()
    return report
