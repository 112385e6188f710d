"""Encryption-key generation: multiplexing PSF and scaling mask.

A camera key is the pair (P, S): the multiplexing-mask PSF ``P`` (each
channel non-negative, summing to 1) and the scaling mask ``S`` (strictly
positive, in [s_min, 1]). The house design blends a binary Perlin-contour
pattern with colored noise,

    P = alpha * P_colr + (1 - alpha) * P_cont,

per channel (independent colored draws, shared contour), and builds S
from colored noise with the same roll-off beta as P. Baseline generators
used for comparisons (white-noise blend, pure contour, multi-pinhole,
random binary, random speckle) are also provided.

Sub-seeding scheme (documented, relied on by tests): from ``Rng(seed)``
the contour permutation uses child("psf-perm"), PSF colored noise
child("psf-colr", ch, attempt), and the scaling mask
child("scal", ch, attempt), where ``attempt`` counts regenerations after
a degenerate (constant) noise field.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateKey, DegenerateNoise, InvalidDims, InvalidSpec, UnknownKind
from .noise_gen import ColoredNoiseSpec, PerlinSpec, Rng, colored_noise, perlin_field
from .tensor_store import read_tensor, write_tensor

GENERATOR_VERSION = 1

BASELINE_KINDS = (
    "white_blend",
    "phlatcam_contour",
    "multi_pinhole",
    "random_binary",
    "random_speckle",
)

# Keys whose PSF spectrum floor falls below this fraction of the spectrum
# peak are flagged degenerate (Wiener inversion would be ill-conditioned).
SPECTRUM_FLOOR_RATIO = 1e-6

_MULTI_PINHOLE_COUNT = 16
_MAX_NOISE_ATTEMPTS = 8

# 64-bit golden-ratio mixing constant for deterministic key regeneration.
_RESEED_MIX = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class KeySpec:
    """Generator parameters that fully determine a key."""

    seed: int
    psf_side: int
    sensor_dims: tuple
    channels: int
    alpha: float
    beta: float
    feature_size: int
    s_min: float = 0.2
    contour_fill: float = 0.10

    def validate(self) -> None:
        if self.psf_side <= 0 or any(d <= 0 for d in self.sensor_dims):
            raise InvalidDims("psf_side and sensor_dims must be positive")
        if self.channels not in (1, 3):
            raise InvalidDims(f"channels must be 1 or 3, got {self.channels}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidSpec(f"alpha must be in [0, 1], got {self.alpha}")
        if self.beta < 0:
            raise InvalidSpec(f"beta must be >= 0, got {self.beta}")
        if not 0.0 < self.s_min < 1.0:
            raise InvalidSpec(f"s_min must be in (0, 1), got {self.s_min}")
        if not 0.0 < self.contour_fill < 1.0:
            raise InvalidSpec("contour_fill must be in (0, 1)")
        if self.psf_side % self.feature_size != 0:
            raise InvalidSpec("psf_side must be divisible by feature_size")


@dataclass
class Key:
    """Realized encryption key: PSF P, scaling mask S, and the spec."""

    psf: np.ndarray
    scaling: np.ndarray
    spec: KeySpec

    def validate(self) -> None:
        spec = self.spec
        psf3 = np.atleast_3d(self.psf)
        if psf3.shape[:2] != (spec.psf_side, spec.psf_side):
            raise InvalidDims("psf dims do not match spec")
        if np.any(psf3 < 0):
            raise InvalidSpec("psf must be non-negative")
        sums = psf3.sum(axis=(0, 1))
        if not np.allclose(sums, 1.0, atol=1e-5):
            raise InvalidSpec(f"psf channels must sum to 1, got {sums}")
        scal3 = np.atleast_3d(self.scaling)
        if scal3.shape[:2] != tuple(spec.sensor_dims):
            raise InvalidDims("scaling dims do not match sensor dims")
        if scal3.min() < spec.s_min - 1e-6 or scal3.max() > 1.0 + 1e-6:
            raise InvalidSpec("scaling must lie in [s_min, 1]")


def draw_keyspec(seed: int, psf_side: int, sensor_dims, channels: int = 1) -> KeySpec:
    """Draw alpha ~ U(0,1) and beta ~ U(1,10) from the seeded stream."""
    if psf_side <= 0 or any(d <= 0 for d in sensor_dims):
        raise InvalidDims("psf_side and sensor_dims must be positive")
    rng = Rng(seed).child("keyspec")
    alpha = float(rng.uniform(0.0, 1.0))
    beta = float(rng.uniform(1.0, 10.0))
    # feature floor of 4: below it the gradient-lattice nodes (where the
    # field is exactly zero) alone exceed the contour fill target
    spec = KeySpec(
        seed=int(seed),
        psf_side=int(psf_side),
        sensor_dims=tuple(int(d) for d in sensor_dims),
        channels=int(channels),
        alpha=alpha,
        beta=beta,
        feature_size=max(4, psf_side // 8) if psf_side >= 8 else psf_side,
    )
    spec.validate()
    return spec


def _minmax_unit(field: np.ndarray) -> np.ndarray:
    lo = field.min()
    hi = field.max()
    if hi <= lo:
        raise DegenerateNoise("constant noise field cannot be range-normalized")
    return ((field.astype(np.float64) - lo) / (hi - lo)).astype(np.float32)


def _colored_unit(side: int, beta: float, rng: Rng, label: str, ch: int) -> np.ndarray:
    """Colored-noise field min-max normalized to [0, 1], regenerating on
    the (practically unreachable) constant-field case."""
    for attempt in range(_MAX_NOISE_ATTEMPTS):
        field = colored_noise(ColoredNoiseSpec(side, beta), rng.child(label, ch, attempt))
        try:
            return _minmax_unit(field)
        except DegenerateNoise:
            continue
    raise DegenerateNoise(f"{label} channel {ch}: constant noise after retries")


def contour_permutation(spec: KeySpec) -> np.ndarray:
    return Rng(spec.seed).child("psf-perm").permutation(spec.psf_side)


def perlin_contour_psf(spec: KeySpec) -> np.ndarray:
    """Binary contour mask: pixels where |perlin field| <= tau.

    tau is found by bisection so the fill fraction lands within +/-1
    percentage point of ``spec.contour_fill``.
    """
    spec.validate()
    field = perlin_field(
        PerlinSpec(spec.psf_side, spec.feature_size, contour_permutation(spec))
    )
    mag = np.abs(field.astype(np.float64))
    target = spec.contour_fill
    lo, hi = 0.0, float(mag.max())
    tau = hi / 2.0
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        fill = float((mag <= mid).mean())
        if abs(fill - target) <= abs(float((mag <= tau).mean()) - target):
            tau = mid
        if fill < target:
            lo = mid
        else:
            hi = mid
    if abs(float((mag <= tau).mean()) - target) > 0.01:
        raise InvalidSpec("contour fill did not converge to the target")
    return (mag <= tau).astype(np.float32)


def _normalize_channels(stack: np.ndarray) -> np.ndarray:
    sums = stack.sum(axis=(0, 1), keepdims=True)
    if np.any(sums <= 0):
        raise DegenerateNoise("psf channel sums to zero, cannot normalize")
    return (stack / sums).astype(np.float32)


def _squeeze_channels(stack: np.ndarray, channels: int) -> np.ndarray:
    return stack[:, :, 0] if channels == 1 else stack


def psf_components(spec: KeySpec):
    """The two Eq.-style ingredients of the house PSF: per-channel colored
    fields (min-max normalized) and the shared binary contour."""
    spec.validate()
    rng = Rng(spec.seed)
    colr = np.stack(
        [
            _colored_unit(spec.psf_side, spec.beta, rng, "psf-colr", ch)
            for ch in range(spec.channels)
        ],
        axis=2,
    )
    return colr, perlin_contour_psf(spec)


def make_opencam_psf(spec: KeySpec) -> np.ndarray:
    """Blend colored noise with the binary contour and sum-normalize."""
    colr, cont = psf_components(spec)
    blend = spec.alpha * colr.astype(np.float64) + (1.0 - spec.alpha) * cont.astype(
        np.float64
    )[:, :, None]
    return _squeeze_channels(_normalize_channels(blend), spec.channels)


def make_scaling_mask(spec: KeySpec) -> np.ndarray:
    """Colored noise mapped affinely onto [s_min, 1] per channel."""
    spec.validate()
    rng = Rng(spec.seed)
    h, w = spec.sensor_dims
    if h != w:
        # colored noise is synthesized square, then cropped
        side = max(h, w)
    else:
        side = h
    chans = []
    for ch in range(spec.channels):
        unit = _colored_unit(side, spec.beta, rng, "scal", ch)[:h, :w]
        unit = _minmax_unit(unit)  # exact 0/1 endpoints after crop
        chans.append(spec.s_min + (1.0 - spec.s_min) * unit.astype(np.float64))
    stack = np.stack(chans, axis=2).astype(np.float32)
    return _squeeze_channels(stack, spec.channels)


def make_key(spec: KeySpec) -> Key:
    key = Key(psf=make_opencam_psf(spec), scaling=make_scaling_mask(spec), spec=spec)
    key.validate()
    return key


def baseline_psf(kind: str, spec: KeySpec) -> np.ndarray:
    """Simplified stand-ins for the mask designs used in comparisons.

    All kinds share the spatial pattern across channels and are
    sum-normalized per channel.
    """
    spec.validate()
    side = spec.psf_side
    rng = Rng(spec.seed).child("baseline", kind)
    if kind == "white_blend":
        # white noise replaces colored noise in the blend
        white = _minmax_unit(rng.standard_normal((side, side)))
        cont = perlin_contour_psf(spec)
        pattern = spec.alpha * white.astype(np.float64) + (1.0 - spec.alpha) * cont
    elif kind == "phlatcam_contour":
        pattern = perlin_contour_psf(spec).astype(np.float64)
    elif kind == "multi_pinhole":
        flat = rng.choice(side * side, size=_MULTI_PINHOLE_COUNT, replace=False)
        pattern = np.zeros(side * side)
        pattern[flat] = 1.0
        pattern = pattern.reshape(side, side)
    elif kind == "random_binary":
        pattern = (rng.random((side, side)) < 0.5).astype(np.float64)
        if pattern.sum() == 0:
            raise DegenerateNoise("all-zero random binary pattern")
    elif kind == "random_speckle":
        pattern = rng.random((side, side))
    else:
        raise UnknownKind(f"unknown baseline psf kind {kind!r}")
    stack = np.repeat(pattern[:, :, None], spec.channels, axis=2)
    return _squeeze_channels(_normalize_channels(stack), spec.channels)


def spectrum_floor(psf: np.ndarray) -> float:
    """min |DFT(P)| / max |DFT(P)| over frequencies, worst channel."""
    psf3 = np.atleast_3d(np.asarray(psf, dtype=np.float64))
    ratios = []
    for ch in range(psf3.shape[2]):
        mag = np.abs(np.fft.fft2(psf3[:, :, ch]))
        peak = mag.max()
        ratios.append(mag.min() / peak if peak > 0 else 0.0)
    return float(min(ratios))


def is_degenerate(key: Key) -> bool:
    return spectrum_floor(key.psf) < SPECTRUM_FLOOR_RATIO


def retry_seed(seed: int, attempt: int) -> int:
    """Deterministic derived seed for key regeneration attempt ``attempt``."""
    return (int(seed) ^ (attempt * _RESEED_MIX)) & ((1 << 64) - 1)


def generate_key(
    seed: int,
    psf_side: int,
    sensor_dims,
    channels: int = 1,
    max_attempts: int = _MAX_NOISE_ATTEMPTS,
    **overrides,
) -> Key:
    """Draw a keyspec and realize it, regenerating degenerate keys.

    ``overrides`` replace drawn/default KeySpec fields (e.g. alpha=0.5).
    Raises DegenerateKey after ``max_attempts`` rejected keys.
    """
    for attempt in range(max_attempts):
        spec = draw_keyspec(retry_seed(seed, attempt), psf_side, sensor_dims, channels)
        if overrides:
            spec = replace_spec(spec, **overrides)
        key = make_key(spec)
        if not is_degenerate(key):
            return key
    raise DegenerateKey(f"no non-degenerate key after {max_attempts} attempts")


def replace_spec(spec: KeySpec, **overrides) -> KeySpec:
    data = asdict(spec)
    data.update(overrides)
    out = KeySpec(**data)
    out.validate()
    return out


def save_key(key: Key, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(key.psf, directory / "psf.ocam")
    write_tensor(key.scaling, directory / "scaling.ocam")
    meta = asdict(key.spec)
    meta["sensor_dims"] = list(key.spec.sensor_dims)
    meta["generator_version"] = GENERATOR_VERSION
    meta["spectrum_floor"] = spectrum_floor(key.psf)
    (directory / "key.json").write_text(json.dumps(meta, sort_keys=True, indent=2))


def load_key(directory) -> Key:
    directory = Path(directory)
    meta = json.loads((directory / "key.json").read_text())
    meta.pop("generator_version", None)
    meta.pop("spectrum_floor", None)
    meta["sensor_dims"] = tuple(meta["sensor_dims"])
    spec = KeySpec(**meta)
    key = Key(
        psf=read_tensor(directory / "psf.ocam"),
        scaling=read_tensor(directory / "scaling.ocam"),
        spec=spec,
    )
    key.validate()
    return key
