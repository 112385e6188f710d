"""Forward imaging model: the encryption side of the camera.

The sensor records the full-size linear convolution of the scene with the
multiplexing PSF (zero-padded boundaries, output (H1+H2-1, W1+W2-1)),
optionally modulated element-wise by the scaling mask, plus additive
Gaussian noise:

    single mask:  Y = P * X + N
    double mask:  Y = S . (P * X) + N

Sensor size is taken equal to the full-convolution size so no cropping
occurs. Scene synthesis helpers for the attack protocols (uniform,
impulse, bright-source) live here too.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import fftconvolve

from .errors import ChannelMismatch, DimMismatch, FileMissing, InvalidSpec
from .keygen import Key
from .noise_gen import Rng
from .tensor_store import load_png_as_scene, read_tensor, write_tensor


@dataclass
class Measurement:
    """Sensor-plane ciphertext with provenance metadata."""

    data: np.ndarray
    key_id: str = ""
    scene_id: str = ""
    sigma: float = 0.0
    seed: int | None = None


@dataclass(frozen=True)
class NoiseModel:
    """Additive i.i.d. Gaussian sensor noise of standard deviation sigma."""

    sigma: float = 0.0

    def validate(self) -> None:
        if self.sigma < 0:
            raise InvalidSpec("sigma must be >= 0")


@dataclass(frozen=True)
class SceneSpec:
    """Synthetic or file-backed scene description.

    kinds: natural(file), uniform(level), impulse(position, amplitude),
    bright_source(file or base, position, relative_intensity). The bright
    source adds ``relative_intensity * max(base)`` at one pixel.
    """

    kind: str
    dims: tuple = ()
    channels: int = 1
    level: float = 1.0
    position: tuple | None = None
    amplitude: float = 1.0
    file: str | None = None
    base: np.ndarray | None = field(default=None, repr=False)
    relative_intensity: float = 1e3


def _stack(a: np.ndarray) -> np.ndarray:
    """View as (H, W, C)."""
    a = np.asarray(a)
    return a[:, :, None] if a.ndim == 2 else a


def _match_channels(x: np.ndarray, p: np.ndarray) -> None:
    if (x.ndim == 2) != (p.ndim == 2) or (
        x.ndim == 3 and p.ndim == 3 and x.shape[2] != p.shape[2]
    ):
        raise ChannelMismatch(
            f"scene has shape {x.shape} but psf has shape {p.shape}"
        )


def full_convolve(x: np.ndarray, p: np.ndarray) -> np.ndarray:
    """Full-size zero-padded linear convolution, per channel via FFT."""
    _match_channels(x, p)
    xs = _stack(x).astype(np.float64)
    ps = _stack(p).astype(np.float64)
    out = np.stack(
        [
            fftconvolve(xs[:, :, c], ps[:, :, c], mode="full")
            for c in range(xs.shape[2])
        ],
        axis=2,
    )
    out = out.astype(np.float32)
    return out[:, :, 0] if np.asarray(x).ndim == 2 else out


def conv_output_dims(scene_dims, psf_dims) -> tuple:
    return (scene_dims[0] + psf_dims[0] - 1, scene_dims[1] + psf_dims[1] - 1)


def _add_noise(clean: np.ndarray, sigma: float, rng: Rng | None) -> np.ndarray:
    if sigma == 0.0:
        return clean.astype(np.float32)
    if rng is None:
        raise InvalidSpec("sigma > 0 requires an Rng for the noise draw")
    noisy = clean.astype(np.float64) + sigma * rng.standard_normal(clean.shape)
    return noisy.astype(np.float32)


def forward_single(
    x: np.ndarray,
    p: np.ndarray,
    noise: NoiseModel = NoiseModel(),
    rng: Rng | None = None,
    key_id: str = "",
    scene_id: str = "",
) -> Measurement:
    """Y = P * X + N."""
    noise.validate()
    data = _add_noise(full_convolve(x, p), noise.sigma, rng)
    return Measurement(
        data=data,
        key_id=key_id,
        scene_id=scene_id,
        sigma=noise.sigma,
        seed=rng.seed if rng is not None else None,
    )


def forward_double(
    x: np.ndarray,
    key: Key,
    noise: NoiseModel = NoiseModel(),
    rng: Rng | None = None,
    scene_id: str = "",
) -> Measurement:
    """Y = S . (P * X) + N; scaling dims must equal the conv output dims."""
    noise.validate()
    conv = full_convolve(x, key.psf)
    if _stack(conv).shape != _stack(key.scaling).shape:
        raise DimMismatch(
            f"conv output {conv.shape} does not match scaling {key.scaling.shape}"
        )
    data = _add_noise(
        conv.astype(np.float64) * key.scaling.astype(np.float64), noise.sigma, rng
    )
    return Measurement(
        data=data,
        key_id=f"seed{key.spec.seed}",
        scene_id=scene_id,
        sigma=noise.sigma,
        seed=rng.seed if rng is not None else None,
    )


def scene_dims_for_key(key: Key) -> tuple:
    h3, w3 = key.spec.sensor_dims
    return (h3 - key.spec.psf_side + 1, w3 - key.spec.psf_side + 1)


def uniform_scene_response(
    key: Key,
    level: float = 1.0,
    noise: NoiseModel = NoiseModel(),
    rng: Rng | None = None,
) -> Measurement:
    """USR: the camera's response to an all-constant scene."""
    dims = scene_dims_for_key(key)
    shape = dims if key.spec.channels == 1 else dims + (key.spec.channels,)
    scene = np.full(shape, float(level), dtype=np.float32)
    m = forward_double(scene, key, noise, rng, scene_id=f"uniform{level}")
    return m


def synthesize_scene(spec: SceneSpec, rng: Rng | None = None) -> np.ndarray:
    """Realize a SceneSpec as a tensor. ``rng`` is unused by the current
    kinds but accepted so callers can treat synthesis uniformly."""
    if spec.kind == "natural":
        if spec.file is None:
            raise InvalidSpec("natural scene requires a file")
        try:
            return load_png_as_scene(spec.file, spec.channels)
        except Exception as exc:
            if not Path(spec.file).exists():
                raise FileMissing(f"scene file missing: {spec.file}") from exc
            raise
    if spec.kind == "uniform":
        shape = tuple(spec.dims) if spec.channels == 1 else tuple(spec.dims) + (spec.channels,)
        return np.full(shape, float(spec.level), dtype=np.float32)
    if spec.kind == "impulse":
        shape = tuple(spec.dims) if spec.channels == 1 else tuple(spec.dims) + (spec.channels,)
        out = np.zeros(shape, dtype=np.float32)
        pos = spec.position or (spec.dims[0] // 2, spec.dims[1] // 2)
        out[pos[0], pos[1], ...] = spec.amplitude
        return out
    if spec.kind == "bright_source":
        if spec.base is not None:
            base = np.asarray(spec.base, dtype=np.float32).copy()
        elif spec.file is not None:
            base = load_png_as_scene(spec.file, spec.channels)
        else:
            raise InvalidSpec("bright_source requires a base scene or file")
        h, w = base.shape[:2]
        pos = spec.position or (h // 2, w // 2)
        base[pos[0], pos[1], ...] += spec.relative_intensity * float(base.max())
        return base
    raise InvalidSpec(f"unknown scene kind {spec.kind!r}")


def bright_source_scene(
    base: np.ndarray, relative_intensity: float, position: tuple | None = None
) -> np.ndarray:
    """Convenience wrapper: add a point of r * max(base) onto a base scene."""
    return synthesize_scene(
        SceneSpec(
            kind="bright_source",
            base=base,
            relative_intensity=relative_intensity,
            position=position,
        )
    )


def save_measurement(m: Measurement, path) -> None:
    path = Path(path)
    write_tensor(m.data, path)
    meta = {
        "key_id": m.key_id,
        "scene_id": m.scene_id,
        "sigma": m.sigma,
        "seed": m.seed,
    }
    path.with_suffix(path.suffix + ".json").write_text(
        json.dumps(meta, sort_keys=True)
    )


def load_measurement(path) -> Measurement:
    path = Path(path)
    data = read_tensor(path)
    meta_path = path.with_suffix(path.suffix + ".json")
    meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
    return Measurement(
        data=data,
        key_id=meta.get("key_id", ""),
        scene_id=meta.get("scene_id", ""),
        sigma=float(meta.get("sigma", 0.0)),
        seed=meta.get("seed"),
    )
