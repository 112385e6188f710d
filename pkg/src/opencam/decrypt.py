"""Keyed decryption: scaling normalization + Fourier-domain Tikhonov.

Decryption undoes the two optical operations in order. The scaling mask is
removed by element-wise division Y_N = Y / (S + eps); the convolution is
inverted by the closed-form Tikhonov solution

    X_hat = argmin_X ||Y_N - P * X||_F^2 + gamma ||X||_F^2

evaluated as a Wiener filter on the full-convolution grid with circular
boundary (the padded grid is large enough that the linear convolution is
circular-consistent). The PSF is embedded at the grid origin, so the
scene estimate is cropped at offset (0, 0); this makes forward(delta) a
fixed point of decrypt(forward(.)). The output is clamped to >= 0 since
scenes are intensities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateKey, DimMismatch, InvalidSpec
from .keygen import Key
from .optics import Measurement

# gamma defaults: noisy captures need visible regularization, noiseless
# oracle checks use a tiny ridge.
DEFAULT_GAMMA = 3e-4
NOISELESS_GAMMA = 1e-6
DEFAULT_EPSILON = 1e-3


@dataclass(frozen=True)
class WienerConfig:
    gamma: float = DEFAULT_GAMMA
    epsilon: float = DEFAULT_EPSILON

    def validate(self) -> None:
        if self.gamma < 0:
            raise InvalidSpec("gamma must be >= 0")
        if self.epsilon <= 0:
            raise InvalidSpec("epsilon must be > 0")


def _stack(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    return a[:, :, None] if a.ndim == 2 else a


def scaling_normalize(y, s: np.ndarray, epsilon: float) -> np.ndarray:
    """Element-wise Y / (S + eps)."""
    data = y.data if isinstance(y, Measurement) else np.asarray(y)
    if _stack(data).shape != _stack(s).shape:
        raise DimMismatch(f"measurement {data.shape} vs scaling {s.shape}")
    out = data.astype(np.float64) / (np.asarray(s, dtype=np.float64) + epsilon)
    return out.astype(np.float32)


def wiener_full_grid(y_n: np.ndarray, p: np.ndarray, gamma: float) -> np.ndarray:
    """Tikhonov solution on the padded grid (no crop, no clamp).

    Exposed for oracle comparisons; per channel
    X = IDFT( conj(P~) . DFT(y_n) / (|P~|^2 + gamma) ) with P~ the PSF
    zero-padded to the grid of ``y_n``.
    """
    ys = _stack(y_n).astype(np.float64)
    ps = _stack(p).astype(np.float64)
    if ys.shape[2] != ps.shape[2]:
        raise DimMismatch(
            f"measurement channels {ys.shape[2]} != psf channels {ps.shape[2]}"
        )
    gh, gw = ys.shape[:2]
    if ps.shape[0] > gh or ps.shape[1] > gw:
        raise DimMismatch("psf larger than measurement grid")
    out = np.empty_like(ys)
    for c in range(ys.shape[2]):
        padded = np.zeros((gh, gw))
        padded[: ps.shape[0], : ps.shape[1]] = ps[:, :, c]
        pf = np.fft.fft2(padded)
        denom = np.abs(pf) ** 2 + gamma
        if gamma == 0.0 and np.any(denom == 0.0):
            raise DegenerateKey("psf spectrum has an exact zero and gamma=0")
        out[:, :, c] = np.fft.ifft2(np.conj(pf) * np.fft.fft2(ys[:, :, c]) / denom).real
    return out if np.asarray(y_n).ndim == 3 else out[:, :, 0]


def wiener_decrypt(
    y_n: np.ndarray, p: np.ndarray, cfg: WienerConfig, scene_dims
) -> np.ndarray:
    """Wiener inversion cropped to the scene and clamped non-negative."""
    cfg.validate()
    h, w = scene_dims
    ys = _stack(y_n)
    ps = _stack(p)
    if ys.shape[0] != h + ps.shape[0] - 1 or ys.shape[1] != w + ps.shape[1] - 1:
        raise DimMismatch(
            f"measurement {ys.shape[:2]} is not the full-conv grid for "
            f"scene {scene_dims} and psf {ps.shape[:2]}"
        )
    full = wiener_full_grid(y_n, p, cfg.gamma)
    cropped = _stack(full)[:h, :w, :]
    cropped = np.clip(cropped, 0.0, None).astype(np.float32)
    return cropped[:, :, 0] if np.asarray(y_n).ndim == 2 else cropped


def keyed_decrypt(
    y: Measurement, key: Key, cfg: WienerConfig, scene_dims
) -> np.ndarray:
    """Scaling normalization followed by Wiener inversion with the key."""
    cfg.validate()
    y_n = scaling_normalize(y, key.scaling, cfg.epsilon)
    return wiener_decrypt(y_n, key.psf, cfg, scene_dims)
