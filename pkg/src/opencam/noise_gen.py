"""Seeded deterministic randomness and noise fields.

Three pieces live here:

* :class:`Rng` — a deterministic 64-bit-seeded stream pinned to NumPy's
  Philox counter-based engine, with documented sub-seeding so independent
  child streams can be derived from (seed, stream-id) paths.
* improved Perlin noise over a randomized permutation vector whose length
  equals the field side,
* colored noise shaped to the power spectral density
  ``H_beta(u, v) = 1 / (u^2 + v^2)^(beta/2)`` (DC forced to zero).

The colored field is realized by spectrally shaping a real white-noise
field: multiply its DFT magnitude by sqrt(H_beta) and invert. This yields
a real, zero-mean field with the intended 1/f^beta radial spectrum without
relying on an explicit random-phase construction that would not be
Hermitian-symmetric.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidSpec

_MASK64 = (1 << 64) - 1

# Unit gradient directions at 45-degree steps with an asymmetric offset.
# The offset keeps the set free of axis-aligned vectors and mirror pairs
# (theta, pi - theta) / (theta, -theta); either would make the field
# vanish identically along lattice edges or at cell midpoints, so with
# this set the zero set at grid points is exactly the lattice. The
# theoretical field range stays [-sqrt(2)/2, sqrt(2)/2], so a sqrt(2)
# scale maps to [-1, 1].
_GRAD_ANGLES = np.arange(8) * (np.pi / 4.0) + 0.5
_GRADS = np.stack([np.cos(_GRAD_ANGLES), np.sin(_GRAD_ANGLES)], axis=1)


def _stream_token(token) -> int:
    """Map a stream id (int or str) to a 64-bit integer, stably."""
    if isinstance(token, (int, np.integer)):
        return int(token) & _MASK64
    if isinstance(token, str):
        digest = hashlib.sha256(token.encode("utf-8")).digest()
        return int.from_bytes(digest[:8], "little")
    raise InvalidSpec(f"stream ids must be int or str, got {type(token)!r}")


class Rng:
    """Deterministic random stream with splittable sub-seeding.

    The generator is pinned: ``Philox`` keyed through ``SeedSequence`` on
    the tuple ``(seed, *stream_path)``. Identical (seed, path) pairs give
    byte-identical streams on every platform. ``child(*ids)`` derives an
    independent stream; string ids are hashed with SHA-256.
    """

    def __init__(self, seed: int, _path: tuple = ()):
        self.seed = int(seed) & _MASK64
        self.path = tuple(_path)
        entropy = (self.seed,) + self.path
        self._gen = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy))
        )

    def child(self, *ids) -> "Rng":
        """Independent stream for (seed, *path, *ids)."""
        tokens = tuple(_stream_token(t) for t in ids)
        return Rng(self.seed, self.path + tokens)

    # thin pass-throughs over the pinned generator

    def random(self, size=None):
        return self._gen.random(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        return self._gen.uniform(low, high, size)

    def standard_normal(self, size=None):
        return self._gen.standard_normal(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, n, size=None, replace=True):
        return self._gen.choice(n, size=size, replace=replace)

    def __repr__(self):
        return f"Rng(seed={self.seed}, path={self.path})"


@dataclass(frozen=True)
class PerlinSpec:
    """Parameters of a side x side improved-Perlin field.

    ``permutation`` must be a permutation of 0..side-1 (its length matches
    the field side). ``feature_size`` is the pixel pitch of the gradient
    lattice and must divide ``side``.
    """

    side: int
    feature_size: int
    permutation: np.ndarray = field(repr=False)

    def validate(self) -> None:
        if self.side <= 0 or self.feature_size <= 0:
            raise InvalidSpec("side and feature_size must be positive")
        if self.side % self.feature_size != 0:
            raise InvalidSpec(
                f"side {self.side} not divisible by feature_size {self.feature_size}"
            )
        perm = np.asarray(self.permutation)
        if perm.shape != (self.side,) or not np.array_equal(
            np.sort(perm), np.arange(self.side)
        ):
            raise InvalidSpec("permutation must be a permutation of 0..side-1")


def _fade(t: np.ndarray) -> np.ndarray:
    # quintic fade 6t^5 - 15t^4 + 10t^3 (C1-smooth interpolation)
    return t * t * t * (t * (t * 6.0 - 15.0) + 10.0)


def perlin_field(spec: PerlinSpec) -> np.ndarray:
    """Improved Perlin noise field in [-1, 1], zero at lattice points.

    Deterministic given the permutation; the gradient at lattice node
    (ix, iy) is selected by ``perm[(perm[ix mod n] + iy) mod n] mod 8``.
    """
    spec.validate()
    n = spec.side
    f = spec.feature_size
    perm = np.asarray(spec.permutation, dtype=np.int64)

    idx = np.arange(n)
    cell = idx // f
    frac = (idx % f) / float(f)

    # row index -> y, column index -> x
    yi = cell[:, None]
    xi = cell[None, :]
    yf = np.broadcast_to(frac[:, None], (n, n))
    xf = np.broadcast_to(frac[None, :], (n, n))

    def grad_hash(ix, iy):
        return perm[(perm[ix % n] + iy) % n] % len(_GRADS)

    g00 = _GRADS[grad_hash(xi, yi)]
    g10 = _GRADS[grad_hash(xi + 1, yi)]
    g01 = _GRADS[grad_hash(xi, yi + 1)]
    g11 = _GRADS[grad_hash(xi + 1, yi + 1)]

    d00 = g00[..., 0] * xf + g00[..., 1] * yf
    d10 = g10[..., 0] * (xf - 1.0) + g10[..., 1] * yf
    d01 = g01[..., 0] * xf + g01[..., 1] * (yf - 1.0)
    d11 = g11[..., 0] * (xf - 1.0) + g11[..., 1] * (yf - 1.0)

    u = _fade(xf)
    v = _fade(yf)
    top = d00 + u * (d10 - d00)
    bottom = d01 + u * (d11 - d01)
    value = (top + v * (bottom - top)) * np.sqrt(2.0)
    return value.astype(np.float32)


@dataclass(frozen=True)
class ColoredNoiseSpec:
    """side x side colored noise with PSD 1/(u^2+v^2)^(beta/2)."""

    side: int
    beta: float

    def validate(self) -> None:
        if self.side <= 0:
            raise InvalidSpec("side must be positive")
        if self.beta < 0:
            raise InvalidSpec("beta must be >= 0")


def psd_weight(side: int, beta: float) -> np.ndarray:
    """H_beta on the integer frequency grid, with H(0, 0) set to 0."""
    u = np.fft.fftfreq(side, d=1.0 / side)
    r2 = u[:, None] ** 2 + u[None, :] ** 2
    h = np.zeros((side, side))
    nz = r2 > 0
    h[nz] = 1.0 / r2[nz] ** (beta / 2.0)
    return h


def colored_noise(spec: ColoredNoiseSpec, rng: Rng) -> np.ndarray:
    """Real zero-mean unit-variance field with radial PSD slope -beta."""
    spec.validate()
    white = rng.standard_normal((spec.side, spec.side))
    shaped = np.fft.ifft2(np.fft.fft2(white) * np.sqrt(psd_weight(spec.side, spec.beta))).real
    shaped -= shaped.mean()
    std = shaped.std()
    if std == 0.0:
        raise InvalidSpec("degenerate colored-noise field (zero variance)")
    return (shaped / std).astype(np.float32)
