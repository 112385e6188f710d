"""Dense tensor persistence and PNG import/export.

A tensor is a plain ``numpy.ndarray`` of ``float32``, row-major and
channel-last: shape ``(H, W)`` for single-channel data or ``(H, W, C)``.
All public operations keep every element finite.

Binary file format (``.ocam``), little-endian throughout:

    offset  size  field
    0       8     magic  b"OPENCAM1"
    8       2     version, uint16 (currently 1)
    10      1     ndim, uint8 (2 or 3)
    11      4*nd  dims, uint32 each
    ...     4*n   payload, float32, row-major

Round-trips are bit-exact. PNG visualizations get a JSON sidecar with the
(min, max) used for normalization so they stay invertible to 8-bit
precision.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import (
    BadMagic,
    DecodeFailure,
    InvalidDims,
    IoFailure,
    TruncatedPayload,
    UnsupportedBitDepth,
    UnsupportedVersion,
)

MAGIC = b"OPENCAM1"
FORMAT_VERSION = 1

# Rec. 601 luma weights used for grayscale conversion.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def validate_tensor(a: np.ndarray) -> np.ndarray:
    """Check dims/finiteness and return the array as float32."""
    a = np.asarray(a)
    if a.ndim not in (2, 3):
        raise InvalidDims(f"tensor must be 2-D or 3-D, got ndim={a.ndim}")
    if any(d <= 0 for d in a.shape):
        raise InvalidDims(f"tensor dims must be positive, got {a.shape}")
    a = a.astype(np.float32, copy=False)
    if not np.all(np.isfinite(a)):
        raise InvalidDims("tensor contains non-finite values")
    return a


def write_tensor(t: np.ndarray, path) -> None:
    """Persist a tensor in the OPENCAM1 binary format."""
    t = validate_tensor(t)
    header = MAGIC + struct.pack("<HB", FORMAT_VERSION, t.ndim)
    header += struct.pack(f"<{t.ndim}I", *t.shape)
    payload = np.ascontiguousarray(t, dtype="<f4").tobytes()
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
    except OSError as exc:
        raise IoFailure(f"cannot write tensor to {path}: {exc}") from exc


def read_tensor(path) -> np.ndarray:
    """Read a tensor written by :func:`write_tensor` (bit-exact)."""
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read tensor from {path}: {exc}") from exc

    if len(raw) < 8 or raw[:8] != MAGIC:
        raise BadMagic(f"{path}: missing OPENCAM1 magic")
    if len(raw) < 11:
        raise TruncatedPayload(f"{path}: header truncated")
    version, ndim = struct.unpack_from("<HB", raw, 8)
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: version {version} not supported")
    if ndim not in (2, 3):
        raise TruncatedPayload(f"{path}: ndim must be 2 or 3, got {ndim}")
    dims_end = 11 + 4 * ndim
    if len(raw) < dims_end:
        raise TruncatedPayload(f"{path}: dims truncated")
    dims = struct.unpack_from(f"<{ndim}I", raw, 11)
    count = int(np.prod(dims))
    expected = dims_end + 4 * count
    if len(raw) != expected:
        raise TruncatedPayload(
            f"{path}: expected {expected} bytes, found {len(raw)}"
        )
    data = np.frombuffer(raw, dtype="<f4", count=count, offset=dims_end)
    return data.reshape(dims).astype(np.float32)


def load_png_as_scene(path, channels: int = 1) -> np.ndarray:
    """Load an 8- or 16-bit PNG as a scene tensor scaled to [0, 1].

    With ``channels=1`` color images are reduced with the fixed luma
    weights 0.299/0.587/0.114; with ``channels=3`` grayscale images are
    replicated across channels.
    """
    if channels not in (1, 3):
        raise InvalidDims(f"channels must be 1 or 3, got {channels}")
    try:
        img = Image.open(path)
        img.load()
    except FileNotFoundError as exc:
        raise IoFailure(f"{path}: {exc}") from exc
    except Exception as exc:
        raise DecodeFailure(f"{path}: cannot decode PNG: {exc}") from exc

    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64) / 65535.0
    elif img.mode in ("L", "RGB"):
        arr = np.asarray(img, dtype=np.float64) / 255.0
    elif img.mode in ("LA", "RGBA", "P"):
        base = img.convert("RGB")
        arr = np.asarray(base, dtype=np.float64) / 255.0
    else:
        raise UnsupportedBitDepth(f"{path}: unsupported PNG mode {img.mode}")

    if arr.ndim == 3 and arr.shape[2] >= 3:
        arr = arr[:, :, :3]
        if channels == 1:
            arr = (
                LUMA_WEIGHTS[0] * arr[:, :, 0]
                + LUMA_WEIGHTS[1] * arr[:, :, 1]
                + LUMA_WEIGHTS[2] * arr[:, :, 2]
            )
    else:
        if arr.ndim == 3:
            arr = arr[:, :, 0]
        if channels == 3:
            arr = np.repeat(arr[:, :, None], 3, axis=2)

    return np.clip(arr, 0.0, 1.0).astype(np.float32)


def save_png_visualization(t: np.ndarray, path, normalize: bool = True) -> None:
    """Render a tensor as an 8-bit PNG plus a JSON sidecar with (min, max).

    With ``normalize`` the value range is mapped affinely onto 0..255;
    constant tensors map to mid-gray 128. Without it values are taken as
    [0, 1] data and scaled by 255 directly (clipped).
    """
    t = validate_tensor(t)
    lo = float(t.min())
    hi = float(t.max())
    if normalize:
        if hi > lo:
            scaled = (t.astype(np.float64) - lo) / (hi - lo) * 255.0
        else:
            scaled = np.full(t.shape, 128.0)
    else:
        scaled = np.clip(t.astype(np.float64), 0.0, 1.0) * 255.0
    img8 = np.round(scaled).astype(np.uint8)

    if img8.ndim == 3 and img8.shape[2] == 1:
        img8 = img8[:, :, 0]
    if img8.ndim == 2:
        img = Image.fromarray(img8, mode="L")
    elif img8.shape[2] == 3:
        img = Image.fromarray(img8, mode="RGB")
    else:
        raise InvalidDims(f"cannot visualize tensor of shape {t.shape}")

    path = Path(path)
    try:
        img.save(path, format="PNG")
        sidecar = {"min": lo, "max": hi, "normalize": bool(normalize)}
        path.with_suffix(path.suffix + ".json").write_text(
            json.dumps(sidecar, sort_keys=True)
        )
    except OSError as exc:
        raise IoFailure(f"cannot write PNG to {path}: {exc}") from exc
