from __future__ import annotations

import io
import math
from pathlib import Path

import numpy as np
from PIL import Image

from . import container
from .artifacts import atomic_write_bytes

FORMATS = {".pgm": "PPM", ".png": "PNG"}


def to_uint8(x: np.ndarray) -> np.ndarray:
    """[-1, 1] floats -> 0..255."""
    return np.clip(np.rint((np.asarray(x, dtype=np.float64) + 1.0) * 127.5), 0, 255).astype(np.uint8)


def from_uint8(u: np.ndarray) -> np.ndarray:
    return (np.asarray(u, dtype=np.float32) / np.float32(127.5) - np.float32(1.0)).astype(np.float32)


def _to_pil(img: np.ndarray) -> Image.Image:
    arr = np.asarray(img)
    if arr.ndim == 3:
        arr = arr[0] if arr.shape[0] == 1 else np.transpose(arr, (1, 2, 0))
    u8 = to_uint8(arr)
    return Image.fromarray(u8, mode="L" if u8.ndim == 2 else "RGB")


def save_image(path: Path, img: np.ndarray) -> None:
    """Write a (C, H, W) or (H, W) image in [-1, 1] as 8-bit PGM or PNG, chosen by suffix."""
    fmt = FORMATS.get(path.suffix.lower())
    if fmt is None:
        raise ValueError(f"unsupported image suffix {path.suffix!r} (use .pgm or .png)")
    buf = io.BytesIO()
    _to_pil(img).save(buf, format=fmt)
    atomic_write_bytes(path, buf.getvalue())


def load_image(path: Path, channels: int = 1) -> np.ndarray:
    """Read an 8-bit image back to (C, H, W) float32 in [-1, 1]."""
    with Image.open(path) as im:
        im = im.convert("L" if channels == 1 else "RGB")
        arr = np.asarray(im)
    arr = arr[None] if arr.ndim == 2 else np.transpose(arr, (2, 0, 1))
    return from_uint8(arr)


def save_raw(path: Path, img: np.ndarray, meta: dict[str, str] | None = None) -> None:
    """Lossless float tensor in the shared container format."""
    container.save(path, {"image": np.asarray(img, dtype=np.float32)}, meta)


def load_raw(path: Path) -> np.ndarray:
    tensors, _ = container.load(path)
    return tensors["image"]


def make_grid(images: np.ndarray, ncol: int | None = None, pad: int = 1) -> np.ndarray:
    """(N, C, H, W) -> one (C, rows*(H+pad)-pad, cols*(W+pad)-pad) canvas, background -1."""
    images = np.asarray(images, dtype=np.float32)
    n, c, h, w = images.shape
    ncol = ncol or int(math.ceil(math.sqrt(n)))
    nrow = int(math.ceil(n / ncol))
    canvas = np.full((c, nrow * (h + pad) - pad, ncol * (w + pad) - pad), -1.0, dtype=np.float32)
    for i in range(n):
        r, q = divmod(i, ncol)
        canvas[:, r * (h + pad) : r * (h + pad) + h, q * (w + pad) : q * (w + pad) + w] = images[i]
    return canvas
