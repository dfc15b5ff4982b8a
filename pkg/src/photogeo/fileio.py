"""Image and depth-map file I/O.

Depth and normal maps travel as PFM (portable float map): float32,
little-endian (negative scale field), rows stored bottom-up.  Color images
travel as 8-bit PNG.  All writers go through a write-temp-then-rename so a
crash never leaves a truncated file at the target path.
"""

from __future__ import annotations

import os
import tempfile
from pathlib import Path

import numpy as np
from PIL import Image

PFM_SCALE = -1.0  # little-endian marker


def atomic_write_bytes(path, data: bytes) -> None:
    """Write bytes to ``path`` atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_pfm(path, data: np.ndarray) -> None:
    """Write a (H, W) or (H, W, 3) float map as PFM."""
    a = np.asarray(data, dtype=np.float32)
    if a.ndim == 2:
        header = b"Pf"
    elif a.ndim == 3 and a.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError(f"PFM data must be (H, W) or (H, W, 3), got shape {a.shape}")
    h, w = a.shape[:2]
    # PFM stores rows bottom-up
    body = np.flipud(a).astype("<f4").tobytes()
    payload = b"%s\n%d %d\n%f\n" % (header, w, h, PFM_SCALE) + body
    atomic_write_bytes(path, payload)


def read_pfm(path) -> np.ndarray:
    """Read a PFM file to a float32 array, (H, W) or (H, W, 3) top-down."""
    with open(path, "rb") as fh:
        header = fh.readline().strip()
        if header == b"Pf":
            channels = 1
        elif header == b"PF":
            channels = 3
        else:
            raise ValueError(f"{path}: not a PFM file (header {header!r})")
        dims = fh.readline().split()
        if len(dims) != 2:
            raise ValueError(f"{path}: malformed PFM dimensions line")
        w, h = int(dims[0]), int(dims[1])
        scale = float(fh.readline())
        dtype = "<f4" if scale < 0 else ">f4"
        count = w * h * channels
        raw = np.frombuffer(fh.read(count * 4), dtype=dtype)
        if raw.size != count:
            raise ValueError(f"{path}: truncated PFM payload")
    a = raw.reshape((h, w) if channels == 1 else (h, w, channels))
    return np.flipud(a).copy()


def write_png(path, image: np.ndarray) -> None:
    """Write a float image in [0, 1] (H, W) or (H, W, 3) as 8-bit PNG."""
    a = np.asarray(image, dtype=np.float64)
    if a.ndim not in (2, 3):
        raise ValueError(f"image must be (H, W) or (H, W, C), got shape {a.shape}")
    q = np.clip(np.rint(a * 255.0), 0, 255).astype(np.uint8)
    img = Image.fromarray(q)
    import io

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    atomic_write_bytes(path, buf.getvalue())


def read_png(path) -> np.ndarray:
    """Read a PNG to a float64 array in [0, 1]."""
    with Image.open(path) as img:
        a = np.asarray(img)
    return a.astype(np.float64) / 255.0


def read_mask(path) -> np.ndarray:
    """Read a mask image; any channel value >= 0.5 marks a foreground pixel."""
    a = read_png(path)
    if a.ndim == 3:
        a = a[..., :3].max(axis=-1)
    return a >= 0.5


def write_json(path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8") + b"\n")
