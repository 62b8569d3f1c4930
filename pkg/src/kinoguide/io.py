"""Array and media I/O: the KGT1 binary tensor format, 16-bit PGM depth
maps, and PNG/GIF frame export.

KGT1 layout: magic bytes ``KGT1``, u8 dtype code (0=f32, 1=f64), u8 rank,
``rank`` little-endian u32 dims, then the row-major payload.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

_MAGIC = b"KGT1"
_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_FOR = {np.dtype("float32"): 0, np.dtype("float64"): 1}


def save_kgt(path: str | Path, array: np.ndarray) -> None:
    """Write an array to ``path`` in KGT1 format (f32 or f64 only)."""
    arr = np.ascontiguousarray(array)
    if arr.dtype not in _CODE_FOR:
        raise ValueError(f"KGT1 stores float32/float64, got {arr.dtype}")
    code = _CODE_FOR[arr.dtype]
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BB", code, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())


def load_kgt(path: str | Path) -> np.ndarray:
    """Read a KGT1 tensor file back into a numpy array."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise ValueError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
        code, rank = struct.unpack("<BB", fh.read(2))
        if code not in _DTYPE_CODES:
            raise ValueError(f"{path}: unknown dtype code {code}")
        dims = struct.unpack(f"<{rank}I", fh.read(4 * rank))
        dtype = _DTYPE_CODES[code]
        count = int(np.prod(dims)) if rank else 1
        payload = fh.read(count * dtype.itemsize)
        if len(payload) != count * dtype.itemsize:
            raise ValueError(f"{path}: truncated payload")
    arr = np.frombuffer(payload, dtype=dtype).reshape(dims)
    return arr.astype(dtype.newbyteorder("="))


def load_pgm16(path: str | Path) -> np.ndarray:
    """Read a binary (P5) PGM file; 16-bit samples are big-endian per spec."""
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    # Header: P5, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them.
    tokens: list[int] = []
    pos = 2
    while len(tokens) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(int(data[start:pos]))
    pos += 1  # single whitespace after maxval
    width, height, maxval = tokens
    if maxval > 255:
        raw = np.frombuffer(data, dtype=">u2", count=width * height, offset=pos)
    else:
        raw = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos)
    return raw.reshape(height, width).astype(np.float64)


def save_png(path: str | Path, frame: np.ndarray) -> None:
    """Write one [H,W] or [1,H,W] frame as an 8-bit grayscale PNG."""
    from PIL import Image

    img = np.asarray(frame)
    if img.ndim == 3:
        img = img[0]
    img8 = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(img8, mode="L").save(path)


def save_gif(path: str | Path, video: np.ndarray, duration_ms: int = 120) -> None:
    """Write an [N,1,H,W] or [N,H,W] video as an animated GIF."""
    from PIL import Image

    vid = np.asarray(video)
    if vid.ndim == 4:
        vid = vid[:, 0]
    frames = [
        Image.fromarray(np.clip(np.round(f * 255.0), 0, 255).astype(np.uint8), mode="L")
        for f in vid
    ]
    frames[0].save(
        path,
        save_all=True,
        append_images=frames[1:],
        duration=duration_ms,
        loop=0,
    )


def save_png_strip(path: str | Path, video: np.ndarray, pad: int = 2) -> None:
    """Write a video as one horizontal strip of frames."""
    vid = np.asarray(video)
    if vid.ndim == 4:
        vid = vid[:, 0]
    n, h, w = vid.shape
    strip = np.ones((h, n * w + (n - 1) * pad), dtype=vid.dtype)
    for k in range(n):
        strip[:, k * (w + pad) : k * (w + pad) + w] = vid[k]
    save_png(path, strip)
