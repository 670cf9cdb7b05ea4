"""Image loading and saving.

PGM/PPM (P2/P3/P5/P6) are parsed directly so byte-level behavior is
fully under our control; PNG/JPEG go through Pillow. All loaders return
float64 arrays in [0, 1]: (H, W) for grayscale, (H, W, 3) for color.
"""

from __future__ import annotations

import os

import numpy as np

__all__ = ["load_image", "save_image", "to_gray"]

_NETPBM_EXT = {".pgm", ".ppm", ".pnm"}


def to_gray(img: np.ndarray) -> np.ndarray:
    """Luminance (Rec. 601 weights) for color input; pass-through for gray."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2:
        return img
    if img.ndim == 3 and img.shape[2] == 1:
        return img[:, :, 0]
    if img.ndim == 3 and img.shape[2] == 3:
        return img[:, :, 0] * 0.299 + img[:, :, 1] * 0.587 + img[:, :, 2] * 0.114
    raise ValueError(f"cannot convert shape {img.shape} to gray")


def _read_tokens(data: bytes, count: int, pos: int) -> tuple[list, int]:
    """Read whitespace-separated header tokens, skipping '#' comments."""
    tokens = []
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos : pos + 1].isspace():
            pos += 1
        if pos < n and data[pos : pos + 1] == b"#":
            while pos < n and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError("truncated netpbm header")
        tokens.append(data[start:pos])
    return tokens, pos


def _load_netpbm(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < 2:
        raise ValueError(f"not a netpbm file: {path}")
    magic = data[:2].decode("ascii", "replace")
    if magic not in ("P2", "P3", "P5", "P6"):
        raise ValueError(f"unsupported netpbm magic {magic!r} in {path}")
    color = magic in ("P3", "P6")
    binary = magic in ("P5", "P6")
    tokens, pos = _read_tokens(data, 3, 2)
    wid, hgt, maxval = (int(t) for t in tokens)
    if wid <= 0 or hgt <= 0 or maxval <= 0 or maxval > 65535:
        raise ValueError(f"bad netpbm header in {path}")
    nvals = wid * hgt * (3 if color else 1)
    if binary:
        pos += 1  # single whitespace byte after maxval
        if maxval < 256:
            raw = np.frombuffer(data, dtype=np.uint8, count=nvals, offset=pos)
        else:
            raw = np.frombuffer(data, dtype=">u2", count=nvals, offset=pos)
    else:
        vals = data[pos:].split()
        if len(vals) < nvals:
            raise ValueError(f"truncated netpbm data in {path}")
        raw = np.array([int(v) for v in vals[:nvals]], dtype=np.uint32)
    arr = raw.astype(np.float64) / float(maxval)
    if color:
        return arr.reshape(hgt, wid, 3)
    return arr.reshape(hgt, wid)


def load_image(path: str) -> np.ndarray:
    """Load an image file as float64 in [0, 1]."""
    ext = os.path.splitext(path)[1].lower()
    if ext in _NETPBM_EXT:
        return _load_netpbm(path)
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB" if im.mode not in ("1", "I", "F", "L") else "L")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return arr


def _to_uint8(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(img, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def save_image(path: str, img: np.ndarray) -> None:
    """Save a float [0, 1] image; format chosen by extension."""
    ext = os.path.splitext(path)[1].lower()
    arr = _to_uint8(img)
    if ext in _NETPBM_EXT:
        if arr.ndim == 2 and ext != ".ppm":
            header = b"P5\n%d %d\n255\n" % (arr.shape[1], arr.shape[0])
            payload = arr.tobytes()
        else:
            if arr.ndim == 2:
                arr = np.repeat(arr[:, :, None], 3, axis=2)
            header = b"P6\n%d %d\n255\n" % (arr.shape[1], arr.shape[0])
            payload = arr.tobytes()
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(payload)
        return
    from PIL import Image

    Image.fromarray(arr).save(path)
