"""Feature embeddings for template and search patches.

A patch embeds into two convolutional-style levels sharing one total
stride of 8 px/cell:

  * ``lo`` - shallow level: 127-px input -> 8x8 cells, 255-px -> 24x24;
  * ``hi`` - deeper level: one extra 3x3 valid stage, 127 -> 6x6,
    255 -> 22x22.

Both built-in extractors realize this geometry with an effective 71-px
receptive field so that shifting the input by 8k px shifts the cells by
exactly k (needed for correlation-peak bookkeeping). Precomputed
features from a real network can be slotted in via ``FileExtractor``.
"""

from __future__ import annotations

import csv
import math
import os
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .imageio import to_gray

__all__ = [
    "TEMPLATE_SIZE",
    "SEARCH_SIZE",
    "TOTAL_STRIDE",
    "FeatureMap",
    "FeaturePair",
    "ExtractorSpec",
    "GradientChannelExtractor",
    "RandomConvExtractor",
    "FileExtractor",
    "build_extractor",
    "embed",
    "crop_feature",
    "save_feature_map",
    "load_feature_map",
    "write_manifest",
    "load_manifest",
]

TEMPLATE_SIZE = 127
SEARCH_SIZE = 255
TOTAL_STRIDE = 8
_POOL_WINDOW = 71  # receptive field; (127-71)/8+1 = 8, (255-71)/8+1 = 24

# expected (lo, hi) cell counts per legal input size
_GEOMETRY = {TEMPLATE_SIZE: (8, 6), SEARCH_SIZE: (24, 22)}


@dataclass
class FeatureMap:
    """Dense feature cells: data has shape (channels, height, width)."""

    data: np.ndarray
    stride: float

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 3:
            raise ValueError(f"feature data must be (c, h, w), got {self.data.shape}")
        if not (self.stride > 0):
            raise ValueError("stride must be positive")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("feature data contains non-finite values")

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]


@dataclass
class FeaturePair:
    """The two embedding levels of one patch."""

    lo: FeatureMap
    hi: FeatureMap


@dataclass(frozen=True)
class ExtractorSpec:
    """Configuration for building a feature extractor.

    kind: 'gradient' (orientation-binned gradients + intensity),
    'random' (fixed-seed random convolutions), or 'file' (precomputed
    maps read through a manifest). Channel counts apply to 'random';
    'gradient' is fixed at 9 channels per level.
    """

    kind: str = "gradient"
    seed: int = 0
    lo_channels: int = 16
    hi_channels: int = 16
    manifest: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("gradient", "random", "file"):
            raise ValueError(f"unknown extractor kind {self.kind!r}")
        if self.lo_channels < 1 or self.hi_channels < 1:
            raise ValueError("channel counts must be >= 1")
        if self.kind == "file" and not self.manifest:
            raise ValueError("file extractor needs a manifest path")


def _box_pool(chans: np.ndarray, kernel: int, stride: int) -> np.ndarray:
    """Mean over kernel x kernel windows at the given stride (integral image)."""
    c, h, w = chans.shape
    ii = np.zeros((c, h + 1, w + 1), dtype=np.float64)
    ii[:, 1:, 1:] = np.cumsum(np.cumsum(chans, axis=1), axis=2)
    rows = np.arange(0, h - kernel + 1, stride)
    cols = np.arange(0, w - kernel + 1, stride)
    r0 = rows[:, None]
    c0 = cols[None, :]
    out = (
        ii[:, r0 + kernel, c0 + kernel]
        - ii[:, r0, c0 + kernel]
        - ii[:, r0 + kernel, c0]
        + ii[:, r0, c0]
    )
    return out / float(kernel * kernel)


class GradientChannelExtractor:
    """8 orientation-binned gradient-magnitude channels plus intensity.

    Orientations are unsigned (mod pi) with soft linear assignment to
    the two nearest bins, so rotating the input by one bin width (pi/8)
    cyclically shifts the orientation channels - the property the angle
    candidates of the tracker rely on.

    After pooling, each cell's orientation vector is normalized by its
    own energy (HOG-style) and the intensity channel is centered at
    mid-gray. Raw magnitudes would make the sliding inner product an
    energy detector: any high-contrast clutter window would outscore
    the true match. Both steps are pointwise per cell, so translation
    equivariance and the rotate-by-bin channel shift are preserved.
    """

    n_orient = 8
    channels = n_orient + 1
    norm_eps = 1e-2

    def embed(self, patch: np.ndarray, context=None) -> FeaturePair:
        gray = to_gray(patch)
        gy, gx = np.gradient(gray)
        mag = np.hypot(gx, gy)
        ang = np.mod(np.arctan2(gy, gx), math.pi)
        t = ang * (self.n_orient / math.pi)
        b0 = np.floor(t)
        frac = t - b0
        b0 = b0.astype(np.int64) % self.n_orient
        b1 = (b0 + 1) % self.n_orient
        # soft-assign each pixel to its two adjacent bins via flat scatter
        npix = gray.size
        pix = np.arange(npix, dtype=np.int64)
        chans = np.zeros((self.channels, npix), dtype=np.float64)
        flat = chans.reshape(-1)
        flat[b0.reshape(-1) * npix + pix] = (mag * (1.0 - frac)).reshape(-1)
        flat[b1.reshape(-1) * npix + pix] += mag.reshape(-1) * frac.reshape(-1)
        chans[self.n_orient] = gray.reshape(-1) - 0.5
        chans = chans.reshape((self.channels,) + gray.shape)
        lo = _box_pool(chans, _POOL_WINDOW, TOTAL_STRIDE)
        energy = np.sqrt(
            np.sum(lo[: self.n_orient] ** 2, axis=0, keepdims=True)
            + self.norm_eps**2
        )
        lo[: self.n_orient] /= energy
        hi = _box_pool(lo, 3, 1)
        return FeaturePair(
            FeatureMap(lo, float(TOTAL_STRIDE)), FeatureMap(hi, float(TOTAL_STRIDE))
        )


def _conv(x: np.ndarray, weights: np.ndarray, stride: int) -> np.ndarray:
    k = weights.shape[2]
    win = sliding_window_view(x, (k, k), axis=(1, 2))[:, ::stride, ::stride]
    return np.einsum("ihwkl,oikl->ohw", win, weights)


class RandomConvExtractor:
    """Three fixed-seed 11x11 stride-2 random convolutions (then a 3x3).

    Weights are Gaussian with 1/sqrt(fan_in) scale, drawn once from the
    seed; activations clamp at zero between stages. The final stage of
    each level stays linear so the output is roughly zero-mean - a
    clamped final layer would give all-nonnegative features, for which
    the sliding inner product degenerates into an energy detector.
    Operates on luminance so the weight tensors are input-independent.
    """

    _SPECS = ((11, 2), (11, 2), (11, 2))

    def __init__(self, seed: int = 0, lo_channels: int = 16, hi_channels: int = 16):
        rng = np.random.default_rng(seed)
        widths = [1, 12, 12, lo_channels]
        self.weights = []
        for (k, _), cin, cout in zip(self._SPECS, widths[:-1], widths[1:]):
            scale = 1.0 / math.sqrt(cin * k * k)
            self.weights.append(rng.normal(0.0, scale, size=(cout, cin, k, k)))
        scale = 1.0 / math.sqrt(lo_channels * 9)
        self.hi_weights = rng.normal(0.0, scale, size=(hi_channels, lo_channels, 3, 3))

    def embed(self, patch: np.ndarray, context=None) -> FeaturePair:
        x = to_gray(patch)[None, :, :]
        for i, ((k, stride), w) in enumerate(zip(self._SPECS, self.weights)):
            x = _conv(x, w, stride)
            if i < len(self.weights) - 1:
                x = np.maximum(x, 0.0)
        lo = x
        hi = _conv(np.maximum(lo, 0.0), self.hi_weights, 1)
        return FeaturePair(
            FeatureMap(lo, float(TOTAL_STRIDE)), FeatureMap(hi, float(TOTAL_STRIDE))
        )


_FMAP_MAGIC = b"FMAP"


def save_feature_map(path: str, fmap: FeatureMap) -> None:
    """Write the binary feature-map format (little-endian f32 payload)."""
    with open(path, "wb") as fh:
        fh.write(_FMAP_MAGIC)
        fh.write(struct.pack("<IIIf", fmap.channels, fmap.height, fmap.width, fmap.stride))
        fh.write(np.ascontiguousarray(fmap.data, dtype="<f4").tobytes())


def load_feature_map(path: str) -> FeatureMap:
    with open(path, "rb") as fh:
        head = fh.read(4)
        if head != _FMAP_MAGIC:
            raise ValueError(f"bad feature-map magic in {path}")
        c, h, w, stride = struct.unpack("<IIIf", fh.read(16))
        payload = fh.read(4 * c * h * w)
    if len(payload) != 4 * c * h * w:
        raise ValueError(f"truncated feature map {path}")
    data = np.frombuffer(payload, dtype="<f4").astype(np.float64).reshape(c, h, w)
    return FeatureMap(data, float(stride))


def _manifest_key(frame: int, s: float, a: float, level: str) -> tuple:
    return (int(frame), f"{float(s):.6f}", f"{float(a):.6f}", level)


def write_manifest(path: str, entries) -> None:
    """entries: iterable of (frame, s, a, level, relative_path)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["frame", "s", "a", "level", "path"])
        for frame, s, a, level, rel in entries:
            writer.writerow([int(frame), f"{float(s):.6f}", f"{float(a):.6f}", level, rel])


def load_manifest(path: str) -> dict:
    table = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["frame", "s", "a", "level", "path"]:
            raise ValueError(f"bad manifest header in {path}")
        for row in reader:
            if len(row) != 5:
                raise ValueError(f"bad manifest row {row!r} in {path}")
            frame, s, a, level, rel = row
            table[_manifest_key(int(frame), float(s), float(a), level)] = rel
    return table


class FileExtractor:
    """Serves precomputed feature maps keyed by (frame, s, a)."""

    def __init__(self, manifest_path: str):
        self.base = os.path.dirname(os.path.abspath(manifest_path))
        self.table = load_manifest(manifest_path)

    def embed(self, patch: np.ndarray, context=None) -> FeaturePair:
        if context is None:
            raise ValueError("file extractor needs a (frame, s, a) context")
        frame, s, a = context
        maps = {}
        for level in ("lo", "hi"):
            key = _manifest_key(frame, s, a, level)
            if key not in self.table:
                raise KeyError(f"manifest has no entry for frame={frame} s={s:.6f} a={a:.6f} {level}")
            maps[level] = load_feature_map(os.path.join(self.base, self.table[key]))
        return FeaturePair(maps["lo"], maps["hi"])


def build_extractor(spec: ExtractorSpec):
    if spec.kind == "gradient":
        return GradientChannelExtractor()
    if spec.kind == "random":
        return RandomConvExtractor(spec.seed, spec.lo_channels, spec.hi_channels)
    return FileExtractor(spec.manifest)


def embed(extractor, patch: np.ndarray, context=None) -> FeaturePair:
    """Embed a patch, enforcing the template/search geometry contract."""
    patch = np.asarray(patch, dtype=np.float64)
    hw = patch.shape[:2]
    if hw[0] != hw[1] or hw[0] not in _GEOMETRY:
        raise ValueError(
            f"patch must be square with side {TEMPLATE_SIZE} or {SEARCH_SIZE}, got {hw}"
        )
    if not np.all(np.isfinite(patch)):
        raise ValueError("patch contains non-finite values")
    pair = extractor.embed(patch, context=context)
    lo_cells, hi_cells = _GEOMETRY[hw[0]]
    if pair.lo.height != lo_cells or pair.lo.width != lo_cells:
        raise ValueError(f"lo level must be {lo_cells}x{lo_cells}, got {pair.lo.height}x{pair.lo.width}")
    if pair.hi.height != hi_cells or pair.hi.width != hi_cells:
        raise ValueError(f"hi level must be {hi_cells}x{hi_cells}, got {pair.hi.height}x{pair.hi.width}")
    return pair


def crop_feature(fmap: FeatureMap, center: tuple[float, float], out_hw: tuple[int, int]) -> FeatureMap:
    """Crop an out_hw cell window centered at `center`, edge-clamped."""
    oh, ow = int(out_hw[0]), int(out_hw[1])
    if oh > fmap.height or ow > fmap.width:
        raise ValueError(f"crop {oh}x{ow} exceeds map {fmap.height}x{fmap.width}")
    r0 = int(round(center[0] - (oh - 1) / 2.0))
    c0 = int(round(center[1] - (ow - 1) / 2.0))
    r0 = min(max(r0, 0), fmap.height - oh)
    c0 = min(max(c0, 0), fmap.width - ow)
    return FeatureMap(fmap.data[:, r0 : r0 + oh, c0 : c0 + ow].copy(), fmap.stride)
