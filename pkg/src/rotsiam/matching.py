"""Cross-correlation response maps and peak selection.

Pipeline per tracked frame: correlate template against each candidate's
search features, fuse the two levels, normalize, blend with a cosine
window, then pick the best penalized peak across candidates and refine
it to sub-cell precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import fft as _fft
from scipy import ndimage as _ndi

from .features import FeatureMap

__all__ = [
    "ResponseMap",
    "CandidateSpec",
    "cross_correlate",
    "cross_correlate_fft",
    "normalize",
    "normalize_joint",
    "hann_window",
    "apply_window",
    "resample_bicubic",
    "fuse",
    "select_peak",
    "refine_peak",
    "peak_to_displacement",
]


@dataclass
class ResponseMap:
    """2-D correlation response; stride is px per cell in patch coords."""

    data: np.ndarray
    stride: float
    upsample_factor: int = 1

    def __post_init__(self) -> None:
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.ndim != 2:
            raise ValueError(f"response must be 2-D, got shape {self.data.shape}")
        if not (self.stride > 0):
            raise ValueError("stride must be positive")
        if self.upsample_factor < 1:
            raise ValueError("upsample_factor must be >= 1")

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class CandidateSpec:
    """One (scale, angle) hypothesis; at most one of the two is active."""

    s: float = 1.0
    a: float = 0.0
    penalty: float = 1.0

    def __post_init__(self) -> None:
        if not (self.s > 0):
            raise ValueError("scale must be positive")
        if self.s != 1.0 and self.a != 0.0:
            raise ValueError("joint scale+angle candidates are not allowed")
        if not (0.0 < self.penalty <= 1.0):
            raise ValueError("penalty must lie in (0, 1]")
        if self.s == 1.0 and self.a == 0.0 and self.penalty != 1.0:
            raise ValueError("the no-change candidate must have penalty 1")


def _check_corr_args(template: FeatureMap, search: FeatureMap) -> None:
    if template.channels != search.channels:
        raise ValueError(
            f"channel mismatch: template {template.channels} vs search {search.channels}"
        )
    if template.stride != search.stride:
        raise ValueError("template and search strides differ")
    if template.height > search.height or template.width > search.width:
        raise ValueError("template larger than search region")


def cross_correlate(template: FeatureMap, search: FeatureMap) -> ResponseMap:
    """Valid-mode sliding inner product over all channels.

    Output size is (Hs - Ht + 1) x (Ws - Wt + 1); entry (i, j) is the
    inner product of the template with the search window whose top-left
    cell is (i, j).
    """
    _check_corr_args(template, search)
    win = sliding_window_view(
        search.data, (template.height, template.width), axis=(1, 2)
    )
    out = np.einsum("chwkl,ckl->hw", win, template.data)
    return ResponseMap(out, search.stride)


def cross_correlate_fft(template: FeatureMap, search: FeatureMap) -> ResponseMap:
    """FFT implementation of the same valid-mode correlation."""
    _check_corr_args(template, search)
    hs, ws = search.height, search.width
    ht, wt = template.height, template.width
    fa = _fft.rfft2(search.data, s=(hs, ws), axes=(1, 2))
    fb = _fft.rfft2(template.data[:, ::-1, ::-1], s=(hs, ws), axes=(1, 2))
    full = _fft.irfft2(fa * fb, s=(hs, ws), axes=(1, 2)).sum(axis=0)
    out = full[ht - 1 : hs, wt - 1 : ws]
    return ResponseMap(np.ascontiguousarray(out), search.stride)


def normalize(resp: ResponseMap) -> ResponseMap:
    """Affine rescale to [0, 1] (min -> 0, max -> 1); constant -> zeros."""
    lo = float(resp.data.min())
    hi = float(resp.data.max())
    if hi - lo <= 0.0:
        data = np.zeros_like(resp.data)
    else:
        data = (resp.data - lo) / (hi - lo)
    return ResponseMap(data, resp.stride, resp.upsample_factor)


def normalize_joint(maps: list) -> list:
    """Apply one shared [0, 1] affine rescale across several maps.

    Using the global min/max keeps the relative peak heights between
    candidate maps intact, which is what the cross-candidate argmax
    needs; per-map rescaling would erase that signal.
    """
    if not maps:
        return []
    lo = min(float(m.data.min()) for m in maps)
    hi = max(float(m.data.max()) for m in maps)
    if hi - lo <= 0.0:
        return [ResponseMap(np.zeros_like(m.data), m.stride, m.upsample_factor) for m in maps]
    return [
        ResponseMap((m.data - lo) / (hi - lo), m.stride, m.upsample_factor) for m in maps
    ]


def hann_window(shape: tuple[int, int]) -> np.ndarray:
    """Peak-normalized outer-product Hann window."""
    win = np.outer(np.hanning(shape[0]), np.hanning(shape[1]))
    peak = win.max()
    if peak <= 0.0:
        return np.ones(shape, dtype=np.float64)
    return win / peak


def apply_window(resp: ResponseMap, weight: float) -> ResponseMap:
    """Blend with the cosine window: (1 - w) * r + w * hann."""
    if not (0.0 <= weight <= 1.0):
        raise ValueError("window weight must lie in [0, 1]")
    win = hann_window(resp.data.shape)
    return ResponseMap(
        (1.0 - weight) * resp.data + weight * win, resp.stride, resp.upsample_factor
    )


def resample_bicubic(data: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Corner-aligned bicubic (cubic-spline) resampling of a 2-D array."""
    data = np.asarray(data, dtype=np.float64)
    oh, ow = int(out_hw[0]), int(out_hw[1])
    ih, iw = data.shape
    if (oh, ow) == (ih, iw):
        return data.copy()
    rows = np.linspace(0.0, ih - 1.0, oh) if oh > 1 else np.array([0.5 * (ih - 1)])
    cols = np.linspace(0.0, iw - 1.0, ow) if ow > 1 else np.array([0.5 * (iw - 1)])
    grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
    return _ndi.map_coordinates(
        data, [grid_r, grid_c], order=3, mode="mirror", prefilter=True
    )


def fuse(maps: list, weights) -> ResponseMap:
    """Weighted sum of response maps, resampled to a common grid.

    Weights must sum to 1. Maps of differing sizes are bicubically
    resampled (corner-aligned) onto the largest grid; the inputs are
    assumed to cover the same displacement extent, as the two feature
    levels of one search patch do.
    """
    if not maps:
        raise ValueError("fuse needs at least one map")
    weights = [float(w) for w in weights]
    if len(weights) != len(maps):
        raise ValueError("one weight per map required")
    if abs(sum(weights) - 1.0) > 1e-8:
        raise ValueError(f"fusion weights must sum to 1, got {sum(weights)}")
    target = max(((m.height, m.width) for m in maps), key=lambda s: s[0] * s[1])
    ref = next(m for m in maps if (m.height, m.width) == target)
    acc = np.zeros(target, dtype=np.float64)
    for m, w in zip(maps, weights):
        acc += w * resample_bicubic(m.data, target)
    return ResponseMap(acc, ref.stride, ref.upsample_factor)


def select_peak(candidates, apply_penalty: bool = True):
    """Pick the best penalized peak across candidate maps.

    `candidates` is a sequence of (CandidateSpec, ResponseMap). Returns
    (index, (row, col), score) maximizing penalty * map value. Exact
    score ties are broken toward lower |angle|, then scale closest to 1,
    then row-major peak position, then candidate order.
    """
    best = None
    for idx, (spec, resp) in enumerate(candidates):
        flat = int(np.argmax(resp.data))
        cell = divmod(flat, resp.width)
        score = float(resp.data[cell])
        if apply_penalty:
            score *= spec.penalty
        key = (-score, abs(spec.a), abs(spec.s - 1.0), cell[0], cell[1], idx)
        if best is None or key < best[0]:
            best = (key, idx, cell, score)
    if best is None:
        raise ValueError("select_peak needs at least one candidate")
    return best[1], best[2], best[3]


def refine_peak(resp: ResponseMap, cell: tuple[int, int], upsample: int) -> tuple[float, float]:
    """Sub-cell peak via bicubic upsampling of the 3x3 neighborhood.

    Evaluates the interpolating cubic spline on a grid of pitch
    1/upsample within +-1.5 cells of the integer peak and returns the
    fractional (row, col) of the maximum. upsample=1 reproduces the
    integer peak.
    """
    if upsample < 1:
        raise ValueError("upsample must be >= 1")
    data = resp.data
    if upsample == 1 or data.size == 1:
        return float(cell[0]), float(cell[1])
    q = int(round(1.5 * upsample))
    offs = np.arange(-q, q + 1, dtype=np.float64) / upsample
    rows = np.clip(cell[0] + offs, 0.0, data.shape[0] - 1.0)
    cols = np.clip(cell[1] + offs, 0.0, data.shape[1] - 1.0)
    grid_r, grid_c = np.meshgrid(rows, cols, indexing="ij")
    coeffs = _ndi.spline_filter(data, order=3, mode="mirror")
    vals = _ndi.map_coordinates(
        coeffs, [grid_r, grid_c], order=3, mode="mirror", prefilter=False
    )
    flat = int(np.argmax(vals))
    i, j = divmod(flat, vals.shape[1])
    return float(rows[i]), float(cols[j])


def peak_to_displacement(
    cell: tuple[int, int], resp: ResponseMap, upsample: int = 1
) -> tuple[float, float]:
    """Convert a response peak into a (dx, dy) displacement in patch px.

    The map center corresponds to zero displacement; each cell is
    resp.stride px (divided by any prior upsampling). The peak is first
    refined to sub-cell precision with `refine_peak`.
    """
    row, col = refine_peak(resp, cell, upsample)
    step = resp.stride / resp.upsample_factor
    dy = (row - (resp.height - 1) / 2.0) * step
    dx = (col - (resp.width - 1) / 2.0) * step
    return dx, dy
