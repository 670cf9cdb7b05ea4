"""Boxes, rotated-patch sampling, and overlap measures.

Boxes are center-based: (x, y) is the box center in image coordinates
(x right, y down), sizes are in pixels. Oriented boxes carry an in-plane
rotation angle normalized to (-pi, pi]; positive angles rotate the box
x-axis toward the image y-axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "AxisBox",
    "OrientedBox",
    "wrap_angle",
    "context_side",
    "extract_patch",
    "rotated_iou",
    "center_distance",
    "min_area_rect",
]

_TWO_PI = 2.0 * math.pi


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    t = math.fmod(float(theta), _TWO_PI)
    if t <= -math.pi:
        t += _TWO_PI
    elif t > math.pi:
        t -= _TWO_PI
    return t


@dataclass(frozen=True)
class AxisBox:
    """Axis-aligned box: center (x, y) and positive size (w, h)."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w} h={self.h}")

    @property
    def aspect(self) -> float:
        """Elongation ratio max(w/h, h/w), always >= 1."""
        return max(self.w / self.h, self.h / self.w)

    def oriented(self) -> "OrientedBox":
        return OrientedBox(self.x, self.y, self.w, self.h, 0.0)


@dataclass(frozen=True)
class OrientedBox:
    """Box with an in-plane rotation angle, normalized to (-pi, pi]."""

    x: float
    y: float
    w: float
    h: float
    theta: float = 0.0

    def __post_init__(self) -> None:
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w} h={self.h}")
        object.__setattr__(self, "theta", wrap_angle(self.theta))

    @property
    def aspect(self) -> float:
        return max(self.w / self.h, self.h / self.w)

    def corners(self) -> np.ndarray:
        """Corner coordinates, shape (4, 2), in consistent winding order."""
        c, s = math.cos(self.theta), math.sin(self.theta)
        hw, hh = 0.5 * self.w, 0.5 * self.h
        local = np.array([[hw, hh], [-hw, hh], [-hw, -hh], [hw, -hh]])
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.array([self.x, self.y])


def context_side(box) -> float:
    """Side of the square context region around a target box.

    Pads each dimension by a quarter of the perimeter-ish term
    p = (w + h) / 4 and takes the geometric mean of the padded sides:
    side = sqrt((w + p) * (h + p)). A 100x100 box yields 150.
    """
    w, h = float(box.w), float(box.h)
    p = 0.25 * (w + h)
    return math.sqrt((w + p) * (h + p))


def _as_channels(img: np.ndarray) -> np.ndarray:
    if img.ndim == 2:
        return img[:, :, None]
    if img.ndim == 3 and img.shape[2] in (1, 3):
        return img
    raise ValueError(f"expected (H, W) or (H, W, 1|3) image, got shape {img.shape}")


def extract_patch(
    img: np.ndarray,
    center: tuple[float, float],
    side: float,
    theta: float,
    out_size: int,
    fill=None,
) -> np.ndarray:
    """Sample a rotated square patch with bilinear interpolation.

    The output pixel grid covers a square of side `side` centered at
    `center`, with its axes rotated by `theta` relative to the image.
    Output pixel (i, j) maps to the source point
        center + R(theta) @ ((j - (n-1)/2, i - (n-1)/2) * side / n).
    Content rotated by `theta` in the image therefore appears upright in
    the patch extracted with the same `theta`. Samples falling outside
    the image are filled with the image mean color (or `fill` if given).
    """
    img = np.asarray(img, dtype=np.float64)
    chan = _as_channels(img)
    hgt, wid = chan.shape[:2]
    n = int(out_size)
    if n < 1:
        raise ValueError("out_size must be >= 1")
    if not (side > 0):
        raise ValueError("side must be positive")

    if fill is None:
        fill = chan.reshape(-1, chan.shape[2]).mean(axis=0)
    fill = np.broadcast_to(np.atleast_1d(np.asarray(fill, dtype=np.float64)), (chan.shape[2],))

    offs = (np.arange(n, dtype=np.float64) - (n - 1) / 2.0) * (float(side) / n)
    u, v = np.meshgrid(offs, offs)  # u along patch x (columns), v along patch y (rows)
    c, s = math.cos(theta), math.sin(theta)
    xs = center[0] + c * u - s * v
    ys = center[1] + s * u + c * v

    inside = (xs >= 0.0) & (xs <= wid - 1.0) & (ys >= 0.0) & (ys <= hgt - 1.0)
    x0 = np.clip(np.floor(xs).astype(np.int64), 0, wid - 2) if wid > 1 else np.zeros_like(xs, np.int64)
    y0 = np.clip(np.floor(ys).astype(np.int64), 0, hgt - 2) if hgt > 1 else np.zeros_like(ys, np.int64)
    fx = np.clip(xs - x0, 0.0, 1.0)
    fy = np.clip(ys - y0, 0.0, 1.0)
    x1 = np.minimum(x0 + 1, wid - 1)
    y1 = np.minimum(y0 + 1, hgt - 1)

    w00 = (1.0 - fy) * (1.0 - fx)
    w01 = (1.0 - fy) * fx
    w10 = fy * (1.0 - fx)
    w11 = fy * fx
    out = (
        chan[y0, x0] * w00[:, :, None]
        + chan[y0, x1] * w01[:, :, None]
        + chan[y1, x0] * w10[:, :, None]
        + chan[y1, x1] * w11[:, :, None]
    )
    out = np.where(inside[:, :, None], out, fill[None, None, :])
    if img.ndim == 2:
        return out[:, :, 0]
    return out


def _clip_polygon(subject: list, cp1: np.ndarray, cp2: np.ndarray) -> list:
    """Clip a polygon against one directed edge (Sutherland-Hodgman step)."""
    ex, ey = cp2[0] - cp1[0], cp2[1] - cp1[1]

    def inside(p):
        return ex * (p[1] - cp1[1]) - ey * (p[0] - cp1[0]) >= -1e-12

    def intersect(p, q):
        dcx, dcy = cp1[0] - cp2[0], cp1[1] - cp2[1]
        dpx, dpy = p[0] - q[0], p[1] - q[1]
        n1 = cp1[0] * cp2[1] - cp1[1] * cp2[0]
        n2 = p[0] * q[1] - p[1] * q[0]
        den = dcx * dpy - dcy * dpx
        return ((n1 * dpx - n2 * dcx) / den, (n1 * dpy - n2 * dcy) / den)

    result = []
    for i, cur in enumerate(subject):
        prev = subject[i - 1]
        if inside(cur):
            if not inside(prev):
                result.append(intersect(prev, cur))
            result.append(tuple(cur))
        elif inside(prev):
            result.append(intersect(prev, cur))
    return result


def _polygon_area(pts) -> float:
    """Shoelace area; sign follows winding, caller takes abs."""
    if len(pts) < 3:
        return 0.0
    a = 0.0
    for i in range(len(pts)):
        x1, y1 = pts[i - 1]
        x2, y2 = pts[i]
        a += x1 * y2 - x2 * y1
    return 0.5 * a


def _ccw(pts: np.ndarray) -> list:
    seq = [tuple(p) for p in pts]
    if _polygon_area(seq) < 0:
        seq.reverse()
    return seq


def rotated_iou(a: OrientedBox, b: OrientedBox) -> float:
    """Intersection-over-union of two oriented boxes via polygon clipping."""
    pa = _ccw(a.corners())
    pb = _ccw(b.corners())
    poly = pa
    for i in range(4):
        poly = _clip_polygon(poly, np.asarray(pb[i - 1]), np.asarray(pb[i]))
        if not poly:
            return 0.0
    inter = abs(_polygon_area(poly))
    union = a.w * a.h + b.w * b.h - inter
    if union <= 0:
        return 0.0
    iou = inter / union
    # clipping a polygon by its own edges loses ~1e-15; snap so that
    # complete overlap is detectable downstream (success-curve top bin)
    if iou > 1.0 - 1e-9:
        return 1.0
    return float(max(iou, 0.0))


def center_distance(a, b) -> float:
    """Euclidean distance between two box centers."""
    return math.hypot(a.x - b.x, a.y - b.y)


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone-chain convex hull, counter-clockwise, no duplicate endpoint."""
    pts = sorted({(float(p[0]), float(p[1])) for p in points})
    if len(pts) <= 2:
        return np.asarray(pts, dtype=np.float64)

    def cross(o, p, q):
        return (p[0] - o[0]) * (q[1] - o[1]) - (p[1] - o[1]) * (q[0] - o[0])

    lower = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return np.asarray(lower[:-1] + upper[:-1], dtype=np.float64)


def min_area_rect(points: np.ndarray) -> OrientedBox:
    """Minimum-area enclosing rotated rectangle of a point set.

    Rotating-calipers over the convex hull: the optimal rectangle shares
    an edge direction with the hull. The returned angle is reduced to
    (-pi/2, pi/2]; width runs along the rectangle edge that defines the
    angle. Degenerate (collinear) inputs get a thin positive extent.
    """
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    hull = _convex_hull(points)
    if len(hull) < 3:
        lo = points.min(axis=0)
        hi = points.max(axis=0)
        size = np.maximum(hi - lo, 1e-9)
        ctr = 0.5 * (lo + hi)
        return OrientedBox(ctr[0], ctr[1], size[0], size[1], 0.0)

    best = None
    m = len(hull)
    for i in range(m):
        e = hull[(i + 1) % m] - hull[i]
        norm = math.hypot(e[0], e[1])
        if norm < 1e-12:
            continue
        theta = math.atan2(e[1], e[0])
        c, s = math.cos(-theta), math.sin(-theta)
        rot = np.array([[c, -s], [s, c]])
        proj = hull @ rot.T
        lo = proj.min(axis=0)
        hi = proj.max(axis=0)
        area = (hi[0] - lo[0]) * (hi[1] - lo[1])
        if best is None or area < best[0] - 1e-12:
            best = (area, theta, lo, hi)
    area, theta, lo, hi = best
    mid = 0.5 * (lo + hi)
    c, s = math.cos(theta), math.sin(theta)
    cx = c * mid[0] - s * mid[1]
    cy = s * mid[0] + c * mid[1]
    w = max(hi[0] - lo[0], 1e-9)
    h = max(hi[1] - lo[1], 1e-9)
    theta = wrap_angle(theta)
    if theta > 0.5 * math.pi:
        theta -= math.pi
    elif theta <= -0.5 * math.pi:
        theta += math.pi
    return OrientedBox(cx, cy, w, h, theta)
