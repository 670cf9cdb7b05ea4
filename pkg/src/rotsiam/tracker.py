"""Rotation-aware Siamese tracking loop.

Per frame the tracker schedules M scale candidates and N angle
candidates jointly: every non-identity candidate changes exactly one of
the two, so only M + N - 1 search patches are embedded instead of M * N.
Elongated targets additionally get a binary spatial mask that zeroes the
background-dominated border cells of the template, and the template
itself is an exponential moving average in feature space anchored to the
first frame.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .features import (
    ExtractorSpec,
    FeatureMap,
    FeaturePair,
    build_extractor,
    crop_feature,
    embed,
)
from .geometry import AxisBox, OrientedBox, context_side, extract_patch, wrap_angle
from .matching import (
    CandidateSpec,
    ResponseMap,
    apply_window,
    cross_correlate,
    fuse,
    normalize,
    normalize_joint,
    peak_to_displacement,
    select_peak,
)

__all__ = [
    "TrackerConfig",
    "TrackerState",
    "MaskSet",
    "Tracker",
    "candidate_set",
    "make_mask",
    "make_mask_set",
    "init",
    "track",
    "update_template",
    "load_config",
    "save_config",
]


@dataclass(frozen=True)
class TrackerConfig:
    """All tracker knobs; defaults reproduce the reference operating point."""

    M: int = 3                      # number of scale hypotheses (odd)
    N: int = 3                      # number of angle hypotheses (odd)
    scale_step: float = 1.0375      # geometric scale step between hypotheses
    angle_step: float = math.pi / 8
    scale_penalty: float = 0.973
    angle_penalty: float = 0.975
    th_r: float = 1.5               # aspect-ratio gate for spatial masking
    lambda_s: float = 0.5           # weight of the first-frame template
    lambda_u: float = 0.006         # per-frame moving-template learning rate
    window_weight: float = 0.176
    fusion_weights: tuple[float, float] = (0.5, 0.5)
    extractor: ExtractorSpec = field(default_factory=ExtractorSpec)
    mask_enabled: bool = True
    angle_enabled: bool = True
    update_enabled: bool = True
    mask_band_lo: int = 2           # masked columns/rows per side on the 8x8 level
    mask_band_hi: int = 1           # ... and on the 6x6 level
    semantic_levels: tuple[str, ...] = ("lo", "hi")
    joint_normalize: bool = True    # one affine rescale across all candidate maps
    penalize_before_window: bool = False
    response_upsample: int = 16
    template_size: int = 127
    search_size: int = 255

    def __post_init__(self) -> None:
        if self.M < 1 or self.M % 2 == 0 or self.N < 1 or self.N % 2 == 0:
            raise ValueError("M and N must be odd and >= 1")
        if not (self.scale_step > 0):
            raise ValueError("scale_step must be positive")
        for name in ("scale_penalty", "angle_penalty"):
            v = getattr(self, name)
            if not (0.0 < v <= 1.0):
                raise ValueError(f"{name} must lie in (0, 1]")
        if self.th_r < 1.0:
            raise ValueError("th_r must be >= 1")
        for name in ("lambda_s", "lambda_u", "window_weight"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        if abs(sum(self.fusion_weights) - 1.0) > 1e-8:
            raise ValueError("fusion_weights must sum to 1")
        if self.response_upsample < 1:
            raise ValueError("response_upsample must be >= 1")
        for lev in self.semantic_levels:
            if lev not in ("lo", "hi"):
                raise ValueError(f"unknown semantic level {lev!r}")
        if self.mask_band_lo < 0 or self.mask_band_hi < 0:
            raise ValueError("mask bands must be >= 0")


@dataclass
class MaskSet:
    """Binary per-level template masks plus their orientation tag."""

    lo: np.ndarray
    hi: np.ndarray
    orientation: str  # 'tall', 'wide', or 'none'


@dataclass
class TrackerState:
    """Everything the tracker carries between frames."""

    cfg: TrackerConfig
    extractor: object
    pose: OrientedBox
    first_template: FeaturePair
    moving_template: FeaturePair
    last_tracked: FeaturePair
    mask: MaskSet | None
    frame_index: int = 0


def candidate_set(cfg: TrackerConfig) -> list[CandidateSpec]:
    """The M + N - 1 joint scale/angle hypotheses.

    Scales step geometrically around 1, angles linearly around 0; the
    shared no-change candidate appears once with penalty 1. When angle
    search is disabled the schedule collapses to scale-only (N = 1).
    """
    n = cfg.N if cfg.angle_enabled else 1
    half_m = (cfg.M - 1) // 2
    half_n = (n - 1) // 2
    out = []
    for i in list(range(half_m, 0, -1)) + list(range(-1, -half_m - 1, -1)):
        out.append(CandidateSpec(cfg.scale_step**i, 0.0, cfg.scale_penalty))
    out.append(CandidateSpec(1.0, 0.0, 1.0))
    for j in list(range(half_n, 0, -1)) + list(range(-1, -half_n - 1, -1)):
        out.append(CandidateSpec(1.0, j * cfg.angle_step, cfg.angle_penalty))
    return out


def make_mask(size: int, orientation: str, band: int | None = None) -> np.ndarray:
    """Binary template mask for one feature level.

    'tall' zeroes `band` outermost columns on each side (the background
    left and right of an upright elongated target), 'wide' does the same
    for rows, 'none' is all ones. Default band: a quarter of the level
    size per side, at least one cell.
    """
    if orientation not in ("tall", "wide", "none"):
        raise ValueError(f"unknown mask orientation {orientation!r}")
    mask = np.ones((size, size), dtype=np.float64)
    if orientation == "none":
        return mask
    if band is None:
        band = max(1, size // 4)
    band = min(int(band), size // 2)
    if band > 0:
        if orientation == "tall":
            mask[:, :band] = 0.0
            mask[:, size - band :] = 0.0
        else:
            mask[:band, :] = 0.0
            mask[size - band :, :] = 0.0
    return mask


def _mask_orientation(box, th_r: float) -> str:
    if box.h / box.w > th_r:
        return "tall"
    if box.w / box.h > th_r:
        return "wide"
    return "none"


def make_mask_set(cfg: TrackerConfig, box, template: FeaturePair) -> MaskSet | None:
    """Gate and build the mask set; None when the target is not elongated."""
    orientation = _mask_orientation(box, cfg.th_r)
    if orientation == "none":
        return None
    lo = make_mask(template.lo.height, orientation, cfg.mask_band_lo)
    hi = make_mask(template.hi.height, orientation, cfg.mask_band_hi)
    return MaskSet(lo, hi, orientation)


def _apply_mask(template: FeaturePair, mask: MaskSet | None, levels) -> FeaturePair:
    if mask is None:
        return template
    lo, hi = template.lo, template.hi
    if "lo" in levels:
        lo = FeatureMap(lo.data * mask.lo[None, :, :], lo.stride)
    if "hi" in levels:
        hi = FeatureMap(hi.data * mask.hi[None, :, :], hi.stride)
    return FeaturePair(lo, hi)


def _blend(alpha: float, a: FeaturePair, b: FeaturePair) -> FeaturePair:
    """alpha * a + (1 - alpha) * b, per level."""
    lo = FeatureMap(alpha * a.lo.data + (1.0 - alpha) * b.lo.data, a.lo.stride)
    hi = FeatureMap(alpha * a.hi.data + (1.0 - alpha) * b.hi.data, a.hi.stride)
    return FeaturePair(lo, hi)


def _check_same_geometry(a: FeaturePair, b: FeaturePair) -> None:
    for la, lb in ((a.lo, b.lo), (a.hi, b.hi)):
        if la.data.shape != lb.data.shape:
            raise ValueError(f"feature geometry mismatch: {la.data.shape} vs {lb.data.shape}")


def update_template(state: TrackerState, tracked: FeaturePair) -> FeaturePair:
    """Advance the moving template and return the blended match template.

    Moving template: u_t = (1 - lambda_u) * u_{t-1} + lambda_u * tracked.
    Match template:  T_t = lambda_s * first + (1 - lambda_s) * u_t.
    With lambda_u = 0 the moving template never changes; feeding back the
    first template is a fixed point.
    """
    _check_same_geometry(state.first_template, tracked)
    cfg = state.cfg
    state.moving_template = _blend(cfg.lambda_u, tracked, state.moving_template)
    return _blend(cfg.lambda_s, state.first_template, state.moving_template)


def _copy_pair(pair: FeaturePair) -> FeaturePair:
    return FeaturePair(
        FeatureMap(pair.lo.data.copy(), pair.lo.stride),
        FeatureMap(pair.hi.data.copy(), pair.hi.stride),
    )


def init(cfg: TrackerConfig, frame: np.ndarray, box: AxisBox, extractor=None) -> TrackerState:
    """Initialize tracking state from the first frame and its target box."""
    frame = np.asarray(frame, dtype=np.float64)
    hgt, wid = frame.shape[:2]
    if box.w <= 1.0 or box.h <= 1.0:
        raise ValueError(f"degenerate init box: w={box.w} h={box.h}")
    w = min(box.w, float(wid))
    h = min(box.h, float(hgt))
    x = min(max(box.x, 0.0), wid - 1.0)
    y = min(max(box.y, 0.0), hgt - 1.0)
    pose = OrientedBox(x, y, w, h, 0.0)

    if extractor is None:
        extractor = build_extractor(cfg.extractor)
    side = context_side(pose)
    patch = extract_patch(frame, (pose.x, pose.y), side, 0.0, cfg.template_size)
    first = embed(extractor, patch, context=(0, 1.0, 0.0))
    mask = make_mask_set(cfg, pose, first) if cfg.mask_enabled else None
    return TrackerState(
        cfg=cfg,
        extractor=extractor,
        pose=pose,
        first_template=first,
        moving_template=_copy_pair(first),
        last_tracked=_copy_pair(first),
        mask=mask,
        frame_index=0,
    )


def _crop_tracked(feats: FeaturePair, cell: tuple[int, int], template: FeaturePair) -> FeaturePair:
    """Template-sized crop of the selected candidate's features at the peak.

    A correlation peak at cell (r, c) means the template window covers
    search cells r..r+t-1, so the matched window center is offset by
    (t - 1) / 2 from the peak cell on each level.
    """
    out = {}
    for level in ("lo", "hi"):
        tmap = getattr(template, level)
        smap = getattr(feats, level)
        ctr = (cell[0] + (tmap.height - 1) / 2.0, cell[1] + (tmap.width - 1) / 2.0)
        out[level] = crop_feature(smap, ctr, (tmap.height, tmap.width))
    return FeaturePair(out["lo"], out["hi"])


def track(state: TrackerState, frame: np.ndarray) -> tuple[TrackerState, OrientedBox]:
    """Track the target into the next frame; returns (state, new pose)."""
    cfg = state.cfg
    pose = state.pose
    frame = np.asarray(frame, dtype=np.float64)
    fill = frame.mean(axis=(0, 1)) if frame.ndim == 3 else float(frame.mean())

    if cfg.update_enabled:
        template = update_template(state, state.last_tracked)
    else:
        template = _blend(cfg.lambda_s, state.first_template, state.moving_template)
    template = _apply_mask(template, state.mask, cfg.semantic_levels)

    side = context_side(pose)
    search_side = side * cfg.search_size / cfg.template_size
    frame_idx = state.frame_index + 1

    entries = []
    for spec in candidate_set(cfg):
        patch = extract_patch(
            frame,
            (pose.x, pose.y),
            search_side * spec.s,
            pose.theta + spec.a,
            cfg.search_size,
            fill=fill,
        )
        feats = embed(state.extractor, patch, context=(frame_idx, spec.s, spec.a))
        resp_lo = cross_correlate(template.lo, feats.lo)
        resp_hi = cross_correlate(template.hi, feats.hi)
        fused = fuse([resp_lo, resp_hi], cfg.fusion_weights)
        entries.append((spec, fused, feats))

    maps = [e[1] for e in entries]
    if cfg.joint_normalize:
        maps = normalize_joint(maps)
    else:
        maps = [normalize(m) for m in maps]
    if cfg.penalize_before_window:
        maps = [
            ResponseMap(m.data * e[0].penalty, m.stride, m.upsample_factor)
            for e, m in zip(entries, maps)
        ]
    maps = [apply_window(m, cfg.window_weight) for m in maps]

    k, cell, _ = select_peak(
        [(e[0], m) for e, m in zip(entries, maps)],
        apply_penalty=not cfg.penalize_before_window,
    )
    spec_k, _, feats_k = entries[k]

    dx_p, dy_p = peak_to_displacement(cell, maps[k], cfg.response_upsample)
    ratio = search_side * spec_k.s / cfg.search_size
    theta_new = wrap_angle(pose.theta + spec_k.a)
    c, s = math.cos(theta_new), math.sin(theta_new)
    dx = (c * dx_p - s * dy_p) * ratio
    dy = (s * dx_p + c * dy_p) * ratio
    new_pose = OrientedBox(
        pose.x + dx, pose.y + dy, pose.w * spec_k.s, pose.h * spec_k.s, theta_new
    )

    state.last_tracked = _crop_tracked(feats_k, cell, state.first_template)
    state.pose = new_pose
    state.frame_index = frame_idx
    return state, new_pose


class Tracker:
    """Object-style wrapper: build once, init per sequence, update per frame."""

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg if cfg is not None else TrackerConfig()
        self.extractor = build_extractor(self.cfg.extractor)
        self.state: TrackerState | None = None

    def init(self, frame: np.ndarray, box: AxisBox) -> OrientedBox:
        self.state = init(self.cfg, frame, box, extractor=self.extractor)
        return self.state.pose

    def update(self, frame: np.ndarray) -> OrientedBox:
        if self.state is None:
            raise RuntimeError("tracker not initialized")
        self.state, pose = track(self.state, frame)
        return pose


# --- flat key-value config files -------------------------------------------

_EXTRACTOR_PREFIX = "extractor_"


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def save_config(cfg: TrackerConfig, path: str) -> None:
    """Write a flat `key value` config file; keys match the field names."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if f.name == "extractor":
            for ef in fields(value):
                ev = getattr(value, ef.name)
                if ev is None:
                    continue
                lines.append(f"{_EXTRACTOR_PREFIX}{ef.name} {_format_value(ev)}")
        else:
            lines.append(f"{f.name} {_format_value(value)}")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "1", "yes", "on"):
        return True
    if low in ("false", "0", "no", "off"):
        return False
    raise ValueError(f"cannot parse boolean from {text!r}")


def parse_overrides(pairs: dict) -> dict:
    """Convert string key/value pairs into TrackerConfig kwargs."""
    cfg_fields = {f.name: f for f in fields(TrackerConfig)}
    ext_fields = {f.name: f for f in fields(ExtractorSpec)}
    kwargs: dict = {}
    ext_kwargs: dict = {}
    for key, raw in pairs.items():
        raw = raw.strip()
        if key.startswith(_EXTRACTOR_PREFIX):
            name = key[len(_EXTRACTOR_PREFIX) :]
            if name not in ext_fields:
                raise ValueError(f"unknown config key {key!r}")
            if name == "kind" or name == "manifest":
                ext_kwargs[name] = raw
            else:
                ext_kwargs[name] = int(raw)
            continue
        if key not in cfg_fields:
            raise ValueError(f"unknown config key {key!r}")
        if key in ("M", "N", "mask_band_lo", "mask_band_hi", "response_upsample",
                   "template_size", "search_size"):
            kwargs[key] = int(raw)
        elif key in ("mask_enabled", "angle_enabled", "update_enabled",
                     "joint_normalize", "penalize_before_window"):
            kwargs[key] = _parse_bool(raw)
        elif key == "fusion_weights":
            kwargs[key] = tuple(float(v) for v in raw.split(","))
        elif key == "semantic_levels":
            kwargs[key] = tuple(v for v in raw.split(",") if v)
        else:
            kwargs[key] = float(raw)
    if ext_kwargs:
        kwargs["extractor"] = ExtractorSpec(**ext_kwargs)
    return kwargs


def load_config(path: str, base: TrackerConfig | None = None) -> TrackerConfig:
    """Read a flat `key value` config file on top of defaults (or `base`)."""
    pairs: dict = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            parts = text.split(None, 1)
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'key value', got {line!r}")
            pairs[parts[0]] = parts[1]
    kwargs = parse_overrides(pairs)
    if base is None:
        base = TrackerConfig()
    return replace(base, **kwargs)
