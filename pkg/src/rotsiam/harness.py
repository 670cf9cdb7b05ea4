"""Synthetic sequences with exact ground truth, plus the ablation runner.

A motion script drives a textured rectangle over a canvas: per frame
transition it translates by (dx, dy), scales by ds, and rotates by
dtheta. Ground truth is the analytic pose, so metric code can be
validated against known answers. Rendering is fully deterministic
given the seeds.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, fields, replace

import numpy as np

from .evaluation import (
    RunTrace,
    SequenceRecord,
    otb_run,
    summarize,
    vot_run,
    write_trace_csv,
)
from .geometry import OrientedBox
from .imageio import save_image
from .matching import resample_bicubic
from .tracker import Tracker, TrackerConfig

__all__ = [
    "ScriptError",
    "MotionScript",
    "load_script",
    "save_script",
    "synth_sequence",
    "write_sequence",
    "ablation_grid",
    "run_ablation",
    "write_ablation_csv",
    "MAX_DS",
    "MAX_DTHETA",
]

MAX_DS = 0.05          # |ds - 1| limit per frame transition
MAX_DTHETA = math.pi / 8

_BACKGROUNDS = ("flat", "textured", "distractor")


class ScriptError(ValueError):
    """Raised when a motion script is malformed or physically invalid."""


@dataclass
class MotionScript:
    """Target trajectory plus scene layout for one synthetic sequence.

    steps holds one (dx, dy, ds, dtheta) row per frame transition; a
    single row is broadcast over the whole sequence. Backgrounds:
    'flat' is uniform bg_level gray, 'textured' is a smooth random
    texture, 'distractor' is the textured background plus a second,
    differently-textured static rectangle. Distractor offsets are
    relative to the target start position and must keep its center at
    least two target widths away on every frame.
    """

    steps: np.ndarray = field(
        default_factory=lambda: np.array([[0.0, 0.0, 1.0, 0.0]])
    )
    background: str = "flat"
    texture_seed: int = 0
    noise_sigma: float = 0.0
    target_w: float = 48.0
    target_h: float = 60.0
    target_contrast: float = 1.0
    start_x: float | None = None
    start_y: float | None = None
    canvas_w: int = 320
    canvas_h: int = 320
    n_frames: int = 30
    bg_level: float = 0.5
    distractor_dx: float | None = None
    distractor_dy: float = 0.0
    distractor_w: float = 28.0
    distractor_h: float = 56.0
    distractor_seed: int = 101

    def __post_init__(self) -> None:
        self.steps = np.atleast_2d(np.asarray(self.steps, dtype=np.float64))
        if self.steps.shape[1] != 4:
            raise ScriptError(f"steps must have 4 columns, got {self.steps.shape}")
        if self.background not in _BACKGROUNDS:
            raise ScriptError(f"unknown background {self.background!r}")
        if self.target_w <= 1 or self.target_h <= 1:
            raise ScriptError("target size must exceed 1 px")
        if self.noise_sigma < 0:
            raise ScriptError("noise_sigma must be >= 0")
        if not 0.0 < self.target_contrast <= 1.0:
            raise ScriptError("target_contrast must be in (0, 1]")
        ds = self.steps[:, 2]
        if np.any(np.abs(ds - 1.0) > MAX_DS + 1e-12):
            raise ScriptError(f"|ds - 1| must be <= {MAX_DS}")
        if np.any(np.abs(self.steps[:, 3]) > MAX_DTHETA + 1e-12):
            raise ScriptError(f"|dtheta| must be <= pi/8")

    def poses(self, n_frames: int, canvas: tuple[int, int]) -> list[OrientedBox]:
        """Integrate the steps into per-frame poses (frame 0 = start pose)."""
        cw, ch = canvas
        x = self.start_x if self.start_x is not None else cw / 2.0
        y = self.start_y if self.start_y is not None else ch / 2.0
        w, h, theta = self.target_w, self.target_h, 0.0
        steps = self.steps
        if len(steps) == 1 and n_frames > 2:
            steps = np.repeat(steps, n_frames - 1, axis=0)
        if len(steps) < n_frames - 1:
            raise ScriptError(
                f"need {n_frames - 1} step rows (or exactly 1), got {len(steps)}"
            )
        out = [OrientedBox(x, y, w, h, theta)]
        for t in range(n_frames - 1):
            dx, dy, ds, dth = steps[t]
            x += dx
            y += dy
            w *= ds
            h *= ds
            theta += dth
            out.append(OrientedBox(x, y, w, h, theta))
        return out


_SCRIPT_FLOAT_KEYS = (
    "noise_sigma", "target_w", "target_h", "target_contrast",
    "start_x", "start_y", "bg_level",
    "distractor_dx", "distractor_dy", "distractor_w", "distractor_h",
)
_SCRIPT_INT_KEYS = ("texture_seed", "canvas_w", "canvas_h", "n_frames", "distractor_seed")


def load_script(path: str) -> MotionScript:
    """Parse a script file: flat `key value` lines then a `frames:` CSV block."""
    kwargs: dict = {}
    rows: list = []
    in_frames = False
    saw_header = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if not in_frames:
                if line == "frames:":
                    in_frames = True
                    continue
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise ScriptError(f"{path}:{lineno}: expected 'key value'")
                key, val = parts
                if key == "background":
                    kwargs[key] = val
                elif key in _SCRIPT_INT_KEYS:
                    kwargs[key] = int(val)
                elif key in _SCRIPT_FLOAT_KEYS:
                    kwargs[key] = float(val)
                else:
                    raise ScriptError(f"{path}:{lineno}: unknown script key {key!r}")
            else:
                if not saw_header:
                    if [c.strip() for c in line.split(",")] != ["dx", "dy", "ds", "dtheta"]:
                        raise ScriptError(f"{path}:{lineno}: frames header must be dx,dy,ds,dtheta")
                    saw_header = True
                    continue
                vals = [v.strip() for v in line.split(",")]
                if len(vals) != 4:
                    raise ScriptError(f"{path}:{lineno}: expected 4 values per frame row")
                try:
                    rows.append([float(v) for v in vals])
                except ValueError as exc:
                    raise ScriptError(f"{path}:{lineno}: {exc}") from None
    if rows:
        kwargs["steps"] = np.asarray(rows)
    try:
        return MotionScript(**kwargs)
    except TypeError as exc:
        raise ScriptError(str(exc)) from None


def save_script(script: MotionScript, path: str) -> None:
    lines = []
    for f in fields(script):
        if f.name == "steps":
            continue
        val = getattr(script, f.name)
        if val is None:
            continue
        lines.append(f"{f.name} {val}")
    lines.append("frames:")
    lines.append("dx,dy,ds,dtheta")
    for row in script.steps:
        lines.append(",".join(f"{v:.6f}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _smooth_texture(rng: np.random.Generator, hw: tuple[int, int], cells: int = 10) -> np.ndarray:
    """Band-limited random RGB texture in [0.05, 0.95] with strong gradients."""
    h, w = hw
    out = np.zeros((h, w, 3))
    for c in range(3):
        low = rng.random((cells, cells))
        up = resample_bicubic(low, (h, w))
        lo, hi = up.min(), up.max()
        if hi - lo < 1e-9:
            up = np.full((h, w), 0.5)
        else:
            up = (up - lo) / (hi - lo)
        out[:, :, c] = 0.05 + 0.9 * up
    return out


def _composite_rect(frame: np.ndarray, pose: OrientedBox, texture: np.ndarray) -> None:
    """Alpha-composite a textured oriented rectangle into the frame (inplace)."""
    hgt, wid = frame.shape[:2]
    radius = 0.5 * math.hypot(pose.w, pose.h) + 2.0
    r0 = max(int(pose.y - radius), 0)
    r1 = min(int(pose.y + radius) + 2, hgt)
    c0 = max(int(pose.x - radius), 0)
    c1 = min(int(pose.x + radius) + 2, wid)
    if r0 >= r1 or c0 >= c1:
        return
    ys, xs = np.mgrid[r0:r1, c0:c1]
    dx = xs - pose.x
    dy = ys - pose.y
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    u = c * dx + s * dy
    v = -s * dx + c * dy
    alpha = np.clip(np.minimum(pose.w / 2.0 - np.abs(u), pose.h / 2.0 - np.abs(v)) + 0.5, 0.0, 1.0)
    if not np.any(alpha > 0):
        return
    th, tw = texture.shape[:2]
    tx = np.clip((u / pose.w + 0.5) * (tw - 1), 0.0, tw - 1.0)
    ty = np.clip((v / pose.h + 0.5) * (th - 1), 0.0, th - 1.0)
    x0 = np.clip(np.floor(tx).astype(np.int64), 0, tw - 2)
    y0 = np.clip(np.floor(ty).astype(np.int64), 0, th - 2)
    fx = tx - x0
    fy = ty - y0
    sample = (
        texture[y0, x0] * ((1 - fy) * (1 - fx))[:, :, None]
        + texture[y0, x0 + 1] * ((1 - fy) * fx)[:, :, None]
        + texture[y0 + 1, x0] * (fy * (1 - fx))[:, :, None]
        + texture[y0 + 1, x0 + 1] * (fy * fx)[:, :, None]
    )
    region = frame[r0:r1, c0:c1]
    frame[r0:r1, c0:c1] = region * (1 - alpha)[:, :, None] + sample * alpha[:, :, None]


def synth_sequence(
    script: MotionScript,
    n_frames: int | None = None,
    canvas: tuple[int, int] | None = None,
    seed: int = 0,
    name: str = "synthetic",
) -> SequenceRecord:
    """Render a synthetic sequence; ground truth is exact by construction.

    Raises ScriptError when any ground-truth corner leaves the canvas or
    when a distractor violates the minimum-separation rule (center
    distance >= 2 target widths at every frame).
    """
    if n_frames is None:
        n_frames = script.n_frames
    if canvas is None:
        canvas = (script.canvas_w, script.canvas_h)
    if n_frames < 1:
        raise ScriptError("need at least one frame")
    cw, ch = int(canvas[0]), int(canvas[1])
    poses = script.poses(n_frames, (cw, ch))

    for t, pose in enumerate(poses):
        corners = pose.corners()
        if (corners[:, 0].min() < 0 or corners[:, 0].max() > cw - 1
                or corners[:, 1].min() < 0 or corners[:, 1].max() > ch - 1):
            raise ScriptError(f"target leaves the canvas at frame {t}")

    tex_rng = np.random.default_rng([script.texture_seed, seed, 0])
    target_tex = _smooth_texture(tex_rng, (96, 96))
    if script.target_contrast < 1.0:
        target_tex = 0.5 + script.target_contrast * (target_tex - 0.5)

    if script.background == "flat":
        background = np.full((ch, cw, 3), float(script.bg_level))
    else:
        bg_rng = np.random.default_rng([script.texture_seed, seed, 1])
        background = _smooth_texture(bg_rng, (ch, cw), cells=14)

    if script.background == "distractor":
        ddx = script.distractor_dx
        if ddx is None:
            ddx = 2.2 * script.target_w
        dist_pose = OrientedBox(
            poses[0].x + ddx, poses[0].y + script.distractor_dy,
            script.distractor_w, script.distractor_h, 0.0,
        )
        min_sep = 2.0 * script.target_w
        for t, pose in enumerate(poses):
            sep = math.hypot(pose.x - dist_pose.x, pose.y - dist_pose.y)
            if sep < min_sep - 1e-9:
                raise ScriptError(
                    f"distractor closer than two target widths at frame {t} ({sep:.1f} < {min_sep:.1f})"
                )
        dist_rng = np.random.default_rng([script.distractor_seed, seed, 2])
        dist_tex = _smooth_texture(dist_rng, (96, 96), cells=8)
        _composite_rect(background, dist_pose, dist_tex)

    frames = []
    for t, pose in enumerate(poses):
        frame = background.copy()
        _composite_rect(frame, pose, target_tex)
        if script.noise_sigma > 0:
            noise_rng = np.random.default_rng([script.texture_seed, seed, 3, t])
            frame = frame + noise_rng.normal(0.0, script.noise_sigma, frame.shape)
        frames.append(np.clip(frame, 0.0, 1.0))
    return SequenceRecord(name, frames, poses)


def write_sequence(seq: SequenceRecord, out_dir: str, fmt: str = "ppm") -> None:
    """Write frames as %08d.<fmt> plus a polygon groundtruth.txt."""
    if fmt not in ("ppm", "png"):
        raise ValueError(f"unsupported frame format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    for i in range(len(seq)):
        save_image(os.path.join(out_dir, f"{i:08d}.{fmt}"), seq.frame(i))
    lines = []
    for box in seq.boxes:
        pts = box.corners().reshape(-1)
        lines.append(",".join(f"{v:.4f}" for v in pts))
    with open(os.path.join(out_dir, "groundtruth.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


# --- ablation ----------------------------------------------------------------


def ablation_grid(base: TrackerConfig | None = None) -> list[tuple[str, TrackerConfig]]:
    """The full 2^3 angle/mask/update toggle grid, deterministic order."""
    if base is None:
        base = TrackerConfig()
    rows = []
    for angle in (False, True):
        for mask in (False, True):
            for update in (False, True):
                name = f"angle={int(angle)} mask={int(mask)} update={int(update)}"
                cfg = replace(
                    base,
                    angle_enabled=angle,
                    mask_enabled=mask,
                    update_enabled=update,
                )
                rows.append((name, cfg))
    return rows


def run_ablation(configs, seqs, eao_interval=(10, 50)) -> list[dict]:
    """Evaluate each named config over the sequences, both protocols.

    Returns one row per config with no-reset AUC/precision and
    reset-protocol accuracy/robustness/expected-overlap columns.
    """
    rows = []
    seqs = list(seqs)
    for name, cfg in configs:
        tracker = Tracker(cfg)
        plain = [otb_run(tracker, seq) for seq in seqs]
        reset = [vot_run(tracker, seq) for seq in seqs]
        otb = summarize(plain, "otb")
        vot = summarize(reset, "vot", eao_interval)
        rows.append(
            {
                "name": name,
                "angle": int(cfg.angle_enabled),
                "mask": int(cfg.mask_enabled),
                "update": int(cfg.update_enabled),
                "auc": otb["auc"],
                "precision_20": otb["precision_20"],
                "accuracy": vot["accuracy"],
                "robustness": vot["robustness"],
                "eao": vot["eao"],
            }
        )
    return rows


_ABLATION_COLUMNS = (
    "name", "angle", "mask", "update", "auc", "precision_20", "accuracy", "robustness", "eao",
)


def write_ablation_csv(path: str, rows: list[dict]) -> None:
    lines = [",".join(_ABLATION_COLUMNS)]
    for row in rows:
        cells = []
        for col in _ABLATION_COLUMNS:
            v = row[col]
            if isinstance(v, float):
                cells.append(f"{v:.6f}")
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
