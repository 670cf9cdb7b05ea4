"""Tracking evaluation: no-reset success/precision metrics and the
reset-based accuracy/robustness/expected-overlap protocol.

Reset protocol conventions (documented here because downstream numbers
depend on them):

  * a tracked frame with IoU exactly 0 is a failure;
  * after a failure, 5 frames are skipped, and tracking re-initializes
    from ground truth on the following frame (failure at t -> re-init at
    t + 6);
  * initialization frames are never scored;
  * accuracy averages IoU over tracked frames that are more than 10
    frames past the most recent (re)initialization and are not failure
    frames; an empty set yields 0;
  * expected-overlap curves use every tracked frame of a segment
    (including the burn-in), zero-padded past a failure.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .geometry import AxisBox, OrientedBox, center_distance, min_area_rect, rotated_iou
from .imageio import load_image

__all__ = [
    "SequenceRecord",
    "RunTrace",
    "SKIP_FRAMES",
    "BURN_IN",
    "DEFAULT_EAO_INTERVAL",
    "success_curve",
    "auc",
    "precision_at",
    "otb_run",
    "vot_run",
    "accuracy",
    "robustness",
    "robustness_per_frame",
    "eao",
    "aspect_split",
    "load_otb_groundtruth",
    "load_vot_groundtruth",
    "load_groundtruth",
    "load_sequence",
    "write_trace_csv",
    "read_trace_csv",
    "summarize",
    "write_summary_json",
]

SKIP_FRAMES = 5
BURN_IN = 10
DEFAULT_EAO_INTERVAL = (108, 371)

_THRESHOLDS = np.linspace(0.0, 1.0, 101)


@dataclass
class SequenceRecord:
    """A sequence: ordered frames (paths or arrays) plus per-frame boxes."""

    name: str
    frames: list
    boxes: list

    def __len__(self) -> int:
        return len(self.frames)

    def frame(self, i: int) -> np.ndarray:
        item = self.frames[i]
        if isinstance(item, str):
            return load_image(item)
        return item


@dataclass
class RunTrace:
    """Per-frame outcome of one tracking run.

    states[i] is 'init', 'track', or 'skip'. overlaps and center_errors
    are NaN wherever the frame was not scored (init and skip frames).
    valid marks frames that count toward accuracy. failures lists frame
    indices with IoU 0; reinits counts re-initializations after the
    first init.
    """

    name: str
    boxes: list
    overlaps: np.ndarray
    center_errors: np.ndarray
    states: list
    failures: list = field(default_factory=list)
    reinits: int = 0
    valid: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.overlaps = np.asarray(self.overlaps, dtype=np.float64)
        scored = self.overlaps[~np.isnan(self.overlaps)]
        if scored.size and (scored.min() < 0.0 or scored.max() > 1.0):
            raise ValueError("overlaps must lie in [0, 1]")
        if any(b <= a for a, b in zip(self.failures, self.failures[1:])):
            raise ValueError("failure frames must be strictly increasing")
        if self.valid is None:
            self.valid = np.array([s == "track" for s in self.states], dtype=bool)


# --- no-reset metrics -------------------------------------------------------


def success_curve(pred_boxes, gt_boxes, thresholds=None) -> np.ndarray:
    """Fraction of frames with IoU above each threshold.

    Success at threshold t is IoU > t, except at the top gridpoint 1.0
    where complete overlap (IoU >= 1) counts; a perfect run therefore
    scores 1 across the whole grid.
    """
    if thresholds is None:
        thresholds = _THRESHOLDS
    thresholds = np.asarray(thresholds, dtype=np.float64)
    ious = np.array(
        [rotated_iou(_as_oriented(p), _as_oriented(g)) for p, g in zip(pred_boxes, gt_boxes)]
    )
    if ious.size == 0:
        return np.zeros_like(thresholds)
    curve = (ious[None, :] > thresholds[:, None]).mean(axis=1)
    top = thresholds >= 1.0
    if top.any():
        curve[top] = (ious >= 1.0).mean()
    return curve


def auc(curve: np.ndarray) -> float:
    """Area under the success curve: the mean over the threshold grid."""
    curve = np.asarray(curve, dtype=np.float64)
    return float(curve.mean()) if curve.size else 0.0


def precision_at(pred_boxes, gt_boxes, radius: float = 20.0) -> float:
    """Fraction of frames with center error within `radius` px."""
    dists = [center_distance(p, g) for p, g in zip(pred_boxes, gt_boxes)]
    if not dists:
        return 0.0
    return float(np.mean([d <= radius for d in dists]))


def _as_oriented(box) -> OrientedBox:
    if isinstance(box, OrientedBox):
        return box
    return OrientedBox(box.x, box.y, box.w, box.h, 0.0)


# --- runs -------------------------------------------------------------------


def otb_run(tracker, seq: SequenceRecord) -> RunTrace:
    """Single init on frame 0, no resets; every later frame is scored."""
    n = len(seq)
    boxes: list = [None] * n
    overlaps = np.full(n, np.nan)
    errors = np.full(n, np.nan)
    states = ["track"] * n
    gt0 = seq.boxes[0]
    tracker.init(seq.frame(0), AxisBox(gt0.x, gt0.y, gt0.w, gt0.h))
    boxes[0] = OrientedBox(gt0.x, gt0.y, gt0.w, gt0.h, 0.0)
    states[0] = "init"
    for t in range(1, n):
        pred = tracker.update(seq.frame(t))
        boxes[t] = pred
        overlaps[t] = rotated_iou(pred, _as_oriented(seq.boxes[t]))
        errors[t] = center_distance(pred, seq.boxes[t])
    return RunTrace(seq.name, boxes, overlaps, errors, states)


def vot_run(tracker, seq: SequenceRecord, skip: int = SKIP_FRAMES, burn_in: int = BURN_IN) -> RunTrace:
    """Reset-based run: IoU 0 triggers a failure, skip, and re-init."""
    n = len(seq)
    boxes: list = [None] * n
    overlaps = np.full(n, np.nan)
    errors = np.full(n, np.nan)
    states = ["skip"] * n
    valid = np.zeros(n, dtype=bool)
    failures: list = []
    reinits = 0

    t = 0
    init_frame = 0
    last_init = -1
    while t < n:
        if t == init_frame:
            gt = _as_oriented(seq.boxes[t])
            tracker.init(seq.frame(t), AxisBox(gt.x, gt.y, gt.w, gt.h))
            boxes[t] = OrientedBox(gt.x, gt.y, gt.w, gt.h, 0.0)
            states[t] = "init"
            last_init = t
            t += 1
            continue
        pred = tracker.update(seq.frame(t))
        boxes[t] = pred
        states[t] = "track"
        o = rotated_iou(pred, _as_oriented(seq.boxes[t]))
        overlaps[t] = o
        errors[t] = center_distance(pred, seq.boxes[t])
        if o <= 0.0:
            failures.append(t)
            nxt = t + 1 + skip
            t += 1
            if nxt < n:
                init_frame = nxt
                reinits += 1
                t = nxt
            else:
                t = n
            continue
        if t - last_init > burn_in:
            valid[t] = True
        t += 1
    return RunTrace(seq.name, boxes, overlaps, errors, states, failures, reinits, valid)


# --- reset-protocol metrics -------------------------------------------------


def accuracy(trace: RunTrace) -> float:
    """Mean IoU over valid frames; 0 when no frame qualifies."""
    vals = trace.overlaps[trace.valid]
    vals = vals[~np.isnan(vals)]
    return float(vals.mean()) if vals.size else 0.0


def robustness(traces) -> float:
    """Mean number of failures per sequence."""
    traces = list(traces)
    if not traces:
        return 0.0
    return float(np.mean([len(t.failures) for t in traces]))


def robustness_per_frame(traces) -> float:
    """Total failures divided by total tracked frames (length-weighted)."""
    traces = list(traces)
    fails = sum(len(t.failures) for t in traces)
    tracked = sum(sum(1 for s in t.states if s == "track") for t in traces)
    return float(fails) / tracked if tracked else 0.0


def _segments(trace: RunTrace):
    """Failure-free segments: (overlap list, ended_in_failure)."""
    segs = []
    cur: list = []
    in_segment = False
    fail_set = set(trace.failures)
    for t, state in enumerate(trace.states):
        if state == "init":
            if in_segment and cur:
                segs.append((cur, False))
            cur = []
            in_segment = True
            continue
        if state == "track" and in_segment:
            cur.append(float(trace.overlaps[t]))
            if t in fail_set:
                segs.append((cur, True))
                cur = []
                in_segment = False
        elif state == "skip":
            continue
    if in_segment and cur:
        segs.append((cur, False))
    return segs


def eao(traces, interval=DEFAULT_EAO_INTERVAL) -> float:
    """Expected average overlap over the segment-length interval.

    For each length Ns, the expected overlap is the mean over segments
    of the average overlap of their first Ns frames; segments that
    ended in a failure are zero-padded indefinitely, segments that ran
    out of frames without failing only count for Ns up to their length.
    Lengths with no qualifying segment are skipped; no segments at all
    gives 0.
    """
    lo, hi = int(interval[0]), int(interval[1])
    if lo < 1 or hi < lo:
        raise ValueError(f"bad expected-overlap interval {interval}")
    segs = []
    for trace in traces:
        segs.extend(_segments(trace))
    if not segs:
        return 0.0
    curve = []
    for ns in range(lo, hi + 1):
        vals = []
        for overlaps, failed in segs:
            if failed:
                take = overlaps[:ns]
                vals.append(sum(take) / ns)  # implicit zero padding
            elif len(overlaps) >= ns:
                vals.append(sum(overlaps[:ns]) / ns)
        if vals:
            curve.append(sum(vals) / len(vals))
    return float(np.mean(curve)) if curve else 0.0


def aspect_split(seqs, th_r: float = 1.5) -> tuple[list, list]:
    """Partition sequences by first-frame elongation r > th_r (strict)."""
    elongated, mediocre = [], []
    for seq in seqs:
        box = seq.boxes[0]
        r = max(box.w / box.h, box.h / box.w)
        (elongated if r > th_r else mediocre).append(seq)
    return elongated, mediocre


# --- ground-truth and trace files -------------------------------------------


def _parse_number_line(line: str):
    for sep in (",", "\t", " "):
        parts = [p for p in line.strip().split(sep) if p]
        if len(parts) > 1:
            try:
                return [float(p) for p in parts]
            except ValueError:
                continue
    return [float(p) for p in line.strip().split() if p]


def load_otb_groundtruth(path: str) -> list:
    """Top-left 'x,y,w,h' lines -> center-based axis boxes."""
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            vals = _parse_number_line(line)
            if len(vals) != 4:
                raise ValueError(f"expected 4 numbers per line in {path}, got {len(vals)}")
            x, y, w, h = vals
            out.append(OrientedBox(x + w / 2.0, y + h / 2.0, w, h, 0.0))
    return out


def load_vot_groundtruth(path: str) -> list:
    """8-number polygon lines -> minimum-area enclosing rotated boxes."""
    out = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            vals = _parse_number_line(line)
            if len(vals) != 8:
                raise ValueError(f"expected 8 numbers per line in {path}, got {len(vals)}")
            pts = np.asarray(vals, dtype=np.float64).reshape(4, 2)
            out.append(min_area_rect(pts))
    return out


def load_groundtruth(path: str) -> list:
    """Sniff 4-number (axis, top-left) vs 8-number (polygon) per line."""
    with open(path) as fh:
        first = next((l for l in fh if l.strip()), "")
    n = len(_parse_number_line(first)) if first else 0
    if n == 4:
        return load_otb_groundtruth(path)
    if n == 8:
        return load_vot_groundtruth(path)
    raise ValueError(f"cannot determine ground-truth format of {path} ({n} columns)")


_FRAME_EXT = (".ppm", ".pgm", ".png", ".jpg", ".jpeg", ".pnm")


def load_sequence(directory: str) -> SequenceRecord:
    """Load a sequence directory: numbered frames plus groundtruth.txt."""
    names = sorted(
        f for f in os.listdir(directory) if os.path.splitext(f)[1].lower() in _FRAME_EXT
    )
    if not names:
        raise ValueError(f"no frames found in {directory}")
    frames = [os.path.join(directory, f) for f in names]
    gt_path = None
    for cand in ("groundtruth.txt", "groundtruth_rect.txt"):
        p = os.path.join(directory, cand)
        if os.path.exists(p):
            gt_path = p
            break
    if gt_path is None:
        raise ValueError(f"no groundtruth file in {directory}")
    boxes = load_groundtruth(gt_path)
    if len(boxes) != len(frames):
        raise ValueError(
            f"{directory}: {len(frames)} frames but {len(boxes)} ground-truth lines"
        )
    return SequenceRecord(os.path.basename(os.path.abspath(directory)), frames, boxes)


_TRACE_HEADER = "frame,x,y,w,h,theta,iou,center_error,failure"


def _fmt(v: float) -> str:
    return "nan" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.6f}"


def write_trace_csv(path: str, trace: RunTrace) -> None:
    """Per-frame trace: frame, pose, IoU, center error, failure flag."""
    fail_set = set(trace.failures)
    lines = [_TRACE_HEADER]
    for t in range(len(trace.states)):
        box = trace.boxes[t]
        if box is None:
            pose = ["nan"] * 5
        else:
            pose = [_fmt(box.x), _fmt(box.y), _fmt(box.w), _fmt(box.h), _fmt(box.theta)]
        lines.append(
            ",".join(
                [str(t)]
                + pose
                + [_fmt(float(trace.overlaps[t])), _fmt(float(trace.center_errors[t]))]
                + ["1" if t in fail_set else "0"]
            )
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_trace_csv(path: str, protocol: str = "otb") -> RunTrace:
    """Rebuild a RunTrace from its CSV; protocol fixes the state layout.

    For 'vot' the skip/init/burn-in pattern is reconstructed from the
    failure flags using the documented protocol constants.
    """
    rows = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != _TRACE_HEADER:
            raise ValueError(f"bad trace header in {path}")
        for line in fh:
            if line.strip():
                rows.append(line.strip().split(","))
    n = len(rows)
    boxes: list = [None] * n
    overlaps = np.full(n, np.nan)
    errors = np.full(n, np.nan)
    failures = []
    for i, row in enumerate(rows):
        if len(row) != 9:
            raise ValueError(f"bad trace row in {path}: {row!r}")
        vals = [float(v) for v in row[1:8]]
        if not math.isnan(vals[2]):
            boxes[i] = OrientedBox(vals[0], vals[1], vals[2], vals[3], vals[4])
        overlaps[i] = vals[5]
        errors[i] = vals[6]
        if row[8] == "1":
            failures.append(i)

    states = ["track"] * n
    valid = np.zeros(n, dtype=bool)
    if n:
        states[0] = "init"
    if protocol == "otb":
        valid = np.array([s == "track" for s in states], dtype=bool)
    elif protocol == "vot":
        inits = [0]
        for f in failures:
            for ts in range(f + 1, min(f + 1 + SKIP_FRAMES, n)):
                states[ts] = "skip"
            nxt = f + 1 + SKIP_FRAMES
            if nxt < n:
                states[nxt] = "init"
                inits.append(nxt)
        last_init = -(10**9)
        fail_set = set(failures)
        for t in range(n):
            if states[t] == "init":
                last_init = t
            elif states[t] == "track" and t - last_init > BURN_IN and t not in fail_set:
                valid[t] = True
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    name = os.path.splitext(os.path.basename(path))[0]
    reinits = sum(1 for f in failures if f + 1 + SKIP_FRAMES < n) if protocol == "vot" else 0
    return RunTrace(name, boxes, overlaps, errors, states, failures, reinits, valid)


def _curve_from_overlaps(overlaps: np.ndarray, thresholds=None) -> np.ndarray:
    if thresholds is None:
        thresholds = _THRESHOLDS
    thresholds = np.asarray(thresholds, dtype=np.float64)
    vals = overlaps[~np.isnan(overlaps)]
    if vals.size == 0:
        return np.zeros_like(thresholds)
    curve = (vals[None, :] > thresholds[:, None]).mean(axis=1)
    top = thresholds >= 1.0
    if top.any():
        curve[top] = (vals >= 1.0).mean()
    return curve


def summarize(traces, protocol: str, eao_interval=DEFAULT_EAO_INTERVAL) -> dict:
    """Aggregate metrics over traces into a JSON-ready dictionary."""
    traces = list(traces)
    out: dict = {
        "protocol": protocol,
        "n_sequences": len(traces),
        "n_frames": int(sum(len(t.states) for t in traces)),
        "auc": None,
        "precision_20": None,
        "accuracy": None,
        "robustness": None,
        "robustness_per_frame": None,
        "eao": None,
    }
    if not traces:
        return out
    if protocol == "otb":
        all_over = np.concatenate([t.overlaps for t in traces])
        out["auc"] = auc(_curve_from_overlaps(all_over))
        errs = np.concatenate([t.center_errors for t in traces])
        errs = errs[~np.isnan(errs)]
        out["precision_20"] = float(np.mean(errs <= 20.0)) if errs.size else 0.0
    elif protocol == "vot":
        accs = [accuracy(t) for t in traces]
        out["accuracy"] = float(np.mean(accs))
        out["robustness"] = robustness(traces)
        out["robustness_per_frame"] = robustness_per_frame(traces)
        out["eao"] = eao(traces, eao_interval)
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    return out


def write_summary_json(path: str, summary: dict) -> None:
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
