"""End-to-end acceptance checks.

Nine numbered criteria covering the numerical kernels, the scheduling and
updating rules, the two evaluation protocols, and the synthetic ablation
pipeline. Each test prints one `[k/9] name: PASS/FAIL ...` line with the
measured numbers, so a full run doubles as a report. The two tracking
criteria (5 and 6) re-run the frozen synthetic designs and take a few
minutes between them; everything is seeded, so the numbers are exactly
reproducible.
"""

import itertools
import math
import time

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from rotsiam.evaluation import (
    RunTrace,
    SequenceRecord,
    accuracy,
    auc,
    eao,
    otb_run,
    precision_at,
    robustness,
    success_curve,
    vot_run,
)
from rotsiam.features import FeatureMap, FeaturePair
from rotsiam.geometry import AxisBox, OrientedBox, rotated_iou, wrap_angle
from rotsiam.harness import MotionScript, ablation_grid, run_ablation, synth_sequence, write_ablation_csv
from rotsiam.matching import cross_correlate, cross_correlate_fft
from rotsiam.tracker import Tracker, TrackerConfig, candidate_set, make_mask_set
import rotsiam.tracker as trk

from oracles import axis_aligned_iou, brute_correlate, mc_rotated_iou


def report(k, name, ok, detail):
    print(f"[{k}/9] {name}: {'PASS' if ok else 'FAIL'} — {detail}")
    return ok


# --- 1: correlation kernel ----------------------------------------------------


def test_criterion_1_correlation_kernel():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    worst_direct = 0.0
    worst_fft = 0.0
    for _ in range(200):
        c = int(rng.integers(1, 9))
        th, tw = (int(v) for v in rng.integers(3, 13, size=2))
        sh, sw = th + int(rng.integers(0, 17)), tw + int(rng.integers(0, 17))
        tmpl = FeatureMap(rng.standard_normal((c, th, tw)), 8.0)
        srch = FeatureMap(rng.standard_normal((c, sh, sw)), 8.0)
        want = brute_correlate(tmpl.data, srch.data)
        scale = max(np.abs(want).max(), 1e-30)
        got = cross_correlate(tmpl, srch).data
        got_fft = cross_correlate_fft(tmpl, srch).data
        worst_direct = max(worst_direct, np.abs(got - want).max() / scale)
        worst_fft = max(worst_fft, np.abs(got_fft - want).max() / scale)
    dt = time.perf_counter() - t0
    ok = worst_direct <= 1e-6 and worst_fft <= 1e-5 and dt < 10.0
    assert report(
        1, "correlation vs sliding-window oracle", ok,
        f"200 pairs, max rel err direct {worst_direct:.2e} (cap 1e-6), "
        f"fft {worst_fft:.2e} (cap 1e-5), {dt:.1f}s (cap 10s)",
    )


# --- 2: rotated overlap --------------------------------------------------------


def test_criterion_2_rotated_iou():
    rng = np.random.default_rng(22)
    t0 = time.perf_counter()
    worst_mc = 0.0
    for _ in range(100):
        a = OrientedBox(
            rng.uniform(-30, 30), rng.uniform(-30, 30),
            rng.uniform(8, 60), rng.uniform(8, 60), rng.uniform(-math.pi, math.pi),
        )
        b = OrientedBox(
            a.x + rng.uniform(-40, 40), a.y + rng.uniform(-40, 40),
            rng.uniform(8, 60), rng.uniform(8, 60), rng.uniform(-math.pi, math.pi),
        )
        got = rotated_iou(a, b)
        ref = mc_rotated_iou(a, b, n=1_000_000, seed=7)
        worst_mc = max(worst_mc, abs(got - ref))
    worst_axis = 0.0
    for _ in range(50):
        a = AxisBox(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(5, 40), rng.uniform(5, 40))
        b = AxisBox(rng.uniform(-20, 20), rng.uniform(-20, 20), rng.uniform(5, 40), rng.uniform(5, 40))
        got = rotated_iou(OrientedBox(a.x, a.y, a.w, a.h, 0.0), OrientedBox(b.x, b.y, b.w, b.h, 0.0))
        worst_axis = max(worst_axis, abs(got - axis_aligned_iou(a, b)))
    sq = rotated_iou(OrientedBox(0, 0, 10, 10, 0.0), OrientedBox(0, 0, 10, 10, math.pi / 4))
    err45 = abs(sq - 1 / math.sqrt(2))  # octagon overlap: IoU = 1/sqrt(2)
    dt = time.perf_counter() - t0
    ok = worst_mc <= 2e-3 and worst_axis <= 1e-12 and err45 <= 1e-12 and dt < 60.0
    assert report(
        2, "rotated IoU vs Monte-Carlo oracle", ok,
        f"100 pairs |err| max {worst_mc:.2e} (cap 2e-3), axis-aligned exact to "
        f"{worst_axis:.1e}, 45deg-square err {err45:.1e}, {dt:.1f}s (cap 60s)",
    )


# --- 3: candidate scheduling ---------------------------------------------------


def test_criterion_3_candidate_schedule():
    law_ok = True
    for m, n in itertools.product((1, 3, 5, 7, 9), repeat=2):
        cands = candidate_set(TrackerConfig(M=m, N=n))
        law_ok &= len(cands) == m + n - 1
        law_ok &= sum(c.s == 1.0 and c.a == 0.0 for c in cands) == 1
        law_ok &= all(not (c.s != 1.0 and c.a != 0.0) for c in cands)
    five = candidate_set(TrackerConfig())
    pairs = [(c.s, c.a) for c in five]
    pi8 = math.pi / 8
    want = [(1.0375, 0.0), (1 / 1.0375, 0.0), (1.0, 0.0), (1.0, pi8), (1.0, -pi8)]
    five_ok = (
        len(pairs) == 5
        and all(abs(p[0] - w[0]) < 1e-12 and abs(p[1] - w[1]) < 1e-12 for p, w in zip(pairs, want))
        and abs(five[1].s - 0.964) < 5e-4
        and [c.penalty for c in five] == [0.973, 0.973, 1.0, 0.975, 0.975]
    )
    ok = law_ok and five_ok
    assert report(
        3, "joint scale/angle candidate schedule", ok,
        f"count law K=M+N-1 over odd M,N in 1..9: {'ok' if law_ok else 'violated'}; "
        f"default set = {[(round(s, 4), round(a, 4)) for s, a in pairs]}",
    )


# --- 4: template update algebra --------------------------------------------------


def rand_pair(rng):
    return FeaturePair(
        FeatureMap(rng.standard_normal((4, 8, 8)), 8.0),
        FeatureMap(rng.standard_normal((4, 6, 6)), 8.0),
    )


def make_state(rng, **cfg_kw):
    first = rand_pair(rng)
    return trk.TrackerState(
        cfg=TrackerConfig(**cfg_kw),
        extractor=None,
        pose=OrientedBox(0, 0, 40, 40, 0),
        first_template=first,
        moving_template=trk._copy_pair(first),
        last_tracked=trk._copy_pair(first),
        mask=None,
        frame_index=0,
    )


def test_criterion_4_update_algebra():
    rng = np.random.default_rng(4)
    st = make_state(rng)
    f = st.first_template.lo.data.copy()
    g = rand_pair(rng)
    t2 = trk.update_template(st, g)
    expected = 0.5 * f + 0.5 * (0.006 * g.lo.data + 0.994 * f)
    exact = np.array_equal(t2.lo.data, expected)

    st = make_state(rng)
    lo = st.first_template.lo.data.min()
    hi = st.first_template.lo.data.max()
    out = None
    for _ in range(1000):
        g = rand_pair(rng)
        lo = min(lo, g.lo.data.min())
        hi = max(hi, g.lo.data.max())
        out = trk.update_template(st, g)
    envelope = out.lo.data.min() >= lo - 1e-12 and out.lo.data.max() <= hi + 1e-12
    ok = exact and envelope
    assert report(
        4, "template update algebra", ok,
        f"frame-2 blend bitwise-exact: {exact}; 1000-step output stays inside "
        f"the convex envelope of its inputs: {envelope}",
    )


# --- 5: rotation tracking gain ---------------------------------------------------


def test_criterion_5_rotation_candidates_help():
    t0 = time.perf_counter()
    rng = np.random.default_rng(42)
    ious_on, ious_off, final_err = [], [], []
    for i in range(20):
        dtheta = rng.uniform(math.pi / 192, math.pi / 96)
        script = MotionScript(
            steps=[[0.0, 0.0, 1.0, dtheta]],
            background="textured",
            target_w=40.0,
            target_h=80.0,
            texture_seed=i,
            n_frames=48,
        )
        seq = synth_sequence(script, seed=i)
        for angle_on in (True, False):
            trace = otb_run(Tracker(TrackerConfig(angle_enabled=angle_on)), seq)
            mean_iou = float(np.nanmean(trace.overlaps))
            if angle_on:
                ious_on.append(mean_iou)
                final_err.append(abs(wrap_angle(trace.boxes[-1].theta - seq.boxes[-1].theta)))
            else:
                ious_off.append(mean_iou)
    diff = float(np.mean(ious_on) - np.mean(ious_off))
    ang = float(np.mean(final_err))
    dt = time.perf_counter() - t0
    ok = diff >= 0.10 and ang <= math.pi / 16 and dt < 300.0
    assert report(
        5, "angle candidates on slow in-plane rotation", ok,
        f"20 sequences: mean IoU {np.mean(ious_on):.3f} (on) vs {np.mean(ious_off):.3f} (off), "
        f"gain {diff:+.3f} (need >= +0.10); mean final angle error {ang:.3f} rad "
        f"(cap pi/16 = {math.pi / 16:.3f}); {dt:.0f}s (cap 300s)",
    )


# --- 6: spatial mask vs nearby distractor ------------------------------------------


def test_criterion_6_mask_suppresses_distractor():
    t0 = time.perf_counter()
    ious_on, ious_off = [], []
    for i in range(12):
        script = MotionScript(
            steps=[[0.0, 1.0, 1.0, 0.0]],
            background="distractor",
            target_w=40.0,
            target_h=80.0,
            target_contrast=0.30,
            start_x=160.0,
            start_y=105.0,
            n_frames=45,
            distractor_dx=82.0,
            distractor_dy=0.0,
            distractor_w=16.0,
            distractor_h=56.0,
            distractor_seed=300 + i,
            texture_seed=i,
        )
        seq = synth_sequence(script, seed=i)
        for mask_on in (True, False):
            trace = otb_run(Tracker(TrackerConfig(mask_enabled=mask_on)), seq)
            (ious_on if mask_on else ious_off).append(float(np.nanmean(trace.overlaps)))
    diff = float(np.mean(ious_on) - np.mean(ious_off))

    # the gate must stay closed for non-elongated targets
    dummy = FeaturePair(FeatureMap(np.ones((2, 8, 8)), 8.0), FeatureMap(np.ones((2, 6, 6)), 8.0))
    gate_closed = (
        make_mask_set(TrackerConfig(), OrientedBox(0, 0, 50, 50, 0), dummy) is None
        and make_mask_set(TrackerConfig(), OrientedBox(0, 0, 60, 40, 0), dummy) is None
    )
    dt = time.perf_counter() - t0
    ok = diff >= 0.05 and gate_closed
    assert report(
        6, "aspect-gated mask near a distractor", ok,
        f"12 sequences: mean IoU {np.mean(ious_on):.3f} (mask) vs {np.mean(ious_off):.3f} "
        f"(no mask), gain {diff:+.3f} (need >= +0.05); square/at-threshold boxes stay "
        f"ungated: {gate_closed}; {dt:.0f}s",
    )


# --- 7: reset protocol ----------------------------------------------------------


class EchoTracker:
    def __init__(self, boxes, fail_at=()):
        self.boxes = boxes
        self.fail_at = set(fail_at)

    def init(self, frame, box):
        pass

    def update(self, frame):
        i = int(round(float(frame[0, 0])))
        b = self.boxes[i]
        if i in self.fail_at:
            return OrientedBox(b.x + 500.0, b.y + 500.0, b.w, b.h, 0.0)
        return OrientedBox(b.x, b.y, b.w, b.h, b.theta)


def echo_sequence(n, fail_at=()):
    boxes = [OrientedBox(50.0, 50.0, 20.0, 10.0, 0.0) for _ in range(n)]
    frames = [np.full((4, 4), float(i)) for i in range(n)]
    return SequenceRecord("echo", frames, boxes), EchoTracker(boxes, fail_at)


def test_criterion_7_reset_protocol():
    seq, tracker = echo_sequence(30, fail_at=(10,))
    trace = vot_run(tracker, seq)
    walkthrough = (
        trace.failures == [10]
        and trace.reinits == 1
        and trace.states[11:16] == ["skip"] * 5
        and trace.states[16] == "init"
        and set(np.flatnonzero(trace.valid)) == {27, 28, 29}
        and accuracy(trace) == 1.0
        and robustness([trace]) == 1.0
    )
    seq2, t2 = echo_sequence(30)
    clean = vot_run(t2, seq2)
    perfect = (
        accuracy(clean) == 1.0
        and robustness([clean]) == 0.0
        and eao([clean], (5, 15)) == 1.0
    )
    ok = walkthrough and perfect
    assert report(
        7, "failure/skip/re-init walkthrough", ok,
        f"failure@10 -> skip 11..15, re-init@16, valid frames {[int(v) for v in np.flatnonzero(trace.valid)]}, "
        f"accuracy {accuracy(trace):.3f}, failures {len(trace.failures)}; "
        f"ground-truth echo: A={accuracy(clean):.1f} R={robustness([clean]):.1f} "
        f"EAO={eao([clean], (5, 15)):.1f}",
    )


# --- 8: no-reset metrics ----------------------------------------------------------


class OffsetTracker(EchoTracker):
    def update(self, frame):
        b = super().update(frame)
        return OrientedBox(b.x + 30.0, b.y, b.w, b.h, b.theta)


class HalfOverlapTracker(EchoTracker):
    def update(self, frame):
        b = super().update(frame)
        return OrientedBox(b.x, b.y, b.w / 2.0, b.h, b.theta)


def test_criterion_8_no_reset_metrics():
    seq, tracker = echo_sequence(12)
    perfect = otb_run(tracker, seq)
    over = perfect.overlaps[~np.isnan(perfect.overlaps)]
    curve = success_curve(
        [b for b, s in zip(perfect.boxes, perfect.states) if s == "track"],
        [b for b, s in zip(seq.boxes, perfect.states) if s == "track"],
    )
    auc_perfect = auc(curve)
    prec_perfect = float(np.mean(perfect.center_errors[1:] <= 20.0))

    seq_o, _ = echo_sequence(12)
    off = otb_run(OffsetTracker(seq_o.boxes), seq_o)
    prec_off = float(np.mean(off.center_errors[1:] <= 20.0))

    seq_h, _ = echo_sequence(12)
    half = otb_run(HalfOverlapTracker(seq_h.boxes), seq_h)
    half_curve = success_curve(
        [b for b, s in zip(half.boxes, half.states) if s == "track"],
        [b for b, s in zip(seq_h.boxes, half.states) if s == "track"],
    )
    auc_half = auc(half_curve)

    ok = (
        np.all(over == 1.0)
        and auc_perfect == 1.0
        and prec_perfect == 1.0
        and prec_off == 0.0
        and abs(auc_half - 50 / 101) < 1e-12
    )
    assert report(
        8, "success/precision sanity values", ok,
        f"perfect AUC {auc_perfect:.4f} (want 1), precision@20 {prec_perfect:.2f} (want 1); "
        f"30px offset precision@20 {prec_off:.2f} (want 0); constant IoU-0.5 AUC "
        f"{auc_half:.6f} (want 50/101 = {50 / 101:.6f})",
    )


# --- 9: ablation reproducibility ----------------------------------------------------


def test_criterion_9_ablation_grid_reproducible(tmp_path):
    script = MotionScript(
        steps=[[0.8, 0.4, 1.0, 0.015]],
        background="textured",
        target_w=28.0,
        target_h=44.0,
        canvas_w=192,
        canvas_h=192,
        n_frames=14,
        texture_seed=3,
    )
    seqs = [synth_sequence(script, seed=3, name="grid-seq")]
    grid = ablation_grid()
    paths = []
    for run in range(2):
        rows = run_ablation(grid, seqs, eao_interval=(10, 50))
        p = str(tmp_path / f"ablation-{run}.csv")
        write_ablation_csv(p, rows)
        paths.append(p)
    blobs = [open(p, "rb").read() for p in paths]
    with open(paths[0]) as fh:
        n_rows = sum(1 for line in fh if line.strip()) - 1
    ok = blobs[0] == blobs[1] and n_rows == 8
    assert report(
        9, "ablation grid determinism", ok,
        f"two runs of the 8-config toggle grid over a seeded sequence: "
        f"CSVs byte-identical: {blobs[0] == blobs[1]}, rows {n_rows} (want 8)",
    )
