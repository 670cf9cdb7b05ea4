"""Command-line entry point.

Subcommands: track, eval, synth, ablate, plot. On success the exit code
is 0; every failure prints a single machine-parsable line
`error: <kind>: <message>` to stderr and exits non-zero.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import evaluation as ev
from . import harness
from .plots import Panel, write_svg
from .tracker import Tracker, TrackerConfig, load_config, parse_overrides


class CliError(Exception):
    def __init__(self, kind: str, message: str):
        super().__init__(message)
        self.kind = kind


def _load_cfg(path: str | None) -> TrackerConfig:
    if path is None:
        return TrackerConfig()
    try:
        return load_config(path)
    except (OSError, ValueError) as exc:
        raise CliError("bad-config", str(exc)) from None


def _cmd_track(args) -> int:
    cfg = _load_cfg(args.config)
    try:
        boxes = ev.load_groundtruth(args.gt)
    except (OSError, ValueError) as exc:
        raise CliError("bad-groundtruth", str(exc)) from None
    frame_names = sorted(
        f for f in os.listdir(args.frames)
        if os.path.splitext(f)[1].lower() in (".ppm", ".pgm", ".png", ".jpg", ".jpeg", ".pnm")
    )
    if not frame_names:
        raise CliError("no-frames", f"no frames found in {args.frames}")
    frames = [os.path.join(args.frames, f) for f in frame_names]
    if len(boxes) not in (1, len(frames)):
        raise CliError(
            "gt-length-mismatch",
            f"{len(frames)} frames but {len(boxes)} ground-truth lines",
        )
    if len(boxes) == 1:
        boxes = boxes * len(frames)
    seq = ev.SequenceRecord(os.path.basename(os.path.abspath(args.frames)), frames, boxes)
    tracker = Tracker(cfg)
    if args.protocol == "vot":
        trace = ev.vot_run(tracker, seq)
    else:
        trace = ev.otb_run(tracker, seq)
    ev.write_trace_csv(args.out, trace)
    return 0


def _cmd_eval(args) -> int:
    if not os.path.isdir(args.runs):
        raise CliError("bad-runs-dir", f"not a directory: {args.runs}")
    paths = sorted(
        os.path.join(args.runs, f) for f in os.listdir(args.runs) if f.endswith(".csv")
    )
    if not paths:
        raise CliError("no-traces", f"no trace CSVs in {args.runs}")
    try:
        traces = [ev.read_trace_csv(p, protocol=args.protocol) for p in paths]
    except ValueError as exc:
        raise CliError("bad-trace", str(exc)) from None
    summary = ev.summarize(traces, args.protocol, (args.eao_lo, args.eao_hi))
    ev.write_summary_json(args.out, summary)
    return 0


def _cmd_synth(args) -> int:
    try:
        script = harness.load_script(args.script)
        seq = harness.synth_sequence(script, seed=args.seed)
    except (OSError, harness.ScriptError) as exc:
        raise CliError("bad-script", str(exc)) from None
    harness.write_sequence(seq, args.out, fmt=args.format)
    return 0


def _read_grid(path: str):
    """Grid CSV: header of TrackerConfig keys (plus optional name column)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None:
                raise CliError("bad-grid", f"empty grid file {path}")
            rows = list(reader)
    except OSError as exc:
        raise CliError("bad-grid", str(exc)) from None
    if not rows:
        raise CliError("bad-grid", f"no config rows in {path}")
    configs = []
    for i, row in enumerate(rows):
        name = row.pop("name", None) or f"config{i}"
        try:
            kwargs = parse_overrides({k: v for k, v in row.items() if v != ""})
            cfg = TrackerConfig(**kwargs)
        except (ValueError, TypeError) as exc:
            raise CliError("bad-grid", f"row {i}: {exc}") from None
        configs.append((name, cfg))
    return configs


def _cmd_ablate(args) -> int:
    configs = _read_grid(args.grid)
    if not os.path.isdir(args.seqs):
        raise CliError("bad-seqs-dir", f"not a directory: {args.seqs}")
    subdirs = sorted(
        os.path.join(args.seqs, d)
        for d in os.listdir(args.seqs)
        if os.path.isdir(os.path.join(args.seqs, d))
    )
    if not subdirs:
        raise CliError("no-sequences", f"no sequence directories in {args.seqs}")
    try:
        seqs = [ev.load_sequence(d) for d in subdirs]
    except ValueError as exc:
        raise CliError("bad-sequence", str(exc)) from None
    rows = harness.run_ablation(configs, seqs, (args.eao_lo, args.eao_hi))
    harness.write_ablation_csv(args.out, rows)
    return 0


def _cmd_plot(args) -> int:
    try:
        trace = ev.read_trace_csv(args.infile, protocol=args.protocol)
    except (OSError, ValueError) as exc:
        raise CliError("bad-trace", str(exc)) from None
    overlaps = trace.overlaps[~np.isnan(trace.overlaps)]
    errors = trace.center_errors[~np.isnan(trace.center_errors)]
    if overlaps.size == 0:
        raise CliError("empty-trace", f"no scored frames in {args.infile}")
    thresholds = np.linspace(0.0, 1.0, 101)
    succ = ev._curve_from_overlaps(trace.overlaps, thresholds)
    radii = np.arange(0, 51, dtype=np.float64)
    prec = np.array([(errors <= r).mean() for r in radii])
    max_ns = max(len(overlaps), 2)
    lengths = np.arange(1, max_ns + 1)
    phi = np.array([ev.eao([trace], (n, n)) for n in lengths])
    panels = [
        Panel("success", "overlap threshold", "success rate", thresholds, succ),
        Panel("precision", "center error (px)", "precision", radii, prec),
        Panel("expected overlap", "segment length", "expected overlap", lengths, phi),
    ]
    write_svg(args.out, panels)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rotsiam", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="run the tracker over a frame directory")
    p.add_argument("--config", default=None, help="flat key-value config file")
    p.add_argument("--frames", required=True, help="directory of numbered frames")
    p.add_argument("--gt", required=True, help="ground-truth file (4- or 8-column)")
    p.add_argument("--out", required=True, help="output trace CSV")
    p.add_argument("--protocol", choices=("otb", "vot"), default="otb")
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval", help="aggregate metrics over trace CSVs")
    p.add_argument("--protocol", choices=("otb", "vot"), required=True)
    p.add_argument("--runs", required=True, help="directory of trace CSVs")
    p.add_argument("--out", required=True, help="output summary JSON")
    p.add_argument("--eao-lo", type=int, default=ev.DEFAULT_EAO_INTERVAL[0])
    p.add_argument("--eao-hi", type=int, default=ev.DEFAULT_EAO_INTERVAL[1])
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="render a synthetic sequence")
    p.add_argument("--script", required=True, help="motion script file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output sequence directory")
    p.add_argument("--format", choices=("ppm", "png"), default="ppm")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("ablate", help="run a config grid over sequences")
    p.add_argument("--grid", required=True, help="CSV of config overrides")
    p.add_argument("--seqs", required=True, help="directory of sequence directories")
    p.add_argument("--out", required=True, help="output results CSV")
    p.add_argument("--eao-lo", type=int, default=10)
    p.add_argument("--eao-hi", type=int, default=50)
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("plot", help="render curves from a trace CSV as SVG")
    p.add_argument("--in", dest="infile", required=True, help="trace CSV")
    p.add_argument("--out", required=True, help="output SVG")
    p.add_argument("--protocol", choices=("otb", "vot"), default="otb")
    p.set_defaults(func=_cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc.kind}: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
