#!/usr/bin/env python3
"""Render the standard synthetic benchmark suite to disk.

One sequence directory per (family, seed): numbered PPM frames plus a
polygon groundtruth.txt, with the generating motion script saved next to
them so any sequence can be re-rendered or tweaked later.
"""

from __future__ import annotations

import argparse
import math
import os

from rotsiam.harness import MotionScript, save_script, synth_sequence, write_sequence

FAMILIES = ("static", "translate", "scale", "rotate", "mixed", "distractor")


def family_script(family: str, seed: int, frames: int) -> MotionScript:
    common = dict(background="textured", texture_seed=seed, n_frames=frames,
                  target_w=40.0, target_h=64.0)
    if family == "static":
        return MotionScript(**common)
    if family == "translate":
        return MotionScript(steps=[[1.2, 0.8, 1.0, 0.0]], start_x=120.0, start_y=120.0, **common)
    if family == "scale":
        # grow for half the sequence, shrink back
        half = (frames - 1) // 2
        rows = [[0.0, 0.0, 1.02, 0.0]] * half + [[0.0, 0.0, 1 / 1.02, 0.0]] * (frames - 1 - half)
        return MotionScript(steps=rows, **common)
    if family == "rotate":
        return MotionScript(steps=[[0.0, 0.0, 1.0, math.pi / 120]], **common)
    if family == "mixed":
        return MotionScript(steps=[[0.9, -0.5, 1.005, math.pi / 160]],
                            start_x=130.0, start_y=180.0, **common)
    if family == "distractor":
        return MotionScript(
            steps=[[0.0, 1.0, 1.0, 0.0]],
            background="distractor",
            texture_seed=seed,
            n_frames=frames,
            target_w=40.0,
            target_h=80.0,
            target_contrast=0.35,
            start_x=160.0,
            start_y=105.0,
            distractor_dx=82.0,
            distractor_w=16.0,
            distractor_h=56.0,
            distractor_seed=300 + seed,
        )
    raise ValueError(f"unknown family {family!r}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", required=True, help="suite output directory")
    parser.add_argument("--seeds", type=int, default=3, help="sequences per family")
    parser.add_argument("--frames", type=int, default=40)
    parser.add_argument("--families", nargs="*", default=list(FAMILIES),
                        choices=FAMILIES, metavar="FAMILY")
    parser.add_argument("--format", choices=("ppm", "png"), default="ppm")
    args = parser.parse_args()

    script_dir = os.path.join(args.out, "scripts")
    os.makedirs(script_dir, exist_ok=True)
    for family in args.families:
        for seed in range(args.seeds):
            name = f"{family}-{seed:02d}"
            script = family_script(family, seed, args.frames)
            seq = synth_sequence(script, seed=seed, name=name)
            write_sequence(seq, os.path.join(args.out, name), fmt=args.format)
            save_script(script, os.path.join(script_dir, f"{name}.txt"))
            print(f"{name}: {len(seq)} frames, target {script.target_w:.0f}x{script.target_h:.0f}, "
                  f"background {script.background}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
