#!/usr/bin/env python3
"""Reference-budget calibration run for the end-to-end recovery test.

Runs the acceptance scenario at 3x the default iteration budget; the mean
Chamfer of this run defines attainable accuracy, and the acceptance test
pins its threshold at 2x this value.  Re-run after any change that affects
reconstruction quality and update the frozen constant in
tests/test_acceptance.py.
"""

import time

import numpy as np

from sftkit.config import RunConfig, StrategyConfig
from sftkit.metrics import chamfer, sample_points
from sftkit.optim import run_frame_wise
from sftkit.synth import EVAL_POINT_SEED, ScenarioConfig, generate_sequence

# Must match tests/test_acceptance.py exactly.
ACCEPTANCE_SCENE = dict(
    grid_resolution=16,
    image_size=128,
    frame_count=10,
    amplitude=0.25,
    frequency=1.0,
    camera_distance=1.5,
    base_curvature=0.12,
    texture_kind="checkerboard",
    seed=0,
)


def mean_chamfer(run, seq):
    vals = []
    for t in range(len(seq.frames)):
        pred = sample_points(
            run.shapes[t], seq.template.faces, 2048, EVAL_POINT_SEED + t + 1
        )
        vals.append(chamfer(pred, seq.frames[t].gt_points) * 1e4)
    return float(np.mean(vals)), vals


def main():
    seq = generate_sequence(ScenarioConfig(**ACCEPTANCE_SCENE))
    rc = RunConfig()
    rc.strategy = StrategyConfig(kind="frame", warmup_iters=1500, iters_per_frame=600)
    t0 = time.perf_counter()
    run = run_frame_wise(seq, rc)
    dt = time.perf_counter() - t0
    mean, vals = mean_chamfer(run, seq)
    print(f"3x-budget oracle run: {run.ledger.render_count} renders in {dt:.0f}s")
    print("per-frame chamfer (x1e4):", [f"{v:.2f}" for v in vals])
    print(f"mean chamfer (x1e4): {mean:.4f}")
    print(f"acceptance threshold (2x): {2.0 * mean:.4f}")


if __name__ == "__main__":
    main()
