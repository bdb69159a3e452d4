"""AdamW steps and the three optimization strategies.

Frames are optimized in windows of ``w`` parameter sets; the frame-wise
strategy is the window engine at ``w = 1`` and the adaptive strategy adds a
stopping tolerance on consecutive total-loss values.  Parameters hand off
between consecutive windows (the next window initializes from the previous
window's last frame) while optimizer moments reset at every window boundary:
stale moments from a converged frame would suppress the fresh gradients of a
new one.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import NonFiniteGradientError, backward
from .camera import ProjectionError
from .config import RunConfig, StrategyConfig
from .losses import LossBreakdown, LossCounters, precompute_reference, temporal_loss, total_loss
from .mesh import MeshError
from .network import DeformationState, NetworkError, forward
from .render import rasterize


@dataclass
class OptimizerState:
    """Decoupled-weight-decay Adam moments for a list of parameter arrays."""

    first_moment: list
    second_moment: list
    step_count: int = 0
    learning_rate: float = 1e-4
    weight_decay: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def for_arrays(cls, arrays, **kwargs) -> "OptimizerState":
        return cls(
            first_moment=[np.zeros_like(a) for a in arrays],
            second_moment=[np.zeros_like(a) for a in arrays],
            **kwargs,
        )


def adamw_step(params: list, grads: list, state: OptimizerState) -> None:
    """One in-place update: moments, bias correction, then
    ``theta -= lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)``."""
    for g in grads:
        if g is None or not np.all(np.isfinite(g)):
            raise NonFiniteGradientError("adamw_step received non-finite gradients")
    state.step_count += 1
    t = state.step_count
    bc1 = 1.0 - state.beta1**t
    bc2 = 1.0 - state.beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= state.learning_rate * (m_hat / (np.sqrt(v_hat) + state.epsilon) + state.weight_decay * p)


# ---------------------------------------------------------------------------
# Run bookkeeping
# ---------------------------------------------------------------------------


@dataclass
class RunLedger:
    """Per-iteration loss rows, render counting and failure records."""

    rows: list = field(default_factory=list)       # (frame 1-based, iteration, LossBreakdown)
    frame_iters: dict = field(default_factory=dict)
    frame_wall_clock: dict = field(default_factory=dict)
    render_count: int = 0
    warmup_render_count: int = 0
    budget_capped: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    counters: LossCounters = field(default_factory=LossCounters)
    uv_clamp_count: int = 0

    def record(self, frame: int, iteration: int, breakdown: LossBreakdown) -> None:
        self.rows.append((frame, iteration, breakdown))

    def write_losses_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("frame,iteration," + ",".join(LossBreakdown.COLUMNS) + "\n")
            for frame, iteration, bd in self.rows:
                vals = ",".join(repr(x) for x in bd.as_row())
                fh.write(f"{frame},{iteration},{vals}\n")

    def iteration_zero_totals(self) -> dict:
        out = {}
        for frame, iteration, bd in self.rows:
            if iteration == 0:
                out[frame] = bd.total
        return out

    def final_totals(self) -> dict:
        out = {}
        for frame, _, bd in self.rows:
            out[frame] = bd.total
        return out


@dataclass
class OptimizationRun:
    shapes: list                      # per-frame (V, 3) recovered geometry
    snapshots: list                   # per-frame parameter snapshots
    ledger: RunLedger
    strategy: StrategyConfig
    wall_clock: float = 0.0


# ---------------------------------------------------------------------------
# Window engine
# ---------------------------------------------------------------------------


def run_frame_wise(dataset, run_cfg: RunConfig) -> OptimizationRun:
    """Each frame optimized independently with parameter hand-off; frame 1
    gets the warmup budget, later frames the steady per-frame budget."""
    cfg = run_cfg.strategy
    return _run_windows(dataset, run_cfg, window=1, steady_iters=cfg.iters_per_frame)


def run_window_wise(dataset, run_cfg: RunConfig) -> OptimizationRun:
    """Windows of ``w`` frames share one optimization; interior frame triples
    add the kinematic temporal term.  ``w = 1`` reproduces the frame-wise
    strategy exactly."""
    cfg = run_cfg.strategy
    if cfg.window_size == 1:
        return run_frame_wise(dataset, run_cfg)
    return _run_windows(
        dataset, run_cfg, window=cfg.window_size, steady_iters=cfg.iters_per_window
    )


def run_adaptive(dataset, run_cfg: RunConfig) -> OptimizationRun:
    """Frame-wise with early stopping once consecutive totals differ by less
    than the tolerance; iteration budgets become per-frame caps."""
    cfg = run_cfg.strategy
    return _run_windows(
        dataset,
        run_cfg,
        window=1,
        steady_iters=cfg.max_iters_per_frame,
        tolerance=cfg.tolerance,
    )


def run_strategy(dataset, run_cfg: RunConfig) -> OptimizationRun:
    kind = run_cfg.strategy.kind
    if kind == "frame":
        return run_frame_wise(dataset, run_cfg)
    if kind == "window":
        return run_window_wise(dataset, run_cfg)
    return run_adaptive(dataset, run_cfg)


def _make_state(run_cfg: RunConfig, template_vertices) -> DeformationState:
    if run_cfg.deform_mode == "vertex-offset":
        return DeformationState.vertex_offset(template_vertices)
    return DeformationState.network(run_cfg.network, template_vertices)


def _run_windows(
    dataset,
    run_cfg: RunConfig,
    window: int,
    steady_iters: int,
    tolerance: float | None = None,
) -> OptimizationRun:
    mesh = dataset.template
    camera = dataset.camera
    x0 = mesh.vertices
    frames = dataset.frames
    n_frames = len(frames)
    strat = run_cfg.strategy
    ledger = RunLedger()
    shapes = [x0.copy() for _ in range(n_frames)]
    snapshots: list = [None] * n_frames
    handoff = None
    run_start = time.perf_counter()

    windows = [list(range(s, min(s + window, n_frames))) for s in range(0, n_frames, window)]
    for wi, members in enumerate(windows):
        budget = strat.warmup_iters if wi == 0 else steady_iters
        states = []
        for _ in members:
            st = _make_state(run_cfg, x0)
            if handoff is not None and not strat.cold_restart:
                st.load_snapshot(handoff)
            states.append(st)
        precomps = [
            precompute_reference(frames[f], run_cfg.loss, run_cfg.blur_sigma)
            for f in members
        ]

        t0 = time.perf_counter()
        iters_done, stopped = _optimize_group(
            states, members, frames, precomps, mesh, camera, run_cfg,
            budget, ledger, tolerance, is_warmup=wi == 0, group_label=wi,
        )
        wall = time.perf_counter() - t0

        if tolerance is not None and not stopped and iters_done == budget:
            ledger.budget_capped.extend(m + 1 for m in members)
        for f, st in zip(members, states):
            shapes[f] = forward(st, x0)[0].value
            snapshots[f] = st.snapshot()
            ledger.frame_iters[f + 1] = iters_done
            ledger.frame_wall_clock[f + 1] = wall / len(members)
        handoff = snapshots[members[-1]]

    return OptimizationRun(
        shapes=shapes,
        snapshots=snapshots,
        ledger=ledger,
        strategy=strat,
        wall_clock=time.perf_counter() - run_start,
    )


def _optimize_group(
    states, members, frames, precomps, mesh, camera, run_cfg,
    budget, ledger, tolerance, is_warmup, group_label,
):
    """Iterate forward/backward/step over one group of jointly optimized
    frames.  Returns (iterations done, stopped-by-tolerance).  On a
    non-finite loss or gradient the iteration aborts with a failure record
    and the last good parameters stay in place."""
    arrays = [a for st in states for a in st.trainable_arrays()]
    opt = OptimizerState.for_arrays(arrays)
    prev_total = None
    iters_done = 0
    stopped = False
    for k in range(budget):
        try:
            total, leaves, per_frame = _window_pass(
                states, members, frames, precomps, mesh, camera, run_cfg, ledger, is_warmup
            )
        except (NonFiniteGradientError, ProjectionError, NetworkError, MeshError) as exc:
            ledger.failures.append(
                {"window": group_label, "frames": [m + 1 for m in members],
                 "iteration": k, "error": str(exc)}
            )
            break
        for f, bd in per_frame:
            ledger.record(f + 1, k, bd)
        iters_done = k + 1
        total_value = float(total.value)
        if tolerance is not None and prev_total is not None and abs(total_value - prev_total) < tolerance:
            stopped = True
            break
        prev_total = total_value
        if run_cfg.dump_every and k % run_cfg.dump_every == 0 and run_cfg.out_dir:
            _dump_renders(run_cfg.out_dir, states, members, mesh, camera, run_cfg, k)
        try:
            backward(total)
            grads = [leaf.grad for leaf in leaves]
            adamw_step(arrays, grads, opt)
        except NonFiniteGradientError as exc:
            ledger.failures.append(
                {"window": group_label, "frames": [m + 1 for m in members],
                 "iteration": k, "error": str(exc)}
            )
            break
    return iters_done, stopped


def optimize_frame(
    dataset,
    frame_index: int,
    state: DeformationState,
    run_cfg: RunConfig,
    budget: int,
    ledger: RunLedger | None = None,
    tolerance: float | None = None,
):
    """Optimize one frame's parameters in place (``frame_index`` 0-based).

    The loop evaluates the total loss (one render per iteration, counted in
    the ledger), backpropagates and applies one AdamW step; with a tolerance
    it stops once consecutive totals differ by less than it.  Returns
    ``(snapshot, ledger)`` with the final parameters deep-copied.
    """
    ledger = ledger if ledger is not None else RunLedger()
    pre = precompute_reference(
        dataset.frames[frame_index], run_cfg.loss, run_cfg.blur_sigma
    )
    iters, stopped = _optimize_group(
        [state], [frame_index], dataset.frames, [pre],
        dataset.template, dataset.camera, run_cfg,
        budget, ledger, tolerance, is_warmup=False, group_label=frame_index,
    )
    ledger.frame_iters[frame_index + 1] = iters
    if tolerance is not None and not stopped and iters == budget:
        ledger.budget_capped.append(frame_index + 1)
    return state.snapshot(), ledger


def _window_pass(states, members, frames, precomps, mesh, camera, run_cfg, ledger, is_warmup):
    """One forward evaluation of every frame in the window; returns the
    summed loss, the trainable leaves, and per-frame breakdowns."""
    total = None
    leaves_all = []
    xts = []
    per_frame = []
    for st, f, pre in zip(states, members, precomps):
        xt, leaves = forward(st, mesh.vertices)
        out = rasterize(xt, mesh, camera, run_cfg.sil_softness)
        ledger.render_count += 1
        if is_warmup:
            ledger.warmup_render_count += 1
        ledger.uv_clamp_count += out.uv_clamp_count
        loss, bd = total_loss(
            out, frames[f], xt, mesh, run_cfg.loss,
            blur_sigma=run_cfg.blur_sigma, counters=ledger.counters, precomp=pre,
        )
        total = loss if total is None else total + loss
        leaves_all.extend(leaves)
        xts.append(xt)
        per_frame.append([f, bd])
    # Temporal term over interior triples, attributed to the middle frame.
    if len(members) >= 3 and run_cfg.loss.temporal_weight > 0.0:
        for i in range(len(members) - 2):
            tl = temporal_loss(xts[i], xts[i + 1], xts[i + 2]) * run_cfg.loss.temporal_weight
            total = total + tl
            per_frame[i + 1][1].temporal += float(tl.value)
            per_frame[i + 1][1].total += float(tl.value)
    return total, leaves_all, [(f, bd) for f, bd in per_frame]


def _dump_renders(out_dir, states, members, mesh, camera, run_cfg, iteration):
    from pathlib import Path

    from .imageio import save_depth, save_mask, save_rgb

    dump = Path(out_dir) / "renders"
    dump.mkdir(parents=True, exist_ok=True)
    for st, f in zip(states, members):
        xt = forward(st, mesh.vertices)[0].value
        out = rasterize(xt, mesh, camera, run_cfg.sil_softness)
        stem = f"f{f + 1:04d}_i{iteration:05d}"
        save_rgb(dump / f"{stem}_rgb.png", out.rgb.value)
        save_mask(dump / f"{stem}_sil.png", out.silhouette.value)
        save_depth(dump / f"{stem}_depth.png", out.depth * 1000.0)


# ---------------------------------------------------------------------------
# Incremental re-rendering baseline (complexity demonstration only)
# ---------------------------------------------------------------------------


def run_incremental_baseline(dataset, run_cfg: RunConfig, iters_per_frame: int) -> RunLedger:
    """Re-renders frames 1..t on every iteration while optimizing frame t, the
    scheme whose render count grows as N*T*(T+1)/2.  Kept separate from the
    production strategies; exists to make the ledger comparison concrete.
    """
    mesh = dataset.template
    camera = dataset.camera
    ledger = RunLedger()
    state = _make_state(run_cfg, mesh.vertices)
    precomps = [
        precompute_reference(fr, run_cfg.loss, run_cfg.blur_sigma) for fr in dataset.frames
    ]
    for t in range(len(dataset.frames)):
        arrays = state.trainable_arrays()
        n_arrays = len(arrays)
        opt = OptimizerState.for_arrays(arrays)
        for k in range(iters_per_frame):
            total = None
            leaves_all = []
            for f in range(t + 1):
                xt, leaves = forward(state, mesh.vertices)
                out = rasterize(xt, mesh, camera, run_cfg.sil_softness)
                ledger.render_count += 1
                loss, bd = total_loss(
                    out, dataset.frames[f], xt, mesh, run_cfg.loss,
                    blur_sigma=run_cfg.blur_sigma, precomp=precomps[f],
                )
                total = loss if total is None else total + loss
                leaves_all.extend(leaves)
                if f == t:
                    ledger.record(f + 1, k, bd)
            backward(total)
            # Every re-rendered frame shares one parameter set here; fold the
            # per-render leaf gradients back onto the shared arrays.
            grads = []
            for j in range(n_arrays):
                g = leaves_all[j].grad.copy()
                for c in range(1, t + 1):
                    g += leaves_all[c * n_arrays + j].grad
                grads.append(g)
            adamw_step(arrays, grads, opt)
    return ledger
