"""Command-line interface: synth, reconstruct, evaluate, gradcheck, bench."""

from __future__ import annotations

import argparse
import sys

from .config import RunConfig


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="sftkit",
        description="Correspondence-free shape-from-template reconstruction",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic sequence")
    p_synth.add_argument("--out", required=True, help="output dataset directory")
    p_synth.add_argument("--family", default="sine-bend",
                         choices=["sine-bend", "corner-fold", "compound"])
    p_synth.add_argument("--frames", type=int, default=10)
    p_synth.add_argument("--grid", type=int, default=16)
    p_synth.add_argument("--sheet-size", type=float, default=1.0)
    p_synth.add_argument("--image-size", type=int, default=128)
    p_synth.add_argument("--amplitude", type=float, default=0.1)
    p_synth.add_argument("--frequency", type=float, default=1.0)
    p_synth.add_argument("--camera-distance", type=float, default=2.0)
    p_synth.add_argument("--texture", default="checkerboard",
                         choices=["checkerboard", "noise", "image"])
    p_synth.add_argument("--texture-file", default=None)
    p_synth.add_argument("--brightness-ramp", type=float, default=0.0)
    p_synth.add_argument("--translate", default=None,
                         help="per-frame translation vx,vy,vz in scene units")
    p_synth.add_argument("--seed", type=int, default=0)

    p_rec = sub.add_parser("reconstruct", help="reconstruct a sequence")
    p_rec.add_argument("--data", required=True, help="sequence directory")
    p_rec.add_argument("--out", required=True, help="run output directory")
    p_rec.add_argument("--config", default=None, help="JSON config file; flags win")
    p_rec.add_argument("--strategy", choices=["frame", "window", "adaptive"], default=None)
    p_rec.add_argument("--preset", choices=["small", "base", "large"], default=None)
    p_rec.add_argument("--deform", choices=["network", "vertex-offset"], default=None)
    p_rec.add_argument("--alpha", type=float, default=None)
    p_rec.add_argument("--sigma", type=float, default=None)
    p_rec.add_argument("--no-adaptive-loss", action="store_true")
    p_rec.add_argument("--no-image-grad", action="store_true")
    p_rec.add_argument("--no-silhouette", action="store_true")
    p_rec.add_argument("--inext", choices=["eig", "literal"], default=None)
    p_rec.add_argument("--warmup", type=int, default=None)
    p_rec.add_argument("--iters", type=int, default=None)
    p_rec.add_argument("--window", type=int, default=None)
    p_rec.add_argument("--iters-per-window", type=int, default=None)
    p_rec.add_argument("--tol", type=float, default=None)
    p_rec.add_argument("--seed", type=int, default=None)
    p_rec.add_argument("--dump-renders", type=int, default=None, metavar="N")
    p_rec.add_argument("--cold-restart", action="store_true")

    p_eval = sub.add_parser("evaluate", help="score a finished run")
    p_eval.add_argument("--run", required=True, help="run output directory")
    p_eval.add_argument("--data", required=True, help="sequence directory")
    p_eval.add_argument("--chamfer-unsquared", action="store_true",
                        help="plain instead of squared nearest-neighbor distances")

    p_gc = sub.add_parser("gradcheck", help="finite-difference gradient validation")
    p_gc.add_argument("--seed", type=int, default=0)
    p_gc.add_argument("--scenes", type=int, default=20)
    p_gc.add_argument("--size", type=int, default=64)
    p_gc.add_argument("--only", default=None,
                      help="run a single family (rgb, silhouette, filters, "
                           "inextensibility, network)")

    p_bench = sub.add_parser("bench", help="compare kernel backends")
    p_bench.add_argument("--sizes", default="64,128,256")
    p_bench.add_argument("--repeats", type=int, default=5)

    args = parser.parse_args(argv)
    return {
        "synth": _cmd_synth,
        "reconstruct": _cmd_reconstruct,
        "evaluate": _cmd_evaluate,
        "gradcheck": _cmd_gradcheck,
        "bench": _cmd_bench,
    }[args.command](args)


def _cmd_synth(args) -> int:
    from .synth import ScenarioConfig, generate_dataset

    velocity = (0.0, 0.0, 0.0)
    if args.translate:
        parts = [float(x) for x in args.translate.split(",")]
        if len(parts) != 3:
            print("--translate expects vx,vy,vz", file=sys.stderr)
            return 2
        velocity = tuple(parts)
    cfg = ScenarioConfig(
        grid_resolution=args.grid,
        sheet_size=args.sheet_size,
        deformation=args.family,
        amplitude=args.amplitude,
        frequency=args.frequency,
        frame_count=args.frames,
        camera_distance=args.camera_distance,
        image_size=args.image_size,
        texture_kind=args.texture,
        texture_file=args.texture_file,
        translation_velocity=velocity,
        brightness_ramp=args.brightness_ramp,
        seed=args.seed,
    )
    seq = generate_dataset(cfg, args.out)
    print(f"wrote {seq.frame_count} frames to {args.out}")
    return 0


def _build_run_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg.with_seed(args.seed)
    if args.preset is not None:
        cfg.preset = args.preset
        from .network import NetworkConfig

        cfg.network = NetworkConfig.preset(args.preset, seed=cfg.seed)
    if args.deform is not None:
        cfg.deform_mode = args.deform
    if args.strategy is not None:
        cfg.strategy.kind = args.strategy
    if args.alpha is not None:
        cfg.loss.alpha = args.alpha
    if args.sigma is not None:
        cfg.loss.sigma = args.sigma
    if args.no_adaptive_loss:
        cfg.loss.use_adaptive = False
    if args.no_image_grad:
        cfg.loss.use_image_gradient = False
    if args.no_silhouette:
        cfg.loss.use_silhouette = False
    if args.inext is not None:
        cfg.loss.inext_variant = args.inext
    if args.warmup is not None:
        cfg.strategy.warmup_iters = args.warmup
    if args.iters is not None:
        cfg.strategy.iters_per_frame = args.iters
    if args.window is not None:
        cfg.strategy.window_size = args.window
    if args.iters_per_window is not None:
        cfg.strategy.iters_per_window = args.iters_per_window
    if args.tol is not None:
        cfg.strategy.tolerance = args.tol
    if args.dump_renders is not None:
        cfg.dump_every = args.dump_renders
    if args.cold_restart:
        cfg.strategy.cold_restart = True
    cfg.out_dir = args.out
    return cfg


def _cmd_reconstruct(args) -> int:
    from .dataset import load_sequence
    from .pipeline import reconstruct

    dataset = load_sequence(args.data)
    cfg = _build_run_config(args)
    run = reconstruct(dataset, cfg)
    n_fail = len(run.ledger.failures)
    print(
        f"reconstructed {dataset.frame_count} frames "
        f"({run.ledger.render_count} renders, {run.wall_clock:.1f}s, "
        f"{n_fail} failures) -> {args.out}"
    )
    return 1 if n_fail else 0


def _cmd_evaluate(args) -> int:
    from .dataset import load_sequence
    from .pipeline import evaluate

    dataset = load_sequence(args.data)
    result = evaluate(args.run, dataset, squared_chamfer=not args.chamfer_unsquared)
    for notice in result.notices:
        print(notice)
    mc = result.mean_chamfer_x1e4
    md = result.mean_depth_rmse_mm
    if mc is not None:
        print(f"mean chamfer (x1e4): {mc:.4f}")
    if md is not None:
        print(f"mean depth RMSE (mm): {md:.4f}")
    print(f"wrote {args.run}/metrics.csv and summary.txt")
    return 0


def _cmd_gradcheck(args) -> int:
    from .gradcheck import run_gradcheck

    result = run_gradcheck(
        seed=args.seed, scenes=args.scenes, size=args.size, only=args.only
    )
    for line in result.lines():
        print(line)
    return 0 if result.passed else 1


def _cmd_bench(args) -> int:
    from .bench import format_benchmark, run_benchmark

    sizes = tuple(int(s) for s in args.sizes.split(","))
    rows, has_compiled = run_benchmark(sizes=sizes, repeats=args.repeats)
    print(format_benchmark(rows, has_compiled))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
