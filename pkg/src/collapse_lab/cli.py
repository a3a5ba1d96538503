"""Command line entry points: run, resume, analyze."""

from __future__ import annotations

import argparse
import json
import os
import sys


def _apply_thread_cap() -> None:
    """Honor COLLAPSE_LAB_THREADS before the numeric stack spins up."""
    cap = os.environ.get("COLLAPSE_LAB_THREADS")
    if cap:
        for var in (
            "OMP_NUM_THREADS",
            "OPENBLAS_NUM_THREADS",
            "MKL_NUM_THREADS",
            "NUMEXPR_NUM_THREADS",
        ):
            os.environ.setdefault(var, cap)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="collapse-lab",
        description="Drift-diffusion aggregation laboratory: run, resume, analyze.",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="execute a run from a config file or preset")
    p_run.add_argument("config", nargs="?", help="path to a key = value config file")
    p_run.add_argument("--preset", help="use a shipped preset instead of a config file")
    p_run.add_argument("--output-dir", help="override the config's output_dir")
    p_run.add_argument(
        "--interrupt-after",
        type=int,
        default=None,
        help="stop after N steps with a checkpoint (for staged runs and tests)",
    )

    p_resume = sub.add_parser("resume", help="continue an interrupted run")
    p_resume.add_argument("checkpoint", help="path to the run's checkpoint.bin")

    p_an = sub.add_parser("analyze", help="post-process a completed run directory")
    p_an.add_argument("run_dir")
    p_an.add_argument("--x0", help="collapse window center 'x,y' (default: density argmax)")
    p_an.add_argument("--b-list", default="5,10,20", help="window factors b, comma separated")
    p_an.add_argument("--epsilon", type=float, default=0.5, help="quantization tolerance")
    p_an.add_argument("--y-max", type=float, default=10.0, help="frame half-width in y")
    p_an.add_argument("--n-y", type=int, default=64, help="frame resolution")
    return parser


def main(argv=None) -> int:
    _apply_thread_cap()
    args = _build_parser().parse_args(argv)
    from . import presets, runner

    try:
        if args.verb == "run":
            if (args.config is None) == (args.preset is None):
                print("run needs exactly one of: a config path, or --preset NAME", file=sys.stderr)
                return 2
            config = presets.preset_text(args.preset) if args.preset else args.config
            run_dir = runner.run(
                config,
                output_dir=args.output_dir,
                interrupt_after_steps=args.interrupt_after,
            )
            print(f"run directory: {run_dir}")
        elif args.verb == "resume":
            run_dir = runner.resume(args.checkpoint)
            print(f"run directory: {run_dir}")
        elif args.verb == "analyze":
            x0 = None
            if args.x0:
                parts = args.x0.split(",")
                x0 = (float(parts[0]), float(parts[1]))
            b_list = tuple(float(b) for b in args.b_list.split(",") if b.strip())
            summary = runner.analyze(
                args.run_dir,
                x0=x0,
                b_list=b_list,
                epsilon=args.epsilon,
                y_max=args.y_max,
                n_y=args.n_y,
            )
            print(json.dumps(summary, indent=2))
    except (runner.ConfigError, runner.CheckpointError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
