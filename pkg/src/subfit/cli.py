"""Command line entry point: ``subfit fit | sweep-rate | steps-to-error``."""

from __future__ import annotations

import argparse
import logging
import sys

from .fitter import FitConfig
from .harness import ExperimentSpec, run_fit, run_rate_sweep, run_steps_to_error
from .mesh import MeshError

EXIT_OK, EXIT_USER, EXIT_INTERNAL = 0, 1, 2


def _common(p, multi_rate=False):
    p.add_argument("--input", required=True, help="input OBJ mesh")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--control-count", type=int, required=True)
    p.add_argument("--subdiv", type=int, default=3)
    if multi_rate:
        p.add_argument("--rate", type=float, nargs="+", required=True,
                       help="sample rates in percent")
    else:
        p.add_argument("--rate", type=float, default=100.0, help="sample rate in percent")
    p.add_argument("--iters", type=int, default=50)
    p.add_argument("--eps", type=float, default=1e-5,
                   help="relative-change stopping threshold (0 disables)")
    p.add_argument("--freeze-after", type=int, default=None,
                   help="iterations that refresh the fitting targets (default min(5, iters))")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--error-mode", choices=("batch", "full"), default="batch")
    p.add_argument("--grid-res", type=int, default=100)
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="subfit",
        description="Fit a Loop subdivision surface to a triangle mesh by "
                    "stochastic geometric iteration.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="single fit")
    _common(p)

    p = sub.add_parser("sweep-rate", help="one fit per sample rate from a shared control mesh")
    _common(p, multi_rate=True)
    p.add_argument("--repeats", type=int, default=1)

    p = sub.add_parser("steps-to-error",
                       help="iterations each rate needs to reach full-batch reference errors")
    _common(p, multi_rate=True)
    p.add_argument("--ref-iters", type=int, nargs="+", default=[30, 50],
                   help="full-batch iterations whose errors become the targets")
    p.add_argument("--ref-errors", type=float, nargs="+",
                   help="explicit target errors (skip the reference run)")
    p.add_argument("--repeats", type=int, default=1)
    return parser


def _config(args, rate):
    return FitConfig(
        control_count=args.control_count,
        subdivision_levels=args.subdiv,
        sample_rate=rate,
        epsilon=args.eps,
        max_iterations=args.iters,
        freeze_after=(min(5, args.iters) if args.freeze_after is None
                      else args.freeze_after),
        rng_seed=args.seed,
        error_mode=args.error_mode,
        grid_resolution=args.grid_res,
    )


def _run(args):
    if args.command == "fit":
        spec = ExperimentSpec(args.input, _config(args, args.rate), args.out)
        summary, result = run_fit(spec)
        print(f"{summary.model}: {summary.original_vertices} -> {summary.control_vertices} "
              f"control points, {len(result.trace)} iterations, "
              f"full RMS {summary.final_full_rms:.6g}, {summary.total_seconds:.3f} s")
    elif args.command == "sweep-rate":
        spec = ExperimentSpec(args.input, _config(args, 100.0), args.out,
                              sweep="sample_rate", sweep_values=args.rate,
                              repeats=args.repeats)
        for label, res in run_rate_sweep(spec).items():
            print(f"{label}: {len(res.trace)} iterations, full RMS {res.final_full_rms:.6g}")
    else:
        spec = ExperimentSpec(args.input, _config(args, 100.0), args.out,
                              sweep="sample_rate", sweep_values=args.rate,
                              stop_mode="reference_error",
                              reference_iterations=args.ref_iters, repeats=args.repeats)
        for row in run_steps_to_error(spec, reference_errors=args.ref_errors):
            flag = "" if row.reached else " (not reached)"
            print(f"r={row.sample_rate:g} run {row.run}: error {row.reference_error:.6g} "
                  f"after {row.steps} steps, {row.seconds:.3f} s{flag}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except (MeshError, ValueError, OSError) as exc:
        print(f"subfit: error: {exc}", file=sys.stderr)
        return EXIT_USER
    except Exception as exc:  # noqa: BLE001
        print(f"subfit: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
