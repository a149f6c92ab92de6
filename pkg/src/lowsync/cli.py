"""Command-line harness.

Exit codes: 0 converged, 1 usage error, 2 stall/maxiter, 3 breakdown or
cancellation failure.
"""

from __future__ import annotations

import argparse
import sys

from .gmres import GmresConfig, canonical_method
from .harness import EXIT_USAGE, ExperimentSpec, run_experiment


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; the harness contract wants 1.
    def error(self, message):
        raise _UsageError(message)


def build_parser():
    p = _Parser(
        prog="lowsync",
        description="Run a GMRES variant on a generated or loaded sparse system "
                    "and write convergence/reduction-count output.",
        add_help=True,
        allow_abbrev=False,
    )
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--matrix", metavar="PATH",
                     help="MatrixMarket coordinate file (real, general/symmetric)")
    src.add_argument("--problem", metavar="SPEC",
                     help="built-in problem: simoncini[:n[,first]] or laplace2d[:nx]")
    p.add_argument("--rhs", default="random:42", metavar="KIND",
                   help="random[:seed] (unit norm) or ones-image (b = A*ones); "
                        "default random:42")
    p.add_argument("--method", default="one-sync", metavar="NAME",
                   help="mgs-l1 | cgs1-ghysels | cgs2 | two-sync | one-sync | "
                        "pipeline2 (default one-sync)")
    p.add_argument("--restart", type=int, default=50, metavar="M",
                   help="restart length (default 50)")
    p.add_argument("--max-restarts", type=int, default=10, metavar="K",
                   help="restart cycles before giving up (default 10)")
    p.add_argument("--tol", type=float, default=1e-6, metavar="T",
                   help="relative residual tolerance (default 1e-6)")
    p.add_argument("--precond", choices=("none", "jacobi"), default="none")
    p.add_argument("--csv", metavar="PATH", help="per-iteration CSV output")
    p.add_argument("--json", metavar="PATH", help="JSON summary output")
    p.add_argument("--plot", metavar="PATH", help="gnuplot-ready data output")
    p.add_argument("--diag-every", type=int, default=None, metavar="K",
                   help="diagnostics cadence; 0 disables (default: every "
                        "iteration up to n=2000, off above)")
    return p


def _parse_problem(args):
    if args.matrix:
        return {"problem": "mtx", "matrix_path": args.matrix}
    spec = args.problem
    name, _, rest = spec.partition(":")
    name = name.strip().lower()
    if name == "simoncini":
        out = {"problem": "simoncini"}
        if rest:
            parts = rest.split(",")
            if len(parts) > 2:
                raise _UsageError(f"bad problem spec {spec!r}")
            out["n"] = int(parts[0])
            if len(parts) == 2:
                out["first_diag"] = float(parts[1])
        return out
    if name == "laplace2d":
        out = {"problem": "laplace2d"}
        if rest:
            out["nx"] = int(rest)
        return out
    raise _UsageError(f"unknown problem {name!r}")


def _parse_rhs(arg):
    kind, _, rest = arg.partition(":")
    kind = kind.strip().lower().replace("-", "_")
    if kind == "ones_image":
        return "ones_image", None
    if kind == "random":
        seed = int(rest) if rest else 42
        return "random", seed
    raise _UsageError(f"unknown rhs {arg!r}")


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        problem = _parse_problem(args)
        rhs, seed = _parse_rhs(args.rhs)
        config = GmresConfig(
            restart_m=args.restart,
            max_restarts=args.max_restarts,
            rel_tol=args.tol,
            method=canonical_method(args.method),
            precond=args.precond,
        )
        spec = ExperimentSpec(
            rhs=rhs,
            seed=seed,
            solver=config,
            csv_path=args.csv,
            json_path=args.json,
            plot_path=args.plot,
            diagnostics_every=args.diag_every,
            **problem,
        )
    except (_UsageError, ValueError) as exc:
        parser.print_usage(sys.stderr)
        print(f"lowsync: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return run_experiment(spec)
    except (OSError, ValueError) as exc:
        print(f"lowsync: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
