"""Command line entry point ``ieti``."""
import argparse
import logging
import sys
from pathlib import Path

from .driver import SUITES, RunConfig, run_benchmark, run_config, suite_configs, write_csv
from .errors import IetiError
from .ieti import ALGORITHMS, PRECONDITIONERS, SCALINGS


def _parser():
    parser = argparse.ArgumentParser(prog="ieti", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve one configuration")
    solve.add_argument("--geometry", default="grid:2,2",
                       help="JSON file, grid:NX,NY[,WX,WY] or footprint")
    solve.add_argument("--degree", type=int, default=2)
    solve.add_argument("--refine", type=int, default=0)
    solve.add_argument("--elements", type=int, default=None,
                       help="spans per patch direction (overrides --refine)")
    solve.add_argument("--multiplicity", type=int, default=1)
    solve.add_argument("--algorithm", choices=ALGORITHMS, default="C", type=str.upper)
    solve.add_argument("--precond", choices=PRECONDITIONERS, default="scaled-dirichlet")
    solve.add_argument("--scaling", choices=SCALINGS, default="coefficient")
    solve.add_argument("--alpha", default="constant:1")
    solve.add_argument("--problem", choices=("benchmark", "manufactured"), default="benchmark")
    solve.add_argument("--dirichlet", choices=("west", "patch", "all"), default="west",
                       help="Dirichlet sides of grid geometries")
    solve.add_argument("--tol", type=float, default=1e-6)
    solve.add_argument("--max-it", type=int, default=500)
    solve.add_argument("--workers", type=int, default=1)
    solve.add_argument("--residuals", default=None, help="JSON file for the residual history")
    solve.add_argument("--out", default=None, help="CSV report")

    bench = sub.add_parser("bench", help="run a benchmark sweep")
    bench.add_argument("--suite", choices=SUITES, required=True)
    bench.add_argument("--geometry", default="footprint")
    bench.add_argument("--sizes", default="9,13,21,37", help="comma-separated H/h values")
    bench.add_argument("--degrees", default="2,3,4,5,6,7,8,9,10")
    bench.add_argument("--workers", type=int, default=1)
    bench.add_argument("--residuals", action="store_true", help="dump residual histories")
    bench.add_argument("--out", default=".")
    return parser


def _ints(text):
    return tuple(int(v) for v in text.split(",") if v)


def main(argv=None):
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "solve":
            config = RunConfig(args.geometry, args.degree, args.refine, args.elements,
                               args.multiplicity, args.algorithm, args.precond, args.scaling,
                               args.tol, args.max_it, args.alpha, args.problem,
                               args.dirichlet, args.workers)
            report = run_config(config, args.residuals)
            print(f"dofs={report.dofs} multipliers={report.multipliers} "
                  f"H/h={report.h_over_H_inv} iterations={report.iterations} "
                  f"kappa={report.kappa:.4g} l2_error={report.l2_error:.4g} "
                  f"seconds={report.seconds:.3g}")
            if args.out:
                write_csv([report], args.out)
            return 0
        configs = suite_configs(args.suite, args.geometry, _ints(args.sizes), _ints(args.degrees))
        out = Path(args.out)
        reports = run_benchmark(configs, out / f"{args.suite}.csv", workers=args.workers,
                                residual_dir=out / f"{args.suite}_residuals" if args.residuals else None)
        failed = sum(not r.converged for r in reports)
        print(f"{len(reports)} runs, {failed} failed, written to {out / (args.suite + '.csv')}")
        return 1 if failed else 0
    except IetiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
