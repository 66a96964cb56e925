"""Command-line entry point.

Exit codes: 0 success, 1 invalid input or failed solve, 2 results written but
at least one level finished short of Optimal.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .hierarchy import Scheme, run
from .moments import MomentOracle
from .oracle import UnsupportedShape, mc_measure, restricted_moments_quadrature, stokes_residual
from .polycore import enumerate_multiindices
from .problem import Problem, ProblemError, atomic_write, load
from .relaxation import RelaxationError, build_scheme1, build_scheme3
from .sdp import export_sdpa

log = logging.getLogger("semialg")

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INACCURATE = 2

STOKES_TOL = 1e-8


def _configure_logging() -> None:
    level = os.environ.get("SEMIALG_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _error(msg: str) -> int:
    print(f"semialg: error: {msg}", file=sys.stderr)
    return EXIT_FAIL


def _apply_overrides(problem: Problem, args) -> Problem:
    kw = {}
    if getattr(args, "d_min", None) is not None:
        kw["d_min"] = args.d_min
    if getattr(args, "d_max", None) is not None:
        kw["d_max"] = args.d_max
    if getattr(args, "scheme1", False):
        kw["scheme"] = Scheme.SCHEME1
    if getattr(args, "no_lower", False):
        kw["compute_lower"] = False
    if getattr(args, "tol", None) is not None:
        kw["solver"] = replace(problem.solver, tol_gap=args.tol, tol_feas=args.tol)
    return replace(problem, **kw)


# -- commands ---------------------------------------------------------------


def cmd_bounds(problem_path, out_path, **overrides) -> int:
    """Run the hierarchy and write ``<out_path>.csv`` and ``<out_path>.json``."""
    args = argparse.Namespace(**overrides)
    csv_path, json_path = Path(f"{out_path}.csv"), Path(f"{out_path}.json")
    if Path(problem_path).resolve() in (csv_path.resolve(), json_path.resolve()):
        return _error(f"output {json_path} would overwrite the problem file")
    try:
        problem = _apply_overrides(load(problem_path), args)
        config = problem.hierarchy_config()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            result = run(problem.set, MomentOracle(problem.measure), config)
    except (OSError, ProblemError, RelaxationError, ValueError) as exc:
        return _error(str(exc))

    text = result.to_csv()
    atomic_write(csv_path, text)
    atomic_write(json_path, json.dumps(result.to_dict(), indent=1) + "\n")
    sys.stdout.write(text)

    if any(lv.upper_raw is None for lv in result.levels):
        return _error("an upper-bound solve failed; see the status columns")
    if result.all_optimal:
        return EXIT_OK
    return EXIT_INACCURATE


def _level_instance(problem: Problem, d: int):
    oracle = MomentOracle(problem.measure)
    objective = problem.hierarchy_config().objective(problem.measure.n)
    if problem.scheme is Scheme.SCHEME1:
        return build_scheme1(problem.set, oracle, d, objective)
    return build_scheme3(problem.set, oracle, d, problem.f_stokes, objective=objective)


def cmd_export_sdpa(problem_path, d: int, out_path, *, mode: str = "reduced", scheme1: bool = False) -> int:
    """Write the level-``d`` upper-bound instance in SDPA sparse format."""
    try:
        problem = load(problem_path)
        if scheme1:
            problem = replace(problem, scheme=Scheme.SCHEME1)
        text = export_sdpa(_level_instance(problem, d), mode=mode)
    except (OSError, ProblemError, RelaxationError, ValueError) as exc:
        return _error(str(exc))
    atomic_write(out_path, text)
    return EXIT_OK


def cmd_stokes_check(problem_path, d: int) -> int:
    """Print the largest Stokes-row residual on quadrature moments."""
    try:
        problem = load(problem_path)
        res = stokes_residual(problem.set, problem.measure, d, problem.f_stokes)
    except UnsupportedShape as exc:
        return _error(f"unsupported shape for quadrature: {exc}")
    except (OSError, ProblemError, RelaxationError, ValueError) as exc:
        return _error(str(exc))
    ok = res <= STOKES_TOL
    print(f"max_residual={res:.3e} tol={STOKES_TOL:.0e} {'ok' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_mc(problem_path, samples: int, seed: int, workers: int = 1) -> int:
    try:
        problem = load(problem_path)
        if samples < 1:
            raise ValueError("sample count must be >= 1")
        est = mc_measure(problem.set, problem.measure, samples, seed, workers=workers)
    except (OSError, ProblemError, ValueError) as exc:
        return _error(str(exc))
    print(json.dumps({"value": est.value, "stderr": est.stderr, "N": est.samples, "seed": est.seed}))
    return EXIT_OK


def _moments_csv(basis, values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["alpha", "value"])
    for a, v in zip(basis, values):
        w.writerow([" ".join(map(str, a)), repr(float(v))])
    return buf.getvalue()


def cmd_moments(problem_path, d: int, *, restricted: bool = False) -> int:
    """Moments of the reference measure, or of its restriction to the set."""
    try:
        problem = load(problem_path)
        if d < 0:
            raise ValueError("d must be >= 0")
        if restricted:
            values = restricted_moments_quadrature(problem.set, problem.measure, d)
        else:
            values = MomentOracle(problem.measure).moment_vector(2 * d)
    except UnsupportedShape as exc:
        return _error(f"unsupported shape for quadrature: {exc}")
    except (OSError, ProblemError, ValueError) as exc:
        return _error(str(exc))
    sys.stdout.write(_moments_csv(enumerate_multiindices(problem.measure.n, 2 * d), values))
    return EXIT_OK


# -- argument parsing -------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semialg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bounds", help="run the bound hierarchy")
    b.add_argument("problem")
    b.add_argument("-o", "--out", help="output prefix for .csv and .json (default: <problem>_bounds)")
    b.add_argument("--d-min", type=int)
    b.add_argument("--d-max", type=int)
    b.add_argument("--scheme1", action="store_true", help="use the relaxation without Stokes rows")
    b.add_argument("--no-lower", action="store_true", help="skip complement-cell lower bounds")
    b.add_argument("--tol", type=float, help="solver gap and feasibility tolerance")

    e = sub.add_parser("export-sdpa", help="write one level in SDPA sparse format")
    e.add_argument("problem")
    e.add_argument("--d", type=int, required=True)
    e.add_argument("-o", "--out", required=True)
    e.add_argument("--mode", choices=("reduced", "paired"), default="reduced")
    e.add_argument("--scheme1", action="store_true")

    m = sub.add_parser("mc", help="Monte Carlo estimate of the measure of the set")
    m.add_argument("problem")
    m.add_argument("-N", "--samples", type=int, default=10**6)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--workers", type=int, default=1)

    mo = sub.add_parser("moments", help="print moments up to degree 2d as CSV")
    mo.add_argument("problem")
    mo.add_argument("--d", type=int, required=True)
    mo.add_argument("--restricted", action="store_true", help="moments of the measure restricted to the set (quadrature)")

    s = sub.add_parser("stokes-check", help="check the Stokes rows on quadrature moments")
    s.add_argument("problem")
    s.add_argument("--d", type=int, required=True)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if args.command == "bounds":
        out = args.out or str(Path(args.problem).with_suffix("")) + "_bounds"
        return cmd_bounds(
            args.problem,
            out,
            d_min=args.d_min,
            d_max=args.d_max,
            scheme1=args.scheme1,
            no_lower=args.no_lower,
            tol=args.tol,
        )
    if args.command == "export-sdpa":
        return cmd_export_sdpa(args.problem, args.d, args.out, mode=args.mode, scheme1=args.scheme1)
    if args.command == "mc":
        return cmd_mc(args.problem, args.samples, args.seed, args.workers)
    if args.command == "moments":
        return cmd_moments(args.problem, args.d, restricted=args.restricted)
    return cmd_stokes_check(args.problem, args.d)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
