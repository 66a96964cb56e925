"""Bracketing sequences of upper and lower bounds over relaxation levels.

At each level ``d`` the upper bound maximizes over the relaxation of the set
itself; the lower bound subtracts the upper bounds of the complement cells
from the total integral.  Raw values are kept alongside cumulative
min/max sequences, which are the ones to quote.
"""

from __future__ import annotations

import csv
import enum
import io
import logging
import math
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .moments import MomentOracle
from .polycore import Poly, enumerate_multiindices
from .relaxation import (
    RelaxationError,
    SemiAlgebraicSet,
    build_scheme1,
    build_scheme3,
    complement_cells,
    prepare_set,
)
from .sdp import SdpSolution, SolverConfig, Status, solve

log = logging.getLogger(__name__)

#: statuses whose objective value is reported as a bound
USABLE = (Status.OPTIMAL, Status.INACCURATE, Status.ITER_LIMIT)

CSV_COLUMNS = (
    "d",
    "upper_raw",
    "upper_mono",
    "lower_raw",
    "lower_mono",
    "gap",
    "status_upper",
    "status_lower",
    "seconds",
)


class Scheme(str, enum.Enum):
    SCHEME1 = "scheme1"
    SCHEME3 = "scheme3"


class ConditioningWarning(RuntimeWarning):
    """A raw bound sequence moved the wrong way by more than solver noise.

    The usual cause is the poor conditioning of the monomial basis at large
    levels.
    """


@dataclass(frozen=True)
class HierarchyConfig:
    d_min: int
    d_max: int
    scheme: Scheme = Scheme.SCHEME3
    #: integrand ``f``; ``None`` means the constant 1 (the measure of the set)
    objective_f: Optional[Poly] = None
    #: Stokes multiplier for the set itself; cells always use their own product
    f_stokes: Optional[Poly] = None
    compute_lower: bool = True
    solver: SolverConfig = field(default_factory=SolverConfig)
    #: bound the integral of ``f**2`` instead of ``f``
    square_objective: bool = False
    #: explicit complement cells (default: staircase decomposition)
    cells: Optional[Tuple[SemiAlgebraicSet, ...]] = None
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme(self.scheme))
        if self.cells is not None:
            object.__setattr__(self, "cells", tuple(self.cells))
        if not 0 <= self.d_min <= self.d_max:
            raise ValueError(f"need 0 <= d_min <= d_max, got {self.d_min}, {self.d_max}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.square_objective and self.objective_f is None:
            raise ValueError("square_objective needs objective_f")

    def objective(self, n: int) -> Poly:
        f = Poly.constant(n, 1.0) if self.objective_f is None else self.objective_f
        return f * f if self.square_objective else f

    @property
    def quantity(self) -> str:
        if self.objective_f is None:
            return "measure"
        return "integral_f_squared" if self.square_objective else "integral_f"


@dataclass
class Bound:
    value: float
    status: Status
    #: half-width of the solver-accuracy annotation on ``value``
    uncertainty: float
    solution: SdpSolution
    seconds: float

    @property
    def u_trunc(self) -> np.ndarray:
        return self.solution.u


@dataclass
class LevelResult:
    d: int
    upper_raw: Optional[float]
    upper_mono: Optional[float]
    lower_raw: Optional[float]
    lower_mono: Optional[float]
    status_upper: str
    status_lower: str
    seconds: float
    upper_uncertainty: float = math.nan
    cell_uppers: List[Optional[float]] = field(default_factory=list)
    cell_status: List[str] = field(default_factory=list)
    u_trunc: Optional[np.ndarray] = None
    primal_obj: Optional[float] = None
    dual_obj: Optional[float] = None
    iterations: int = 0
    notes: List[str] = field(default_factory=list)

    @property
    def gap(self) -> Optional[float]:
        if self.upper_mono is None or self.lower_mono is None:
            return None
        return self.upper_mono - self.lower_mono


@dataclass
class HierarchyResult:
    n: int
    quantity: str
    scheme: str
    total: float
    levels: List[LevelResult]

    def level(self, d: int) -> LevelResult:
        for lv in self.levels:
            if lv.d == d:
                return lv
        raise KeyError(d)

    @property
    def all_optimal(self) -> bool:
        return all(
            lv.status_upper == Status.OPTIMAL.value
            and lv.status_lower in (Status.OPTIMAL.value, "skipped")
            for lv in self.levels
        )

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for lv in self.levels:
            w.writerow(
                [
                    lv.d,
                    _num(lv.upper_raw),
                    _num(lv.upper_mono),
                    _num(lv.lower_raw),
                    _num(lv.lower_mono),
                    _num(lv.gap),
                    lv.status_upper,
                    lv.status_lower,
                    f"{lv.seconds:.3f}",
                ]
            )
        return buf.getvalue()

    def to_dict(self) -> dict:
        basis = None
        levels = []
        for lv in self.levels:
            entry = {
                "d": lv.d,
                "upper_raw": lv.upper_raw,
                "upper_mono": lv.upper_mono,
                "upper_uncertainty": None if math.isnan(lv.upper_uncertainty) else lv.upper_uncertainty,
                "lower_raw": lv.lower_raw,
                "lower_mono": lv.lower_mono,
                "gap": lv.gap,
                "status_upper": lv.status_upper,
                "status_lower": lv.status_lower,
                "cell_uppers": lv.cell_uppers,
                "cell_status": lv.cell_status,
                "primal_obj": lv.primal_obj,
                "dual_obj": lv.dual_obj,
                "iterations": lv.iterations,
                "seconds": lv.seconds,
                "notes": lv.notes,
            }
            if lv.u_trunc is not None:
                basis = enumerate_multiindices(self.n, 2 * lv.d)
                entry["u_trunc"] = {
                    "alpha": [list(a) for a in basis],
                    "value": [float(v) for v in lv.u_trunc],
                }
            levels.append(entry)
        return {
            "n": self.n,
            "quantity": self.quantity,
            "scheme": self.scheme,
            "total": self.total,
            "levels": levels,
        }


def _num(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


# ---------------------------------------------------------------------------


def _build(s: SemiAlgebraicSet, oracle: MomentOracle, d: int, config: HierarchyConfig, f_stokes, objective):
    if config.scheme is Scheme.SCHEME1:
        return build_scheme1(s, oracle, d, objective)
    return build_scheme3(s, oracle, d, f_stokes, objective=objective)


def _uncertainty(sol: SdpSolution, tol_gap: float) -> float:
    scale = 1.0 + abs(sol.primal_obj)
    if sol.status is Status.OPTIMAL:
        return tol_gap * scale
    widened = 100.0 * tol_gap * scale
    if sol.status is Status.INACCURATE:
        return widened
    return max(widened, abs(sol.primal_obj - sol.dual_obj))


def _solve_bound(s, oracle, d, config, f_stokes=None) -> Bound:
    t0 = time.perf_counter()
    inst = _build(s, oracle, d, config, f_stokes, config.objective(s.n))
    sol = solve(inst, config.solver)
    return Bound(_bound_value(sol), sol.status, _uncertainty(sol, config.solver.tol_gap), sol, time.perf_counter() - t0)


def _bound_value(sol: SdpSolution) -> float:
    # short of optimality the primal objective can sit below the optimum;
    # the dual side is the conservative one for a maximization
    if sol.status is Status.OPTIMAL:
        return sol.primal_obj
    return max(sol.primal_obj, sol.dual_obj)


def upper_bound(s: SemiAlgebraicSet, oracle: MomentOracle, d: int, config: HierarchyConfig) -> Bound:
    """Level-``d`` upper bound on the integral of the objective over ``s``."""
    return _solve_bound(s, oracle, d, config, config.f_stokes)


def _cells(s: SemiAlgebraicSet, oracle: MomentOracle, config: HierarchyConfig) -> List[SemiAlgebraicSet]:
    if config.cells is not None:
        return [prepare_set(c, oracle.spec) for c in config.cells]
    return complement_cells(s, oracle.spec)


@dataclass
class LowerBound:
    value: Optional[float]
    status: str
    cells: List[Optional[Bound]]
    notes: List[str] = field(default_factory=list)


def _assemble_lower(total: float, cell_bounds: Sequence[Optional[Bound]], notes: List[str]) -> LowerBound:
    if any(b is None for b in cell_bounds):
        return LowerBound(None, "failed", list(cell_bounds), notes)
    bad = [b for b in cell_bounds if b.status not in USABLE]
    if bad:
        notes = notes + [f"complement cell ended with status {b.status.value}" for b in bad]
        return LowerBound(None, "failed", list(cell_bounds), notes)
    status = Status.OPTIMAL
    for worse in (Status.INACCURATE, Status.ITER_LIMIT):
        if any(b.status is worse for b in cell_bounds):
            status = worse
    value = total - sum(b.value for b in cell_bounds)
    return LowerBound(value, status.value, list(cell_bounds), notes)


def lower_bound(s: SemiAlgebraicSet, oracle: MomentOracle, d: int, config: HierarchyConfig) -> LowerBound:
    """Total integral minus the upper bounds of the complement cells.

    The value is absent (``None``) when any cell cannot be solved.
    """
    s = prepare_set(s, oracle.spec)
    total = oracle.integrate(config.objective(s.n))
    bounds, notes = [], []
    for k, cell in enumerate(_cells(s, oracle, config)):
        try:
            bounds.append(_solve_bound(cell, oracle, d, config))
        except RelaxationError as exc:
            notes.append(f"cell {k}: {exc}")
            bounds.append(None)
    return _assemble_lower(total, bounds, notes)


def run(s: SemiAlgebraicSet, oracle: MomentOracle, config: HierarchyConfig) -> HierarchyResult:
    """Solve levels ``d_min..d_max`` and assemble the bracketing sequences."""
    s = prepare_set(s, oracle.spec)
    if config.d_min < s.d0:
        raise RelaxationError(f"d_min={config.d_min} is below the minimal level d0={s.d0}")
    objective = config.objective(s.n)
    total = oracle.integrate(objective)
    cells = _cells(s, oracle, config) if config.compute_lower else []
    levels = list(range(config.d_min, config.d_max + 1))

    # independent jobs keyed by (level, cell); cell -1 is the set itself
    jobs: List[Tuple[int, int]] = [(d, -1) for d in levels]
    jobs += [(d, k) for d in levels for k in range(len(cells))]

    def work(job):
        d, k = job
        try:
            if k < 0:
                return _solve_bound(s, oracle, d, config, config.f_stokes)
            return _solve_bound(cells[k], oracle, d, config)
        except RelaxationError as exc:
            return exc

    if config.workers > 1:
        with ThreadPoolExecutor(config.workers) as pool:
            done = list(pool.map(work, jobs))
    else:
        done = [work(j) for j in jobs]
    results: Dict[Tuple[int, int], object] = dict(zip(jobs, done))

    tol = config.solver.tol_gap
    out: List[LevelResult] = []
    up_mono: Optional[float] = None
    lo_mono: Optional[float] = None
    prev_up: Optional[float] = None
    prev_lo: Optional[float] = None
    for d in levels:
        notes: List[str] = []
        ub = results[(d, -1)]
        if isinstance(ub, Exception):
            raise ub
        seconds = ub.seconds
        upper = ub.value if ub.status in USABLE else None
        if upper is not None:
            up_mono = upper if up_mono is None else min(up_mono, upper)
            if prev_up is not None and upper > prev_up + 10 * tol * (1 + abs(prev_up)):
                msg = f"upper bound rose from {prev_up:.10g} to {upper:.10g} at d={d}; likely conditioning of the monomial basis"
                warnings.warn(msg, ConditioningWarning, stacklevel=2)
                notes.append(msg)
            prev_up = upper

        lower = None
        status_lower = "skipped"
        cell_vals: List[Optional[float]] = []
        cell_status: List[str] = []
        if config.compute_lower:
            cell_bounds: List[Optional[Bound]] = []
            cell_notes: List[str] = []
            for k in range(len(cells)):
                r = results[(d, k)]
                if isinstance(r, Exception):
                    cell_notes.append(f"cell {k}: {r}")
                    cell_bounds.append(None)
                else:
                    seconds += r.seconds
                    cell_bounds.append(r)
            lb = _assemble_lower(total, cell_bounds, cell_notes)
            notes.extend(lb.notes)
            lower, status_lower = lb.value, lb.status
            cell_vals = [None if b is None else b.value for b in cell_bounds]
            cell_status = ["failed" if b is None else b.status.value for b in cell_bounds]
            if lower is not None:
                lo_mono = lower if lo_mono is None else max(lo_mono, lower)
                if prev_lo is not None and lower < prev_lo - 10 * tol * (1 + abs(prev_lo)):
                    msg = f"lower bound fell from {prev_lo:.10g} to {lower:.10g} at d={d}; likely conditioning of the monomial basis"
                    warnings.warn(msg, ConditioningWarning, stacklevel=2)
                    notes.append(msg)
                prev_lo = lower

        out.append(
            LevelResult(
                d=d,
                upper_raw=upper,
                upper_mono=up_mono,
                lower_raw=lower,
                lower_mono=lo_mono,
                status_upper=ub.status.value,
                status_lower=status_lower,
                seconds=seconds,
                upper_uncertainty=ub.uncertainty,
                cell_uppers=cell_vals,
                cell_status=cell_status,
                u_trunc=ub.u_trunc,
                primal_obj=ub.solution.primal_obj,
                dual_obj=ub.solution.dual_obj,
                iterations=ub.solution.iterations,
                notes=notes,
            )
        )
        log.info(
            "d=%d upper=%s lower=%s (%s/%s) %.2fs",
            d,
            upper,
            lower,
            ub.status.value,
            status_lower,
            seconds,
        )
    return HierarchyResult(s.n, config.quantity, config.scheme.value, total, out)
