"""Problem files: JSON documents validated against ``problem.schema.json``."""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import List, Optional, Tuple

import jsonschema

from .hierarchy import HierarchyConfig, Scheme
from .moments import Convention, MeasureKind, MeasureSpec
from .polycore import Poly
from .relaxation import SemiAlgebraicSet
from .sdp import SolverConfig

FORMAT_VERSION = 1


class ProblemError(ValueError):
    """Invalid problem document; ``pointer`` is a JSON pointer into it."""

    def __init__(self, pointer: str, msg: str):
        super().__init__(f"{pointer or '/'}: {msg}")
        self.pointer = pointer


@lru_cache(maxsize=1)
def schema() -> dict:
    text = resources.files("semialg").joinpath("data/problem.schema.json").read_text()
    return json.loads(text)


def _pointer(path) -> str:
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in path)


@dataclass(frozen=True)
class Problem:
    measure: MeasureSpec
    set: SemiAlgebraicSet
    d_min: int = 1
    d_max: int = 4
    scheme: Scheme = Scheme.SCHEME3
    objective_f: Optional[Poly] = None
    f_stokes: Optional[Poly] = None
    compute_lower: bool = True
    square_objective: bool = False
    workers: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    cells: Optional[Tuple[SemiAlgebraicSet, ...]] = None

    def hierarchy_config(self, **overrides) -> HierarchyConfig:
        kw = dict(
            d_min=self.d_min,
            d_max=self.d_max,
            scheme=self.scheme,
            objective_f=self.objective_f,
            f_stokes=self.f_stokes,
            compute_lower=self.compute_lower,
            solver=self.solver,
            square_objective=self.square_objective,
            cells=self.cells,
            workers=self.workers,
        )
        kw.update(overrides)
        return HierarchyConfig(**kw)

    # -- serialization ------------------------------------------------
    def to_dict(self) -> dict:
        m = self.measure
        out = {
            "version": FORMAT_VERSION,
            "measure": {"kind": m.kind.value, "n": m.n, "param": m.param, "convention": m.convention.value},
            "set": {"gs": [g.to_terms() for g in self.set.gs]},
            "hierarchy": {
                "d_min": self.d_min,
                "d_max": self.d_max,
                "scheme": self.scheme.value,
                "objective_f": None if self.objective_f is None else self.objective_f.to_terms(),
                "f_stokes": None if self.f_stokes is None else self.f_stokes.to_terms(),
                "compute_lower": self.compute_lower,
                "square_objective": self.square_objective,
                "workers": self.workers,
            },
            "solver": {
                "tol_gap": self.solver.tol_gap,
                "tol_feas": self.solver.tol_feas,
                "max_iter": self.solver.max_iter,
                "step": self.solver.step,
            },
        }
        if self.cells is not None:
            out["cells"] = [{"gs": [g.to_terms() for g in c.gs]} for c in self.cells]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _poly(terms, n: int, ptr: str) -> Poly:
    for k, t in enumerate(terms):
        if len(t["alpha"]) != n:
            raise ProblemError(f"{ptr}/{k}/alpha", f"exponent has length {len(t['alpha'])}, expected n={n}")
    return Poly.from_terms(terms, n=n)


def _set(doc: dict, n: int, ptr: str) -> SemiAlgebraicSet:
    gs = []
    for j, terms in enumerate(doc["gs"]):
        g = _poly(terms, n, f"{ptr}/gs/{j}")
        if g.degree < 1:
            raise ProblemError(f"{ptr}/gs/{j}", "constraint must have degree >= 1")
        gs.append(g)
    return SemiAlgebraicSet(n, gs)


def from_dict(doc) -> Problem:
    """Validate and convert a parsed document."""
    validator = jsonschema.Draft202012Validator(schema())
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        best = jsonschema.exceptions.best_match(errors)
        raise ProblemError(_pointer(best.absolute_path), best.message)
    md = doc["measure"]
    n = md["n"]
    kind = MeasureKind(md["kind"])
    convention = md.get("convention", "standard")
    if kind is MeasureKind.EXPONENTIAL and convention != "standard":
        raise ProblemError("/measure/convention", "the exponential measure has no convention choice")
    try:
        measure = MeasureSpec(kind, n, float(md.get("param", 1.0)), Convention(convention))
    except ValueError as exc:
        raise ProblemError("/measure", str(exc)) from None
    s = _set(doc["set"], n, "/set")
    h = doc.get("hierarchy", {})
    d_min = h.get("d_min", s.d0)
    d_max = h.get("d_max", max(d_min, 4))
    if d_min > d_max:
        raise ProblemError("/hierarchy/d_min", f"d_min={d_min} exceeds d_max={d_max}")
    objective_f = None if h.get("objective_f") is None else _poly(h["objective_f"], n, "/hierarchy/objective_f")
    f_stokes = None if h.get("f_stokes") is None else _poly(h["f_stokes"], n, "/hierarchy/f_stokes")
    square = h.get("square_objective", False)
    if square and objective_f is None:
        raise ProblemError("/hierarchy/square_objective", "requires objective_f")
    sd = doc.get("solver", {})
    try:
        solver = SolverConfig(**sd)
    except ValueError as exc:
        raise ProblemError("/solver", str(exc)) from None
    cells = None
    if "cells" in doc:
        cells = tuple(_set(c, n, f"/cells/{k}") for k, c in enumerate(doc["cells"]))
    return Problem(
        measure=measure,
        set=s,
        d_min=d_min,
        d_max=d_max,
        scheme=Scheme(h.get("scheme", "scheme3")),
        objective_f=objective_f,
        f_stokes=f_stokes,
        compute_lower=h.get("compute_lower", True),
        square_objective=square,
        workers=h.get("workers", 1),
        solver=solver,
        cells=cells,
    )


def loads(text: str) -> Problem:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return from_dict(doc)


def load(path) -> Problem:
    return loads(Path(path).read_text())


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def examples() -> List[str]:
    """Names of the problem files shipped with the package."""
    root = resources.files("semialg").joinpath("data/problems")
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".json"))
