"""Assembly of the moment relaxations.

The decision vector ``u`` holds the truncated moments (up to order ``2d``)
of the restriction of the reference measure to the set.  The companion
sequence ``v = y - u`` is eliminated, so every instance has a single
variable vector and the blocks

* ``M_d(u) >= 0`` and ``M_d(y) - M_d(u) >= 0``;
* ``M_{d - d_j}(g_j u) >= 0`` for each defining polynomial;

plus, for the Stokes-accelerated scheme, the linear identities
``L_u(p_{i,alpha}) = 0``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .instance import LmiBlock, Preconditioning, SdpInstance
from .moments import MeasureKind, MeasureSpec, MomentOracle
from .polycore import MultiIndex, Poly, add_indices, basis_size, enumerate_multiindices, index_map

log = logging.getLogger(__name__)

#: relative pivot tolerance of the rank-revealing QR used to drop dependent equalities
DEDUP_TOL = 1e-10
EPS_SCALE = 1e-300


class RelaxationError(ValueError):
    pass


@dataclass(frozen=True)
class SemiAlgebraicSet:
    """``{x in R^n : g_j(x) >= 0 for all j}``."""

    n: int
    gs: Tuple[Poly, ...]
    orthant_augmented: bool = False

    def __post_init__(self):
        object.__setattr__(self, "gs", tuple(self.gs))
        for g in self.gs:
            if g.n != self.n:
                raise RelaxationError(f"constraint of dimension {g.n} in a set of dimension {self.n}")
            if g.degree < 1:
                raise RelaxationError(f"constraint {g!r} has degree 0")

    @property
    def half_degrees(self) -> List[int]:
        return [math.ceil(g.degree / 2) for g in self.gs]

    @property
    def d0(self) -> int:
        return max(self.half_degrees, default=1)

    def contains(self, points: np.ndarray) -> np.ndarray:
        from .polycore import evaluate_many

        points = np.atleast_2d(points)
        inside = np.ones(points.shape[0], dtype=bool)
        for g in self.gs:
            inside &= evaluate_many(g, points) >= 0
        return inside


def augment_exponential_support(s: SemiAlgebraicSet) -> SemiAlgebraicSet:
    """Append the orthant constraints ``x_i >= 0``."""
    if s.orthant_augmented:
        raise RelaxationError("set is already intersected with the orthant")
    extra = tuple(Poly.variable(s.n, i) for i in range(s.n))
    return SemiAlgebraicSet(s.n, s.gs + extra, orthant_augmented=True)


def prepare_set(s: SemiAlgebraicSet, spec: MeasureSpec) -> SemiAlgebraicSet:
    """Restrict to the support of the measure (idempotent)."""
    if spec.kind is MeasureKind.EXPONENTIAL and not s.orthant_augmented:
        return augment_exponential_support(s)
    return s


# ---------------------------------------------------------------------------
# moment and localizing matrices


@dataclass(frozen=True)
class MomentMatrixStructure:
    n: int
    d: int
    basis: Tuple[MultiIndex, ...]
    #: index[r, c] = position of basis[r] + basis[c] in the degree-2d ordering
    index: np.ndarray

    @property
    def side(self) -> int:
        return len(self.basis)

    def entry(self, beta: Sequence[int], gamma: Sequence[int]) -> int:
        pos = index_map(self.n, self.d)
        return int(self.index[pos[tuple(beta)], pos[tuple(gamma)]])

    def matrix(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float)[self.index]

    def coo(self):
        s = self.side
        rows = np.arange(s * s)
        return rows, self.index.reshape(-1), np.ones(s * s)


def moment_matrix_entries(n: int, d: int) -> MomentMatrixStructure:
    if d < 0:
        raise RelaxationError("level must be >= 0")
    basis = enumerate_multiindices(n, d)
    pos = index_map(n, 2 * d)
    s = len(basis)
    index = np.empty((s, s), dtype=np.int64)
    for r, beta in enumerate(basis):
        for c in range(r, s):
            index[r, c] = index[c, r] = pos[add_indices(beta, basis[c])]
    return MomentMatrixStructure(n, d, basis, index)


@dataclass(frozen=True)
class LocalizingStructure:
    g: Poly
    n: int
    d: int
    basis: Tuple[MultiIndex, ...]
    #: COO triplets: flat entry position, variable index, coefficient
    flat: np.ndarray
    var: np.ndarray
    val: np.ndarray

    @property
    def side(self) -> int:
        return len(self.basis)

    def linear_form(self, r: int, c: int) -> dict:
        """Entry ``(r, c)`` as ``{variable index: coefficient}``."""
        mask = self.flat == r * self.side + c
        out = {}
        for k, v in zip(self.var[mask], self.val[mask]):
            out[int(k)] = out.get(int(k), 0.0) + float(v)
        return out

    def matrix(self, u: np.ndarray) -> np.ndarray:
        s = self.side
        out = np.zeros(s * s)
        np.add.at(out, self.flat, self.val * np.asarray(u, dtype=float)[self.var])
        return out.reshape(s, s)

    def coo(self):
        return self.flat, self.var, self.val


def localizing_entries(g: Poly, n: int, d: int) -> LocalizingStructure:
    """Structure of ``M_{d - ceil(deg g / 2)}(g u)``, addressing ``u`` over degree ``<= 2d``."""
    dg = math.ceil(g.degree / 2)
    if d < dg:
        raise RelaxationError(f"level {d} is below ceil(deg g / 2) = {dg}")
    basis = enumerate_multiindices(n, d - dg)
    pos = index_map(n, 2 * d)
    s = len(basis)
    flat, var, val = [], [], []
    terms = list(g.items())
    for r, beta in enumerate(basis):
        for c, gamma in enumerate(basis):
            bg = add_indices(beta, gamma)
            for delta, coeff in terms:
                flat.append(r * s + c)
                var.append(pos[add_indices(bg, delta)])
                val.append(coeff)
    return LocalizingStructure(
        g, n, d, basis, np.array(flat, dtype=np.int64), np.array(var, dtype=np.int64), np.array(val)
    )


# ---------------------------------------------------------------------------
# Stokes identities


@dataclass(frozen=True)
class StokesPoly:
    i: int
    alpha: MultiIndex
    p: Poly


def stokes_budget(f: Poly, spec: MeasureSpec, d: int) -> int:
    """Largest ``|alpha|`` such that every ``p_{i,alpha}`` has degree ``<= 2d``."""
    if spec.kind is MeasureKind.GAUSSIAN:
        return 2 * d - f.degree - 1
    return 2 * d - f.degree


def stokes_polys(f: Poly, spec: MeasureSpec, d: int) -> List[StokesPoly]:
    """``p_{i,alpha} = d(x^alpha f)/dx_i + (x^alpha f) * d(log density)/dx_i``.

    ``f`` must vanish on the boundary of the set (caller's contract).
    """
    n = spec.n
    if f.n != n:
        raise RelaxationError("Stokes multiplier has the wrong dimension")
    budget = stokes_budget(f, spec, d)
    if budget < 0:
        warnings.warn(
            f"degree budget 2d={2 * d} leaves no room for Stokes identities with deg f={f.degree}",
            stacklevel=2,
        )
        return []
    rate = spec.gradient_rate
    out = []
    for alpha in enumerate_multiindices(n, budget):
        xf = Poly.monomial(alpha) * f
        for i in range(n):
            if spec.kind is MeasureKind.GAUSSIAN:
                p = xf.partial(i) - rate * (Poly.variable(n, i) * xf)
            else:
                p = xf.partial(i) - rate * xf
            out.append(StokesPoly(i, alpha, p))
    return out


def default_stokes_multiplier(s: SemiAlgebraicSet) -> Poly:
    """Product of the defining polynomials; it vanishes on the boundary."""
    if not s.gs:
        raise RelaxationError("the set has no defining polynomials")
    f = s.gs[0]
    for g in s.gs[1:]:
        f = f * g
    return f


def complement_cells(s: SemiAlgebraicSet, spec: MeasureSpec) -> List[SemiAlgebraicSet]:
    """Staircase cover of ``supp(mu) minus the set`` with null overlaps.

    Cell ``l`` is ``{g_1 >= 0, ..., g_{l-1} >= 0, -g_l >= 0}``.  For the
    exponential measure, ``s`` may be given with or without the orthant
    constraints; they are stripped and then re-added to every cell.
    """
    gs = list(s.gs)
    if s.orthant_augmented:
        gs = gs[: len(gs) - s.n]
    if not gs:
        raise RelaxationError("the set has no defining polynomials")
    cells = []
    for ell, g in enumerate(gs):
        cell = SemiAlgebraicSet(s.n, tuple(gs[:ell]) + (-g,))
        if spec.kind is MeasureKind.EXPONENTIAL:
            cell = augment_exponential_support(cell)
        cells.append(cell)
    return cells


# ---------------------------------------------------------------------------
# instance builders


def linear_form(p: Poly, d: int) -> np.ndarray:
    """Row vector ``r`` with ``r @ u == L_u(p)`` over the degree-``2d`` moments."""
    if p.degree > 2 * d:
        raise RelaxationError(f"polynomial of degree {p.degree} exceeds the moment order {2 * d}")
    pos = index_map(p.n, 2 * d)
    row = np.zeros(basis_size(p.n, 2 * d))
    for alpha, c in p.items():
        row[pos[alpha]] += c
    return row


def _sparse_block(flat, var, val, size, num_vars) -> sp.csc_matrix:
    m = sp.coo_matrix((val, (flat, var)), shape=(size * size, num_vars)).tocsc()
    m.sum_duplicates()
    m.eliminate_zeros()
    return m


def _blocks(s: SemiAlgebraicSet, oracle: MomentOracle, d: int) -> List[LmiBlock]:
    n = s.n
    num_vars = basis_size(n, 2 * d)
    mm = moment_matrix_entries(n, d)
    side = mm.side
    coef = _sparse_block(*mm.coo(), side, num_vars)
    y = oracle.moment_vector(2 * d)
    blocks = [
        LmiBlock(side, np.zeros((side, side)), coef, "moment", basis_degree=d),
        LmiBlock(side, mm.matrix(y), -coef, "complement", basis_degree=d),
    ]
    for j, g in enumerate(s.gs):
        loc = localizing_entries(g, n, d)
        blocks.append(
            LmiBlock(
                loc.side,
                np.zeros((loc.side, loc.side)),
                _sparse_block(*loc.coo(), loc.side, num_vars),
                f"localizing[{j}]",
                basis_degree=d - math.ceil(g.degree / 2),
            )
        )
    return blocks


def _check_level(s: SemiAlgebraicSet, d: int):
    if d < s.d0:
        raise RelaxationError(f"level d={d} is below the minimal level d0={s.d0}")


def build_scheme1(
    s: SemiAlgebraicSet,
    oracle: MomentOracle,
    d: int,
    f: Optional[Poly] = None,
    *,
    precondition_instance: bool = True,
) -> SdpInstance:
    """Plain relaxation: maximize ``L_u(f)`` (``f = 1`` by default)."""
    s = prepare_set(s, oracle.spec)
    _check_level(s, d)
    f = Poly.constant(s.n, 1.0) if f is None else f
    inst = SdpInstance(
        basis_size(s.n, 2 * d),
        linear_form(f, d),
        _blocks(s, oracle, d),
        metadata={"n": s.n, "d": d, "scheme": "scheme1"},
    )
    if precondition_instance:
        inst = precondition(inst, oracle)
    return inst


def build_scheme3(
    s: SemiAlgebraicSet,
    oracle: MomentOracle,
    d: int,
    f_stokes: Optional[Poly] = None,
    *,
    objective: Optional[Poly] = None,
    precondition_instance: bool = True,
) -> SdpInstance:
    """Stokes-accelerated relaxation: maximize ``L_u(objective)`` (default ``u_0``)
    under ``L_u(p_{i,alpha}) = 0``."""
    s = prepare_set(s, oracle.spec)
    _check_level(s, d)
    f_stokes = default_stokes_multiplier(s) if f_stokes is None else f_stokes
    rows = [linear_form(sp_.p, d) for sp_ in stokes_polys(f_stokes, oracle.spec, d)]
    num_vars = basis_size(s.n, 2 * d)
    A = np.array(rows) if rows else np.zeros((0, num_vars))
    inst = SdpInstance(
        num_vars,
        linear_form(Poly.constant(s.n, 1.0) if objective is None else objective, d),
        _blocks(s, oracle, d),
        A,
        np.zeros(A.shape[0]),
        metadata={"n": s.n, "d": d, "scheme": "scheme3", "stokes_rows": A.shape[0]},
    )
    if precondition_instance:
        inst = precondition(inst, oracle)
    return dedup_equalities(inst)


def dedup_equalities(inst: SdpInstance, tol: float = DEDUP_TOL) -> SdpInstance:
    """Drop linearly dependent equality rows (pivoted QR, relative tolerance)."""
    A, b = inst.A, inst.b
    if A.shape[0] == 0:
        return inst
    norms = np.linalg.norm(A, axis=1)
    keep_nonzero = norms > 0
    if np.any(~keep_nonzero & (b != 0)):
        raise RelaxationError("inconsistent equality: zero row with nonzero right-hand side")
    An = A[keep_nonzero] / norms[keep_nonzero, None]
    bn = b[keep_nonzero] / norms[keep_nonzero]
    _, R, piv = la.qr(An.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * diag[0])) if diag.size else 0
    kept = np.sort(piv[:rank])
    dropped = A.shape[0] - rank
    if dropped:
        log.debug("dropped %d dependent equality rows (kept %d)", dropped, rank)
    precond = inst.precond
    if precond is not None:
        row_scale = (precond.row_scale[keep_nonzero] / norms[keep_nonzero])[kept]
        precond = replace(precond, row_scale=row_scale)
    meta = dict(inst.metadata, dropped_rows=dropped)
    return replace(inst, A=An[kept], b=bn[kept], precond=precond, metadata=meta)


# ---------------------------------------------------------------------------
# diagonal preconditioning


def basis_scales(oracle: MomentOracle, d: int) -> np.ndarray:
    """``sqrt(max(y_{2 beta}, eps))`` for every basis monomial ``beta`` of degree ``<= d``."""
    return np.array(
        [
            math.sqrt(max(oracle.moment(tuple(2 * b for b in beta)), EPS_SCALE))
            for beta in enumerate_multiindices(oracle.n, d)
        ]
    )


def variable_scales(oracle: MomentOracle, d: int) -> np.ndarray:
    """Scale of ``u_alpha``: ``sigma_floor(alpha/2) * sigma_ceil(alpha/2)`` (``y_alpha`` for even ``alpha``)."""
    out = []
    for alpha in enumerate_multiindices(oracle.n, 2 * d):
        lo = tuple(a // 2 for a in alpha)
        hi = tuple(a - a // 2 for a in alpha)
        ylo = max(oracle.moment(tuple(2 * a for a in lo)), EPS_SCALE)
        yhi = max(oracle.moment(tuple(2 * a for a in hi)), EPS_SCALE)
        out.append(math.sqrt(ylo) * math.sqrt(yhi))
    return np.array(out)


def _congruence(blk: LmiBlock, dvec: np.ndarray, var_scale: np.ndarray) -> LmiBlock:
    outer = np.outer(dvec, dvec).reshape(-1)
    coef = sp.diags(outer) @ blk.coef @ sp.diags(var_scale)
    return replace(blk, const=blk.const * np.outer(dvec, dvec), coef=sp.csc_matrix(coef))


def precondition(inst: SdpInstance, oracle: MomentOracle) -> SdpInstance:
    """Rescale variables and blocks so the reference moments sit at unit scale.

    Variables: ``u_alpha = s_alpha * u_hat_alpha``.  Blocks whose rows are
    monomials get the congruence ``diag(1/sigma)``, then every block is
    divided by its largest coefficient magnitude.  Equality rows are
    normalized.  Objective values are unchanged.
    """
    if inst.precond is not None:
        raise RelaxationError("instance is already preconditioned")
    d = inst.metadata["d"]
    svar = variable_scales(oracle, d)
    sigma = basis_scales(oracle, d)
    blocks, bscales = [], []
    for blk in inst.blocks:
        if blk.basis_degree is not None:
            dvec = 1.0 / sigma[: blk.size]
        else:
            dvec = np.ones(blk.size)
        scaled = _congruence(blk, dvec, svar)
        peak = max(np.abs(scaled.coef.data).max(initial=0.0), np.abs(scaled.const).max(initial=0.0))
        if peak > 0:
            dvec = dvec / math.sqrt(peak)
            scaled = _congruence(blk, dvec, svar)
        blocks.append(scaled)
        bscales.append(dvec)
    A = inst.A * svar
    norms = np.linalg.norm(A, axis=1)
    norms[norms == 0] = 1.0
    row_scale = 1.0 / norms
    return replace(
        inst,
        c=inst.c * svar,
        blocks=tuple(blocks),
        A=A * row_scale[:, None],
        b=inst.b * row_scale,
        precond=Preconditioning(svar, tuple(bscales), row_scale),
    )


def unprecondition(inst: SdpInstance) -> SdpInstance:
    """Undo :func:`precondition` (exactly, up to rounding)."""
    p = inst.precond
    if p is None:
        return inst
    inv = 1.0 / p.var_scale
    blocks = [_congruence(blk, 1.0 / dv, inv) for blk, dv in zip(inst.blocks, p.block_scales)]
    A = (inst.A / p.row_scale[:, None]) * inv
    return replace(
        inst,
        c=inst.c * inv,
        blocks=tuple(blocks),
        A=A,
        b=inst.b / p.row_scale,
        precond=None,
    )
