"""Dense primal-dual interior-point method for small block-diagonal SDPs.

The instance is

    maximize    c @ u
    subject to  F0_b + sum_k u_k F_bk  PSD   (each block b)
                A @ u == b

and its dual is

    minimize    sum_b <F0_b, X_b>
    subject to  sum_b <F_bk, X_b> == -c_k,   X_b PSD.

Equalities are removed first by writing ``u = u0 + N w`` with ``A u0 = b``
and ``A N = 0`` (``N`` has orthonormal columns).  The iteration is an
infeasible-start path-following method with Nesterov-Todd scaling and a
Mehrotra predictor-corrector step.  All linear algebra is dense.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import scipy.linalg as la

from ..instance import SdpInstance

log = logging.getLogger(__name__)


class Status(str, enum.Enum):
    OPTIMAL = "optimal"
    INACCURATE = "inaccurate"
    PRIMAL_INFEASIBLE = "primal_infeasible"
    DUAL_INFEASIBLE = "dual_infeasible"
    ITER_LIMIT = "iter_limit"


@dataclass(frozen=True)
class SolverConfig:
    tol_gap: float = 1e-8
    tol_feas: float = 1e-8
    max_iter: int = 200
    #: fraction of the step to the boundary of the cone that is taken
    step: float = 0.98

    def __post_init__(self):
        if not (self.tol_gap > 0 and self.tol_feas > 0):
            raise ValueError("tolerances must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.step < 1:
            raise ValueError("step damping must lie in (0, 1)")


@dataclass(frozen=True)
class Residuals:
    primal: float
    dual: float
    gap: float


@dataclass
class SdpSolution:
    #: decision vector in original (unpreconditioned) units
    u: np.ndarray
    primal_obj: float
    dual_obj: float
    status: Status
    residuals: Residuals
    iterations: int
    #: decision vector in the instance's own variables
    u_instance: np.ndarray = None
    X: List[np.ndarray] = field(default_factory=list, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is Status.OPTIMAL


def nullspace_parametrization(A: np.ndarray, b: np.ndarray, num_vars: int):
    """``(u0, N)`` with ``A u0 = b``, ``A N = 0`` and orthonormal columns in ``N``."""
    if A.shape[0] == 0:
        return np.zeros(num_vars), np.eye(num_vars)
    Q, R, _ = la.qr(A.T, mode="full", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > 1e-12 * diag.max(initial=0.0))) if diag.size else 0
    u0 = np.linalg.lstsq(A, b, rcond=None)[0]
    if np.linalg.norm(A @ u0 - b) > 1e-8 * (1 + np.linalg.norm(b)):
        raise ValueError("equality constraints are inconsistent")
    return u0, Q[:, rank:]


class _Reduced:
    """Instance after eliminating equalities; coefficients densified per block."""

    def __init__(self, inst: SdpInstance):
        u0, N = nullspace_parametrization(inst.A, inst.b, inst.num_vars)
        self.u0, self.N = u0, N
        self.m = N.shape[1]
        self.c = N.T @ inst.c
        self.c0 = float(inst.c @ u0)
        self.sizes = [blk.size for blk in inst.blocks]
        self.F0 = []
        self.F = []
        for blk in inst.blocks:
            s = blk.size
            f0 = blk.const + (blk.coef @ u0).reshape(s, s)
            fk = np.asarray(blk.coef @ N).T.reshape(self.m, s, s)
            # symmetrize; callers guarantee symmetry up to rounding
            self.F0.append(0.5 * (f0 + f0.T))
            self.F.append(0.5 * (fk + fk.transpose(0, 2, 1)))
        self.norm_F0 = math.sqrt(sum(float(np.sum(f * f)) for f in self.F0))
        self.norm_c = float(np.linalg.norm(self.c))

    def lift(self, w: np.ndarray) -> np.ndarray:
        return self.u0 + self.N @ w

    def apply(self, w: np.ndarray) -> List[np.ndarray]:
        return [np.tensordot(w, F, axes=1) for F in self.F]

    def adjoint(self, X: List[np.ndarray]) -> np.ndarray:
        out = np.zeros(self.m)
        for F, x in zip(self.F, X):
            out += F.reshape(self.m, -1) @ x.reshape(-1)
        return out


def _inner(A: List[np.ndarray], B: List[np.ndarray]) -> float:
    return float(sum(np.sum(a * b) for a, b in zip(A, B)))


def _fro(A: List[np.ndarray]) -> float:
    return math.sqrt(_inner(A, A))


def _max_step(D: np.ndarray, dZ: np.ndarray) -> float:
    """Largest ``t`` with ``diag(D) + t dZ`` PSD (``inf`` if unbounded)."""
    r = 1.0 / np.sqrt(D)
    lam = la.eigvalsh(r[:, None] * dZ * r[None, :])[0]
    return math.inf if lam >= 0 else -1.0 / lam


def _sym(M: np.ndarray) -> np.ndarray:
    return 0.5 * (M + M.T)


def _nt_scaling(X: np.ndarray, S: np.ndarray):
    """``G`` with ``G^{-1} X G^{-T} = G^T S G = diag(D)``; also returns ``G^{-1}``."""
    Lx = la.cholesky(X, lower=True)
    Ls = la.cholesky(S, lower=True)
    U, sv, Vt = la.svd(Ls.T @ Lx)
    root = np.sqrt(sv)
    G = (Lx @ Vt.T) / root[None, :]
    Ginv = (U.T @ Ls.T) / root[:, None]
    return G, Ginv, sv


def _schur_factor(J: np.ndarray) -> np.ndarray:
    """Upper-triangular ``R`` with ``R^T R = J J^T``."""
    R = la.qr(J.T, mode="r", check_finite=False)[0][: J.shape[0]]
    diag = np.abs(np.diag(R))
    if diag.size and (not np.all(np.isfinite(R)) or diag.min() <= 1e-15 * diag.max()):
        # regularize a numerically rank-deficient operator
        ridge = 1e-15 * diag.max()
        R = la.qr(np.vstack([J.T, ridge * np.eye(J.shape[0])]), mode="r", check_finite=False)[0][: J.shape[0]]
        if np.abs(np.diag(R)).min() == 0:
            raise la.LinAlgError("Schur complement is singular")
    return R


def _schur_solve(R: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    z = la.solve_triangular(R, rhs, trans="T", check_finite=False)
    return la.solve_triangular(R, z, check_finite=False)


def solve(instance: SdpInstance, config: Optional[SolverConfig] = None) -> SdpSolution:
    """Maximize ``c @ u`` over the instance's constraints."""
    config = config or SolverConfig()
    red = _Reduced(instance)

    def finish(w, X, status, res, it, pobj, dobj):
        u_inst = red.lift(w)
        return SdpSolution(
            u=instance.to_original(u_inst),
            primal_obj=pobj,
            dual_obj=dobj,
            status=status,
            residuals=res,
            iterations=it,
            u_instance=u_inst,
            X=X,
        )

    if red.m == 0:
        S = red.F0
        lam = min(float(la.eigvalsh(s)[0]) for s in S) if S else 0.0
        viol = max(0.0, -lam) / (1 + red.norm_F0)
        status = Status.OPTIMAL if viol <= config.tol_feas else Status.PRIMAL_INFEASIBLE
        return finish(np.zeros(0), [np.zeros_like(s) for s in S], status, Residuals(viol, 0.0, 0.0), 0, red.c0, red.c0)

    m = red.m
    total_dim = sum(red.sizes)
    # initial point: identity multiples sized from the data (the instance is
    # preconditioned, so moment entries are O(1) and growth_bound-scale)
    X, S = [], []
    for F0, F in zip(red.F0, red.F):
        s = F0.shape[0]
        fn = np.sqrt(np.sum(F * F, axis=(1, 2)))
        xi = max(10.0, math.sqrt(s), s * float(np.max((1 + np.abs(red.c)) / (1 + fn))))
        eta = max(10.0, math.sqrt(s), float(fn.max(initial=0.0)), float(np.linalg.norm(F0)))
        X.append(xi * np.eye(s))
        S.append(eta * np.eye(s))
    w = np.zeros(m)
    # factor of the (fixed) unscaled Gram operator F* F, used to project
    # search directions back onto the dual equality constraints
    J0 = np.concatenate([F.reshape(m, -1) for F in red.F], axis=1)
    try:
        R0 = _schur_factor(J0)
    except la.LinAlgError:
        R0 = None

    best = None
    stall = 0
    it = 0
    status = Status.ITER_LIMIT
    for it in range(config.max_iter + 1):
        Fw = red.apply(w)
        RS = [f0 + fw - s for f0, fw, s in zip(red.F0, Fw, S)]
        rX = -red.c - red.adjoint(X)
        mu = _inner(X, S) / total_dim
        pobj = float(red.c @ w) + red.c0
        dobj = _inner(red.F0, X) + red.c0
        pinf = _fro(RS) / (1 + red.norm_F0)
        dinf = float(np.linalg.norm(rX)) / (1 + red.norm_c)
        gap = abs(pobj - dobj) / (1 + abs(pobj))
        res = Residuals(pinf, dinf, gap)
        log.debug(
            "%4d %+.10e %+.10e gap=%.2e pinf=%.2e dinf=%.2e mu=%.2e", it, pobj, dobj, gap, pinf, dinf, mu
        )
        score = max(gap / config.tol_gap, pinf / config.tol_feas, dinf / config.tol_feas)
        if best is None or score < best[0]:
            best = (score, w.copy(), [x.copy() for x in X], res, it, pobj, dobj)
        if score <= 1.0:
            status = Status.OPTIMAL
            break
        # infeasibility certificates
        dF0X = dobj - red.c0
        if dF0X < 0 and np.linalg.norm(red.adjoint(X)) <= config.tol_feas * abs(dF0X):
            status = Status.PRIMAL_INFEASIBLE
            break
        cw = float(red.c @ w)
        if cw > 0 and _fro([f0 - r for f0, r in zip(red.F0, RS)]) <= config.tol_feas * cw:
            status = Status.DUAL_INFEASIBLE
            break
        if it == config.max_iter:
            break

        try:
            scal = [_nt_scaling(x, s) for x, s in zip(X, S)]
        except la.LinAlgError:
            log.debug("iterate left the cone numerically; stopping")
            break
        Ft = [G.T @ F @ G for (G, _, _), F in zip(scal, red.F)]
        RSt = [G.T @ r @ G for (G, _, _), r in zip(scal, RS)]
        # M = J J^T with J the stacked scaled coefficients; factor J^T = Q R so
        # that M = R^T R without forming M (keeps cond(R) = sqrt(cond(M)))
        J = np.concatenate([f.reshape(m, -1) for f in Ft], axis=1)
        try:
            R = _schur_factor(J)
        except la.LinAlgError:
            log.debug("singular Schur complement; stopping")
            break

        def direction(T, project=False):
            rhs = -rX
            for f, t, r in zip(Ft, T, RSt):
                rhs = rhs + f.reshape(m, -1) @ (t - r).reshape(-1)
            dw = _schur_solve(R, rhs)
            # one step of iterative refinement against the unfactored operator
            dw = dw + _schur_solve(R, rhs - J @ (J.T @ dw))
            dS = [np.tensordot(dw, f, axes=1) + r for f, r in zip(Ft, RSt)]
            dX = [t - ds for t, ds in zip(T, dS)]
            if project and R0 is not None:
                # rounding in the scaled system lets F*(dX) drift from rX;
                # remove the drift with a minimum-norm unscaled correction
                dXo = [G @ dx @ G.T for (G, _, _), dx in zip(scal, dX)]
                lam = _schur_solve(R0, rX - red.adjoint(dXo))
                dX = [
                    dx + Gi @ np.tensordot(lam, F, axes=1) @ Gi.T
                    for dx, (_, Gi, _), F in zip(dX, scal, red.F)
                ]
            return dw, dX, dS

        def steps(dX, dS):
            ap = min((_max_step(D, dx) for (_, _, D), dx in zip(scal, dX)), default=math.inf)
            ad = min((_max_step(D, ds) for (_, _, D), ds in zip(scal, dS)), default=math.inf)
            return ap, ad

        # predictor
        T_aff = [-np.diag(D) for (_, _, D) in scal]
        dw_a, dX_a, dS_a = direction(T_aff)
        ap, ad = steps(dX_a, dS_a)
        ap, ad = min(1.0, ap), min(1.0, ad)
        mu_aff = sum(
            float(np.sum((np.diag(D) + ap * dx) * (np.diag(D) + ad * ds)))
            for (_, _, D), dx, ds in zip(scal, dX_a, dS_a)
        ) / total_dim
        expon = max(1.0, 3.0 * min(ap, ad) ** 2)
        sigma = min(1.0, max(0.0, mu_aff / mu) ** expon)

        # corrector
        T = []
        for (_, _, D), dx, ds in zip(scal, dX_a, dS_a):
            cross = dx @ ds
            rc = sigma * mu * np.eye(D.size) - np.diag(D * D) - 0.5 * (cross + cross.T)
            T.append(2.0 * rc / (D[:, None] + D[None, :]))
        dw, dXt, dSt = direction(T, project=dinf > 0.1 * config.tol_feas)
        ap, ad = steps(dXt, dSt)
        gamma = config.step
        ap = min(1.0, gamma * ap)
        ad = min(1.0, gamma * ad)

        X = [_sym(x + ap * (G @ dx @ G.T)) for x, (G, _, _), dx in zip(X, scal, dXt)]
        S = [_sym(s + ad * (Gi.T @ ds @ Gi)) for s, (_, Gi, _), ds in zip(S, scal, dSt)]
        w = w + ad * dw
        if max(ap, ad) < 1e-10:
            stall += 1
            if stall >= 3:
                log.debug("step lengths collapsed; stopping")
                break
        else:
            stall = 0

    if status is Status.OPTIMAL or status in (Status.PRIMAL_INFEASIBLE, Status.DUAL_INFEASIBLE):
        return finish(w, X, status, res, it, pobj, dobj)
    score, w, X, res, it_best, pobj, dobj = best
    status = Status.INACCURATE if score <= 100.0 else Status.ITER_LIMIT
    log.info("solver stopped with status %s (score %.3g)", status.value, score)
    return finish(w, X, status, res, it, pobj, dobj)
