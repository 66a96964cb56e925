"""Independent ground truth: Monte Carlo, closed forms and quadrature moments.

Nothing here feeds the bound computations; these estimators exist to check
them.

Monte Carlo uses numpy's Philox 4x64 counter-based generator.  Chunk ``k``
of a run draws from ``Philox(key=seed).jumped(k)``, so chunks occupy
disjoint counter ranges and can be computed in any order or in parallel.
The normal CDF is ``scipy.special.ndtr`` (Cephes rational approximations of
erf/erfc, relative accuracy near 1e-15 in double precision).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy import integrate, special

from .moments import MeasureKind, MeasureSpec, MomentOracle
from .polycore import Poly, enumerate_multiindices
from .relaxation import SemiAlgebraicSet

DEFAULT_CHUNK = 1_000_000
QUAD_TOL = 1e-10
TAIL_STDS = 40.0


def normal_cdf(x):
    return special.ndtr(x)


# ---------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class McEstimate:
    value: float
    stderr: float
    samples: int
    seed: int
    hits: int

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "N": self.samples, "seed": self.seed}


def _draw(spec: MeasureSpec, gen: np.random.Generator, size: int) -> np.ndarray:
    if spec.kind is MeasureKind.GAUSSIAN:
        return spec.coordinate_std * gen.standard_normal((size, spec.n))
    # inverse CDF of Exp(lambda)
    return -np.log1p(-gen.random((size, spec.n))) / spec.param


def _count_chunk(s: SemiAlgebraicSet, spec: MeasureSpec, seed: int, k: int, size: int) -> int:
    gen = np.random.Generator(np.random.Philox(key=seed).jumped(k))
    return int(np.count_nonzero(s.contains(_draw(spec, gen, size))))


def mc_measure(
    s: SemiAlgebraicSet,
    spec: MeasureSpec,
    N: int,
    seed: int = 0,
    *,
    chunk: int = DEFAULT_CHUNK,
    workers: int = 1,
) -> McEstimate:
    """``mass * (hit fraction)`` with the binomial standard error."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be a 64-bit unsigned integer")
    if s.n != spec.n:
        raise ValueError("set and measure dimensions differ")
    sizes = [min(chunk, N - k * chunk) for k in range((N + chunk - 1) // chunk)]
    jobs = list(enumerate(sizes))
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            counts = list(pool.map(lambda job: _count_chunk(s, spec, seed, *job), jobs))
    else:
        counts = [_count_chunk(s, spec, seed, *job) for job in jobs]
    hits = sum(counts)
    p = hits / N
    mass = spec.total_mass
    return McEstimate(mass * p, mass * math.sqrt(p * (1 - p) / N), N, seed, hits)


# ---------------------------------------------------------------------------
# closed forms

CLOSED_FORMS = ("gaussian_halfplane", "gaussian_ball0", "exp_simplex", "exp_halfplane")


def closed_form(case_id: str, **params) -> float:
    """Exact measure of a few reference sets.

    * ``gaussian_halfplane(a, b, sigma=1, convention="standard")``: ``{a'x >= b}``
    * ``gaussian_ball0(r, n=2, sigma=1, convention="standard")``: ``{|x| <= r}``
    * ``exp_simplex(lam)``: ``{x >= 0: 3 x1 + x2 <= 1}``
    * ``exp_halfplane(lam)``: ``{x >= 0: 3 x1 + x2 >= 1}``
    """
    if case_id == "gaussian_halfplane":
        a = np.asarray(params["a"], dtype=float)
        spec = MeasureSpec.gaussian(a.size, params.get("sigma", 1.0), params.get("convention", "standard"))
        z = float(params["b"]) / (np.linalg.norm(a) * spec.coordinate_std)
        return spec.total_mass * float(normal_cdf(-z))
    if case_id == "gaussian_ball0":
        n = int(params.get("n", 2))
        spec = MeasureSpec.gaussian(n, params.get("sigma", 1.0), params.get("convention", "standard"))
        r = float(params["r"])
        if math.isinf(r):
            return spec.total_mass
        # |x|^2 / std^2 is chi-square with n degrees of freedom
        return spec.total_mass * float(special.gammainc(n / 2, r * r / (2 * spec.coordinate_std**2)))
    if case_id in ("exp_simplex", "exp_halfplane"):
        lam = float(params["lam"])
        if not lam > 0:
            raise ValueError("lam must be > 0")
        e1, e3 = math.exp(-lam), math.exp(-lam / 3)
        if case_id == "exp_simplex":
            return (1 + e1 / 2 - 1.5 * e3) / lam**2
        return (1.5 * e3 - e1 / 2) / lam**2
    raise ValueError(f"unknown closed-form case {case_id!r}; expected one of {CLOSED_FORMS}")


# ---------------------------------------------------------------------------
# shapes


@dataclass(frozen=True)
class Disc:
    center: tuple
    radius: float


@dataclass(frozen=True)
class HalfPlane:
    """``{a'x >= b}`` in the plane."""

    a: tuple
    b: float


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float


Shape = Union[Disc, HalfPlane, Interval]


class UnsupportedShape(ValueError):
    pass


def _user_constraints(s: SemiAlgebraicSet):
    gs = list(s.gs)
    return gs[: len(gs) - s.n] if s.orthant_augmented else gs


def detect_shape(s: SemiAlgebraicSet) -> Optional[Shape]:
    """Recognize discs, half-planes and intervals (orthant constraints ignored)."""
    gs = _user_constraints(s)
    if s.n == 1:
        lo, hi = -math.inf, math.inf
        for g in gs:
            if g.degree == 1:
                a, c = g.coeff((1,)), g.coeff((0,))
                if a > 0:
                    lo = max(lo, -c / a)
                else:
                    hi = min(hi, -c / a)
            elif g.degree == 2 and len(gs) == 1:
                a2, a1, a0 = g.coeff((2,)), g.coeff((1,)), g.coeff((0,))
                if a2 >= 0:
                    return None
                disc = a1 * a1 - 4 * a2 * a0
                if disc <= 0:
                    return None
                r1, r2 = sorted(((-a1 - math.sqrt(disc)) / (2 * a2), (-a1 + math.sqrt(disc)) / (2 * a2)))
                return Interval(r1, r2)
            else:
                return None
        return Interval(lo, hi) if lo < hi else None
    if s.n != 2 or len(gs) != 1:
        return None
    g = gs[0]
    if g.degree == 1:
        a = (g.coeff((1, 0)), g.coeff((0, 1)))
        return HalfPlane(a, -g.coeff((0, 0)))
    if g.degree == 2:
        k = -g.coeff((2, 0))
        if k <= 0 or g.coeff((0, 2)) != -k or g.coeff((1, 1)) != 0:
            return None
        cx, cy = g.coeff((1, 0)) / (2 * k), g.coeff((0, 1)) / (2 * k)
        r2 = g.coeff((0, 0)) / k + cx * cx + cy * cy
        return Disc((cx, cy), math.sqrt(r2)) if r2 > 0 else None
    return None


# ---------------------------------------------------------------------------
# quadrature moments


def _monomials(points: np.ndarray, d2: int) -> np.ndarray:
    """Rows: every multi-index of degree <= d2; columns: the points."""
    alphas = enumerate_multiindices(points.shape[1], d2)
    out = np.ones((len(alphas), points.shape[0]))
    for k, alpha in enumerate(alphas):
        for i, a in enumerate(alpha):
            if a:
                out[k] *= points[:, i] ** a
    return out


def _density(spec: MeasureSpec, pts: np.ndarray) -> np.ndarray:
    return np.exp(spec.log_density(pts))


def _refine(rule, tol: float, start: int = 32, limit: int = 4096) -> np.ndarray:
    """Double the order of ``rule(order)`` until successive results agree."""
    order = start
    prev = rule(order)
    while order < limit:
        order *= 2
        cur = rule(order)
        if np.max(np.abs(cur - prev)) <= tol:
            return cur
        prev = cur
    raise RuntimeError("quadrature did not converge")


def _disc_moments(spec: MeasureSpec, disc: Disc, d2: int, tol: float) -> np.ndarray:
    if spec.kind is not MeasureKind.GAUSSIAN:
        raise UnsupportedShape("disc quadrature is implemented for Gaussian measures only")
    cx, cy = disc.center

    def rule(order):
        gx, gw = np.polynomial.legendre.leggauss(order)
        rho = disc.radius * (gx + 1) / 2
        wr = gw * disc.radius / 2
        th = 2 * np.pi * np.arange(2 * order) / (2 * order)
        wt = 2 * np.pi / (2 * order)
        R, T = np.meshgrid(rho, th, indexing="ij")
        pts = np.column_stack([(cx + R * np.cos(T)).ravel(), (cy + R * np.sin(T)).ravel()])
        w = (wr[:, None] * wt * R).ravel() * _density(spec, pts)
        return _monomials(pts, d2) @ w

    return _refine(rule, tol)


def _triangle_moments(spec: MeasureSpec, c1: float, c2: float, d2: int, tol: float) -> np.ndarray:
    # T = {x >= 0 : c1 x1 + c2 x2 <= 1}, collapsed coordinates
    def rule(order):
        gx, gw = np.polynomial.legendre.leggauss(order)
        t = (gx + 1) / 2
        w = gw / 2
        T, S = np.meshgrid(t, t, indexing="ij")
        pts = np.column_stack([(T / c1).ravel(), ((1 - T) * S / c2).ravel()])
        jac = ((1 - T) / (c1 * c2)).ravel()
        ww = np.outer(w, w).ravel() * jac * _density(spec, pts)
        return _monomials(pts, d2) @ ww

    return _refine(rule, tol)


def _halfplane_moments(spec: MeasureSpec, hp: HalfPlane, d2: int, tol: float) -> np.ndarray:
    a = np.asarray(hp.a, dtype=float)
    alphas = enumerate_multiindices(2, d2)
    if spec.kind is MeasureKind.EXPONENTIAL:
        if np.all(a > 0) and hp.b > 0:
            full = MomentOracle(spec).moment_vector(d2)
            return full - _triangle_moments(spec, *(a / hp.b), d2, tol)
        if np.all(a < 0) and hp.b < 0:
            return _triangle_moments(spec, *(a / hp.b), d2, tol)
        raise UnsupportedShape("exponential half-planes must cut the orthant in a triangle")
    # rotate: x = t e + s e_perp with t, s independent N(0, std^2)
    norm = float(np.linalg.norm(a))
    e = a / norm
    ep = np.array([-e[1], e[0]])
    t0 = hp.b / norm
    std = spec.coordinate_std
    mass = spec.total_mass
    # finite window: the tail past 40 std is below double precision for any degree used,
    # and an infinite range lets quad miss the peak when t0 is far below it
    hi = max(t0, 0.0) + TAIL_STDS * std
    lo = max(t0, -TAIL_STDS * std)
    tm = []
    for j in range(d2 + 1):
        val, _ = integrate.quad(
            lambda t, j=j: t**j * math.exp(-0.5 * (t / std) ** 2) / (std * math.sqrt(2 * math.pi)),
            lo,
            hi,
            points=[0.0] if lo < 0.0 < hi else None,
            epsabs=tol / 10,
            epsrel=1e-13,
            limit=400,
        )
        tm.append(val)
    # E[s^k] = std^k (k-1)!! for even k
    sm = [0.0 if k % 2 else std**k * math.prod(range(k - 1, 0, -2)) for k in range(d2 + 1)]
    t_lin = Poly(2, {(1, 0): e[0], (0, 1): ep[0]})
    s_lin = Poly(2, {(1, 0): e[1], (0, 1): ep[1]})
    out = np.zeros(len(alphas))
    for idx, (p, q) in enumerate(alphas):
        # x1^p x2^q as a polynomial in (t, s)
        poly = (t_lin**p) * (s_lin**q)
        out[idx] = mass * sum(c * tm[j] * sm[k] for (j, k), c in poly.items())
    return out


def _interval_moments(spec: MeasureSpec, iv: Interval, d2: int, tol: float) -> np.ndarray:
    lo, hi = iv.lo, iv.hi
    if spec.kind is MeasureKind.EXPONENTIAL:
        lo = max(lo, 0.0)
        hi = min(hi, TAIL_STDS * max(math.sqrt(d2), 1.0) / spec.param)
    else:
        reach = TAIL_STDS * spec.coordinate_std
        lo, hi = max(lo, -reach), min(hi, reach)
    if not lo < hi:
        return np.zeros(d2 + 1)
    out = []
    for j in range(d2 + 1):
        val, _ = integrate.quad(
            lambda x, j=j: x**j * math.exp(float(spec.log_density(np.array([[x]]))[0])),
            lo,
            hi,
            points=[0.0] if lo < 0.0 < hi else None,
            epsabs=tol / 10,
            epsrel=1e-13,
            limit=400,
        )
        out.append(val)
    return np.array(out)


def restricted_moments_quadrature(
    shape: Union[Shape, SemiAlgebraicSet], spec: MeasureSpec, d: int, tol: float = QUAD_TOL
) -> np.ndarray:
    """Moments ``int_Omega x^alpha dmu`` for all ``|alpha| <= 2d`` (graded-lex order)."""
    if isinstance(shape, SemiAlgebraicSet):
        found = detect_shape(shape)
        if found is None:
            raise UnsupportedShape("set is not a disc, half-plane or interval")
        shape = found
    if isinstance(shape, Disc) and spec.n == 2:
        return _disc_moments(spec, shape, 2 * d, tol)
    if isinstance(shape, HalfPlane) and spec.n == 2:
        return _halfplane_moments(spec, shape, 2 * d, tol)
    if isinstance(shape, Interval) and spec.n == 1:
        return _interval_moments(spec, shape, 2 * d, tol)
    raise UnsupportedShape(f"{type(shape).__name__} is not supported in dimension {spec.n}")


def stokes_residual(s: SemiAlgebraicSet, spec: MeasureSpec, d: int, f: Optional[Poly] = None) -> float:
    """``max |L(p_{i,alpha})|`` over the emitted Stokes polynomials, using quadrature moments."""
    from .relaxation import default_stokes_multiplier, linear_form, prepare_set, stokes_polys

    prepared = prepare_set(s, spec)
    f = default_stokes_multiplier(prepared) if f is None else f
    u = restricted_moments_quadrature(s, spec, d)
    polys = stokes_polys(f, spec, d)
    if not polys:
        return 0.0
    return float(max(abs(linear_form(p.p, d) @ u) for p in polys))
