"""Multi-indices and sparse multivariate polynomials over the reals.

Monomials are ordered graded-lexicographically: first by total degree, then
lexicographically with ``x_1 > x_2 > ... > x_n``.  That single ordering is
used for every moment vector, moment matrix and file export in the package.
Coordinates are 0-based in the Python API.
"""

from __future__ import annotations

import json
import math
from functools import lru_cache
from typing import Dict, Iterable, Mapping, Sequence, Tuple

import numpy as np

MultiIndex = Tuple[int, ...]

#: largest basis size we are willing to index (fits a signed 32-bit int)
MAX_BASIS_SIZE = 2**31 - 1


class SizeLimitError(OverflowError):
    """A monomial basis is too large to be indexed."""


class DimensionMismatch(ValueError):
    pass


def basis_size(n: int, d: int) -> int:
    """Number of monomials of degree at most ``d`` in ``n`` variables."""
    if n < 1 or d < 0:
        raise ValueError(f"need n >= 1 and d >= 0, got n={n}, d={d}")
    size = math.comb(n + d, d)
    if size > MAX_BASIS_SIZE:
        raise SizeLimitError(f"basis size C({n + d},{d}) = {size} exceeds {MAX_BASIS_SIZE}")
    return size


def _compositions(n: int, k: int):
    # exponent vectors of total degree k, lexicographically descending
    if n == 1:
        yield (k,)
        return
    for first in range(k, -1, -1):
        for rest in _compositions(n - 1, k - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _enumerate(n: int, d: int) -> Tuple[MultiIndex, ...]:
    basis_size(n, d)
    out = []
    for k in range(d + 1):
        out.extend(_compositions(n, k))
    return tuple(out)


def enumerate_multiindices(n: int, d: int) -> Tuple[MultiIndex, ...]:
    """All ``alpha`` with ``|alpha| <= d`` in graded lexicographic order.

    >>> enumerate_multiindices(2, 1)
    ((0, 0), (1, 0), (0, 1))
    """
    return _enumerate(n, d)


@lru_cache(maxsize=None)
def index_map(n: int, d: int) -> Dict[MultiIndex, int]:
    """Position of each multi-index in :func:`enumerate_multiindices`.

    Because the ordering is graded, positions do not depend on ``d`` as long
    as ``|alpha| <= d``.
    """
    return {alpha: k for k, alpha in enumerate(_enumerate(n, d))}


def add_indices(a: MultiIndex, b: MultiIndex) -> MultiIndex:
    return tuple(x + y for x, y in zip(a, b))


class Poly:
    """Sparse polynomial ``sum_alpha c_alpha x^alpha`` in ``n`` variables.

    Instances are treated as immutable.  Exact-zero coefficients are never
    stored; nothing else is pruned.
    """

    __slots__ = ("n", "_terms")

    def __init__(self, n: int, terms: Mapping[Sequence[int], float] | None = None):
        if n < 1:
            raise ValueError("polynomial dimension must be >= 1")
        self.n = n
        clean: Dict[MultiIndex, float] = {}
        for alpha, c in (terms or {}).items():
            alpha = tuple(int(a) for a in alpha)
            if len(alpha) != n or any(a < 0 for a in alpha):
                raise DimensionMismatch(f"bad exponent {alpha} for n={n}")
            c = float(c)
            total = clean.get(alpha, 0.0) + c
            if total == 0.0:
                clean.pop(alpha, None)
            else:
                clean[alpha] = total
        self._terms = clean

    # -- constructors -------------------------------------------------
    @classmethod
    def constant(cls, n: int, c: float) -> "Poly":
        return cls(n, {(0,) * n: c})

    @classmethod
    def variable(cls, n: int, i: int) -> "Poly":
        alpha = [0] * n
        alpha[i] = 1
        return cls(n, {tuple(alpha): 1.0})

    @classmethod
    def monomial(cls, alpha: Sequence[int], c: float = 1.0) -> "Poly":
        return cls(len(alpha), {tuple(alpha): c})

    @classmethod
    def zero(cls, n: int) -> "Poly":
        return cls(n)

    # -- accessors ----------------------------------------------------
    @property
    def terms(self) -> Dict[MultiIndex, float]:
        return dict(self._terms)

    def items(self):
        return self._terms.items()

    def coeff(self, alpha: Sequence[int]) -> float:
        return self._terms.get(tuple(alpha), 0.0)

    @property
    def degree(self) -> int:
        if not self._terms:
            return 0
        return max(sum(a) for a in self._terms)

    def is_zero(self) -> bool:
        return not self._terms

    def __len__(self) -> int:
        return len(self._terms)

    def __eq__(self, other) -> bool:
        if isinstance(other, (int, float)):
            other = Poly.constant(self.n, other)
        if not isinstance(other, Poly):
            return NotImplemented
        return self.n == other.n and self._terms == other._terms

    def __hash__(self):
        return hash((self.n, frozenset(self._terms.items())))

    def __repr__(self) -> str:
        if not self._terms:
            return f"Poly({self.n}, 0)"
        order = index_map(self.n, self.degree)
        parts = []
        for alpha in sorted(self._terms, key=order.__getitem__):
            mono = "*".join(
                f"x{i + 1}" if a == 1 else f"x{i + 1}^{a}" for i, a in enumerate(alpha) if a
            )
            parts.append(f"{self._terms[alpha]:+g}" + (f"*{mono}" if mono else ""))
        return f"Poly({self.n}, {' '.join(parts)})"

    # -- arithmetic ---------------------------------------------------
    def _check(self, other: "Poly"):
        if self.n != other.n:
            raise DimensionMismatch(f"dimension mismatch: {self.n} vs {other.n}")

    def _coerce(self, other) -> "Poly":
        if isinstance(other, Poly):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Poly.constant(self.n, float(other))
        raise TypeError(f"cannot combine Poly with {type(other).__name__}")

    def __add__(self, other) -> "Poly":
        other = self._coerce(other)
        out = dict(self._terms)
        for alpha, c in other._terms.items():
            out[alpha] = out.get(alpha, 0.0) + c
        return Poly(self.n, out)

    __radd__ = __add__

    def __neg__(self) -> "Poly":
        return Poly(self.n, {a: -c for a, c in self._terms.items()})

    def __sub__(self, other) -> "Poly":
        return self + (-self._coerce(other))

    def __rsub__(self, other) -> "Poly":
        return self._coerce(other) - self

    def __mul__(self, other) -> "Poly":
        if isinstance(other, (int, float, np.floating, np.integer)):
            return scale(self, float(other))
        other = self._coerce(other)
        out: Dict[MultiIndex, float] = {}
        for a, ca in self._terms.items():
            for b, cb in other._terms.items():
                key = add_indices(a, b)
                out[key] = out.get(key, 0.0) + ca * cb
        return Poly(self.n, out)

    __rmul__ = __mul__

    def __pow__(self, k: int) -> "Poly":
        if k < 0:
            raise ValueError("negative power")
        out = Poly.constant(self.n, 1.0)
        for _ in range(k):
            out = out * self
        return out

    def __call__(self, x) -> float:
        return evaluate(self, x)

    def partial(self, i: int) -> "Poly":
        return partial(self, i)

    # -- serialization ------------------------------------------------
    def to_terms(self) -> list:
        """Term list ``[{"alpha": [...], "c": coeff}, ...]`` in graded-lex order."""
        if not self._terms:
            return []
        order = index_map(self.n, self.degree)
        return [
            {"alpha": list(alpha), "c": self._terms[alpha]}
            for alpha in sorted(self._terms, key=order.__getitem__)
        ]

    @classmethod
    def from_terms(cls, terms: Iterable[Mapping], n: int | None = None) -> "Poly":
        terms = list(terms)
        if n is None:
            if not terms:
                raise ValueError("cannot infer dimension of an empty term list")
            n = len(terms[0]["alpha"])
        return cls(n, _accumulate((t["alpha"], t["c"]) for t in terms))

    def to_json(self) -> str:
        return json.dumps(self.to_terms())

    @classmethod
    def from_json(cls, text: str, n: int | None = None) -> "Poly":
        return cls.from_terms(json.loads(text), n=n)


def _accumulate(pairs) -> Dict[MultiIndex, float]:
    out: Dict[MultiIndex, float] = {}
    for alpha, c in pairs:
        alpha = tuple(int(a) for a in alpha)
        out[alpha] = out.get(alpha, 0.0) + float(c)
    return out


def add(p: Poly, q: Poly) -> Poly:
    return p + q


def mul(p: Poly, q: Poly) -> Poly:
    return p * q


def scale(p: Poly, c: float) -> Poly:
    return Poly(p.n, {a: c * v for a, v in p.items()})


def evaluate(p: Poly, x) -> float:
    """Value of ``p`` at one point."""
    x = np.asarray(x, dtype=float)
    if x.shape != (p.n,):
        raise DimensionMismatch(f"point of shape {x.shape} for n={p.n}")
    total = 0.0
    for alpha, c in p.items():
        term = c
        for xi, a in zip(x, alpha):
            if a:
                term *= xi**a
        total += term
    return float(total)


def evaluate_many(p: Poly, points: np.ndarray) -> np.ndarray:
    """Values of ``p`` at the rows of an ``(N, n)`` array."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[1] != p.n:
        raise DimensionMismatch(f"points of shape {points.shape} for n={p.n}")
    out = np.zeros(points.shape[0])
    powers: Dict[Tuple[int, int], np.ndarray] = {}
    for alpha, c in p.items():
        term = np.full(points.shape[0], c)
        for i, a in enumerate(alpha):
            if a:
                key = (i, a)
                if key not in powers:
                    powers[key] = points[:, i] ** a
                term *= powers[key]
        out += term
    return out


def partial(p: Poly, i: int) -> Poly:
    """Formal derivative with respect to coordinate ``i`` (0-based)."""
    if not 0 <= i < p.n:
        raise IndexError(f"coordinate {i} out of range for n={p.n}")
    out: Dict[MultiIndex, float] = {}
    for alpha, c in p.items():
        if alpha[i]:
            beta = list(alpha)
            beta[i] -= 1
            out[tuple(beta)] = c * alpha[i]
    return Poly(p.n, out)
