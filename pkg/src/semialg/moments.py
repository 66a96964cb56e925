"""Closed-form moments of the Gaussian and exponential reference measures.

Two Gaussian density conventions are supported and must be chosen
explicitly:

* ``STANDARD``: the probability density ``(2 pi)^(-n/2) exp(-|x|^2 / 2)``
  (``param`` must be 1);
* ``EXPERIMENTAL``: the unnormalized density ``exp(-|x|^2 / sigma^2)``, whose
  total mass is ``(pi sigma^2)^(n/2)``.

The exponential measure has the unnormalized density
``exp(-lambda * sum(x))`` on the nonnegative orthant, total mass
``lambda^(-n)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from .polycore import MultiIndex, enumerate_multiindices


class MeasureKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    EXPONENTIAL = "exponential"


class Convention(str, enum.Enum):
    STANDARD = "standard"
    EXPERIMENTAL = "experimental"


@dataclass(frozen=True)
class MeasureSpec:
    kind: MeasureKind
    n: int
    param: float = 1.0
    convention: Convention = Convention.STANDARD

    def __post_init__(self):
        object.__setattr__(self, "kind", MeasureKind(self.kind))
        object.__setattr__(self, "convention", Convention(self.convention))
        if self.n < 1:
            raise ValueError("dimension must be >= 1")
        if not self.param > 0:
            raise ValueError(f"measure parameter must be > 0, got {self.param}")
        if (
            self.kind is MeasureKind.GAUSSIAN
            and self.convention is Convention.STANDARD
            and self.param != 1.0
        ):
            raise ValueError("the standard normalized Gaussian requires param == 1")

    @classmethod
    def gaussian(cls, n: int, sigma: float = 1.0, convention=Convention.STANDARD):
        return cls(MeasureKind.GAUSSIAN, n, sigma, convention)

    @classmethod
    def exponential(cls, n: int, lam: float = 1.0):
        return cls(MeasureKind.EXPONENTIAL, n, lam)

    @property
    def is_gaussian(self) -> bool:
        return self.kind is MeasureKind.GAUSSIAN

    @property
    def coordinate_std(self) -> float:
        """Standard deviation of one coordinate under the normalized law."""
        if self.kind is MeasureKind.EXPONENTIAL:
            return 1.0 / self.param
        if self.convention is Convention.STANDARD:
            return 1.0
        return self.param / math.sqrt(2.0)

    @property
    def total_mass(self) -> float:
        if self.kind is MeasureKind.EXPONENTIAL:
            return self.param ** (-self.n)
        if self.convention is Convention.STANDARD:
            return 1.0
        return (math.pi * self.param**2) ** (self.n / 2)

    @property
    def gradient_rate(self) -> float:
        """Coefficient ``k`` in ``grad log density = -k x`` (Gaussian) or ``-k 1`` (exponential)."""
        if self.kind is MeasureKind.EXPONENTIAL:
            return self.param
        if self.convention is Convention.STANDARD:
            return 1.0
        return 2.0 / self.param**2

    def log_density(self, x: np.ndarray) -> np.ndarray:
        """Log of the (possibly unnormalized) density at the rows of ``x``."""
        x = np.atleast_2d(x)
        if self.kind is MeasureKind.EXPONENTIAL:
            out = -self.param * x.sum(axis=1)
            return np.where((x >= 0).all(axis=1), out, -np.inf)
        sq = (x**2).sum(axis=1)
        if self.convention is Convention.STANDARD:
            return -0.5 * sq - 0.5 * self.n * math.log(2 * math.pi)
        return -sq / self.param**2


def _log_double_factorial_odd(k: int) -> float:
    # log((k-1)!!) for even k, via Gamma: (k-1)!! = 2^(k/2) Gamma((k+1)/2) / sqrt(pi)
    return 0.5 * k * math.log(2.0) + math.lgamma((k + 1) / 2) - 0.5 * math.log(math.pi)


def gaussian_moment(alpha: Sequence[int], sigma: float = 1.0, convention=Convention.STANDARD) -> float:
    """Moment ``int x^alpha dmu`` of the Gaussian under ``convention``."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    convention = Convention(convention)
    if any(a % 2 for a in alpha):
        return 0.0
    # sorted summation makes the value exactly invariant under permutations
    alpha = sorted(alpha)
    if convention is Convention.STANDARD:
        # exact integer product of (a-1)!!; the log-space path only guards overflow
        exact = math.prod(math.prod(range(a - 1, 0, -2)) for a in alpha)
        try:
            return float(exact)
        except OverflowError:
            return math.exp(sum(_log_double_factorial_odd(a) for a in alpha if a))
    logv = sum((a + 1) * math.log(sigma) + math.lgamma((a + 1) / 2) for a in alpha)
    return math.exp(logv)


def exponential_moment(alpha: Sequence[int], lam: float) -> float:
    """Moment of ``exp(-lam * sum(x))`` on the orthant: ``prod alpha_i! / lam^(alpha_i+1)``."""
    if not lam > 0:
        raise ValueError(f"lambda must be > 0, got {lam}")
    logv = sum(math.lgamma(a + 1) - (a + 1) * math.log(lam) for a in sorted(alpha))
    return math.exp(logv)


@dataclass
class MomentOracle:
    """Cached moment sequence of a reference measure."""

    spec: MeasureSpec
    _cache: Dict[MultiIndex, float] = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.spec.n

    def moment(self, alpha: Sequence[int]) -> float:
        alpha = tuple(int(a) for a in alpha)
        if len(alpha) != self.spec.n:
            raise ValueError(f"multi-index {alpha} has wrong length for n={self.spec.n}")
        try:
            return self._cache[alpha]
        except KeyError:
            pass
        if self.spec.kind is MeasureKind.GAUSSIAN:
            value = gaussian_moment(alpha, self.spec.param, self.spec.convention)
        else:
            value = exponential_moment(alpha, self.spec.param)
        # setdefault keeps inserts idempotent under concurrent readers
        return self._cache.setdefault(alpha, value)

    def moment_vector(self, d: int) -> np.ndarray:
        """Moments of all ``|alpha| <= d`` in graded lexicographic order."""
        return np.array([self.moment(a) for a in enumerate_multiindices(self.spec.n, d)])

    @property
    def total_mass(self) -> float:
        return self.moment((0,) * self.spec.n)

    def growth_bound(self, d: int) -> float:
        """``max(y_0, max_i y_{2d e_i})``, a bound on every ``|u_alpha|`` at level ``d``."""
        if d < 0:
            raise ValueError("d must be >= 0")
        n = self.spec.n
        best = self.total_mass
        for i in range(n):
            alpha = [0] * n
            alpha[i] = 2 * d
            best = max(best, self.moment(alpha))
        return best

    def integrate(self, p) -> float:
        """``int p dmu`` for a polynomial ``p``."""
        return float(sum(c * self.moment(a) for a, c in p.items()))
