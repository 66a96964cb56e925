"""Block-diagonal linear matrix inequality instances.

An :class:`SdpInstance` describes

    maximize    c @ u
    subject to  F0_b + sum_k u_k F_{b,k}  is PSD   for every block b
                A @ u == b

Block coefficients are stored as sparse ``(size*size, num_vars)`` matrices
whose column ``k`` is the row-major flattening of ``F_{b,k}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class LmiBlock:
    size: int
    const: np.ndarray
    coef: sp.csc_matrix
    label: str = ""
    #: rows are indexed by the monomials of degree <= basis_degree, when known
    basis_degree: Optional[int] = None
    #: an SDPA "diagonal" (LP) block: only diagonal entries are meaningful
    diagonal: bool = False

    def __post_init__(self):
        if self.const.shape != (self.size, self.size):
            raise ValueError(f"block {self.label!r}: constant has shape {self.const.shape}")
        if self.coef.shape[0] != self.size * self.size:
            raise ValueError(f"block {self.label!r}: coefficient rows != size^2")

    @property
    def num_vars(self) -> int:
        return self.coef.shape[1]

    def matrix(self, u: np.ndarray) -> np.ndarray:
        return self.const + (self.coef @ np.asarray(u, dtype=float)).reshape(self.size, self.size)

    def coef_dense(self) -> np.ndarray:
        """Coefficient matrices as a dense ``(num_vars, size, size)`` array."""
        return self.coef.T.toarray().reshape(self.num_vars, self.size, self.size)

    def is_symmetric(self, tol: float = 0.0) -> bool:
        if np.max(np.abs(self.const - self.const.T), initial=0.0) > tol:
            return False
        f = self.coef_dense()
        return bool(np.max(np.abs(f - f.transpose(0, 2, 1)), initial=0.0) <= tol)


@dataclass(frozen=True)
class Preconditioning:
    """Record of the rescaling applied to an instance.

    Original variables are ``u = var_scale * u_hat``; block ``b`` was congruence
    scaled as ``diag(block_scales[b]) F diag(block_scales[b])``; equality row
    ``i`` was multiplied by ``row_scale[i]``.
    """

    var_scale: np.ndarray
    block_scales: tuple
    row_scale: np.ndarray


@dataclass(frozen=True)
class SdpInstance:
    num_vars: int
    c: np.ndarray
    blocks: tuple
    A: np.ndarray = None
    b: np.ndarray = None
    precond: Optional[Preconditioning] = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "blocks", tuple(self.blocks))
        A = np.zeros((0, self.num_vars)) if self.A is None else np.asarray(self.A, dtype=float)
        b = np.zeros(A.shape[0]) if self.b is None else np.asarray(self.b, dtype=float)
        object.__setattr__(self, "A", A.reshape(-1, self.num_vars))
        object.__setattr__(self, "b", b.reshape(-1))
        if c.shape != (self.num_vars,):
            raise ValueError("objective length differs from num_vars")
        if self.A.shape[0] != self.b.shape[0]:
            raise ValueError("equality matrix and right-hand side disagree")
        for blk in self.blocks:
            if blk.num_vars != self.num_vars:
                raise ValueError(f"block {blk.label!r} has {blk.num_vars} variables")

    @property
    def num_equalities(self) -> int:
        return self.A.shape[0]

    @property
    def var_scale(self) -> np.ndarray:
        if self.precond is None:
            return np.ones(self.num_vars)
        return self.precond.var_scale

    def objective(self, u: np.ndarray) -> float:
        return float(self.c @ u)

    def block_matrices(self, u: np.ndarray) -> List[np.ndarray]:
        return [blk.matrix(u) for blk in self.blocks]

    def to_original(self, u_hat: np.ndarray) -> np.ndarray:
        return self.var_scale * np.asarray(u_hat, dtype=float)

    def from_original(self, u: np.ndarray) -> np.ndarray:
        return np.asarray(u, dtype=float) / self.var_scale

    def with_metadata(self, **kw) -> "SdpInstance":
        meta = dict(self.metadata)
        meta.update(kw)
        return replace(self, metadata=meta)


def block_from_dense(const: np.ndarray, coefs: Sequence[np.ndarray], label: str = "", **kw) -> LmiBlock:
    """Build a block from a constant matrix and a list of coefficient matrices."""
    const = np.asarray(const, dtype=float)
    size = const.shape[0]
    cols = [np.asarray(f, dtype=float).reshape(-1) for f in coefs]
    coef = sp.csc_matrix(np.stack(cols, axis=1)) if cols else sp.csc_matrix((size * size, 0))
    coef.eliminate_zeros()
    return LmiBlock(size, const, coef, label, **kw)
