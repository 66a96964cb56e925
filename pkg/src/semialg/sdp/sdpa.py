"""SDPA sparse format (``.dat-s``) export/import and plain-text solutions.

SDPA solves ``min c'x`` subject to ``sum_i x_i F_i - F_0 >= 0``.  Our
instances maximize ``c'u`` subject to ``F_0 + sum_k u_k F_k >= 0``, so the
export negates both the objective and the constant matrices.

Equalities have no native encoding.  Two modes are offered:

* ``"reduced"``: substitute ``u = u0 + N w`` and export the problem in ``w``
  (a constant objective offset ``c'u0`` is recorded in a comment);
* ``"paired"``: append one diagonal (LP) block holding ``A u - b >= 0`` and
  ``b - A u >= 0``.

Floats are written with ``repr`` so files are byte-stable and lossless.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import scipy.sparse as sp

from ..instance import LmiBlock, SdpInstance
from .solver import Residuals, SdpSolution, Status, nullspace_parametrization

EXPORT_MODES = ("reduced", "paired")

_PHASE = {
    Status.OPTIMAL: "pdOPT",
    Status.INACCURATE: "pdFEAS",
    Status.PRIMAL_INFEASIBLE: "pINF_dFEAS",
    Status.DUAL_INFEASIBLE: "pFEAS_dINF",
    Status.ITER_LIMIT: "noINFO",
}
_STATUS = {v: k for k, v in _PHASE.items()}
_STATUS.update({"pFEAS": Status.INACCURATE, "dFEAS": Status.INACCURATE, "pUNBD": Status.DUAL_INFEASIBLE, "dUNBD": Status.PRIMAL_INFEASIBLE})


class SdpaParseError(ValueError):
    def __init__(self, line: int, msg: str):
        super().__init__(f"line {line}: {msg}")
        self.line = line


def _fmt(x: float) -> str:
    x = float(x)
    return repr(0.0 if x == 0 else x)


# ---------------------------------------------------------------------------
# equality handling


@dataclass(frozen=True)
class ReducedForm:
    """An instance rewritten in nullspace coordinates ``u = u0 + N w``."""

    instance: SdpInstance
    u0: np.ndarray
    N: np.ndarray
    offset: float

    def lift(self, w: np.ndarray) -> np.ndarray:
        return self.u0 + self.N @ np.asarray(w, dtype=float)


def reduce_instance(inst: SdpInstance) -> ReducedForm:
    u0, N = nullspace_parametrization(inst.A, inst.b, inst.num_vars)
    m = N.shape[1]
    blocks = []
    for blk in inst.blocks:
        const = blk.const + (blk.coef @ u0).reshape(blk.size, blk.size)
        coef = sp.csc_matrix(np.asarray(blk.coef @ N))
        coef.data[np.abs(coef.data) < 1e-15 * max(1.0, np.abs(coef.data).max(initial=0.0))] = 0.0
        coef.eliminate_zeros()
        blocks.append(LmiBlock(blk.size, const, coef, blk.label, None, blk.diagonal))
    offset = float(inst.c @ u0)
    meta = dict(inst.metadata, sdpa_mode="reduced", sdpa_offset=offset)
    reduced = SdpInstance(m, N.T @ inst.c, blocks, metadata=meta)
    return ReducedForm(reduced, u0, N, offset)


def paired_instance(inst: SdpInstance) -> SdpInstance:
    """Equalities as a diagonal block of ``2 * num_equalities`` inequalities."""
    if inst.num_equalities == 0:
        return inst
    A, b = inst.A, inst.b
    k = 2 * A.shape[0]
    rows = np.vstack([A, -A])
    const = np.diag(np.concatenate([-b, b]))
    diag_pos = np.arange(k) * (k + 1)
    coef = sp.csc_matrix(sp.coo_matrix(rows)).tocoo()
    coef = sp.csc_matrix((coef.data, (diag_pos[coef.row], coef.col)), shape=(k * k, inst.num_vars))
    lp = LmiBlock(k, const, coef, "equalities", None, True)
    meta = dict(inst.metadata, sdpa_mode="paired")
    return SdpInstance(inst.num_vars, inst.c, inst.blocks + (lp,), metadata=meta)


# ---------------------------------------------------------------------------
# export


def _default_comments(inst: SdpInstance) -> List[str]:
    meta = inst.metadata
    out = ['"semialg SDP instance: maximize c\'u s.t. F0 + sum u_k F_k >= 0 (signs flipped for SDPA)']
    keys = [k for k in ("scheme", "n", "d", "sdpa_mode") if k in meta]
    if keys:
        out.append('"' + " ".join(f"{k}={meta[k]}" for k in keys))
    if "sdpa_offset" in meta:
        out.append(f'"objective offset {_fmt(meta["sdpa_offset"])}')
    return out


def export_sdpa(inst: SdpInstance, mode: str = "reduced") -> str:
    """Text of the instance in SDPA sparse format."""
    if mode not in EXPORT_MODES:
        raise ValueError(f"unknown export mode {mode!r}; expected one of {EXPORT_MODES}")
    if inst.num_equalities:
        inst = reduce_instance(inst).instance if mode == "reduced" else paired_instance(inst)
    comments = inst.metadata.get("sdpa_comments") or _default_comments(inst)
    lines = list(comments)
    lines.append(str(inst.num_vars))
    lines.append(str(len(inst.blocks)))
    lines.append(" ".join(str(-b.size if b.diagonal else b.size) for b in inst.blocks))
    lines.append(" ".join(_fmt(-c) for c in inst.c))
    entries = []
    for bno, blk in enumerate(inst.blocks, start=1):
        s = blk.size
        iu, ju = np.triu_indices(s)
        keep = iu == ju if blk.diagonal else np.ones(iu.size, dtype=bool)
        iu, ju = iu[keep], ju[keep]
        const = -blk.const[iu, ju]
        for i, j, v in zip(iu, ju, const):
            if v != 0:
                entries.append((0, bno, i + 1, j + 1, v))
        coef = blk.coef.tocsc()
        flat = iu * s + ju
        lookup = np.full(s * s, -1)
        lookup[flat] = np.arange(flat.size)
        for k in range(inst.num_vars):
            lo, hi = coef.indptr[k], coef.indptr[k + 1]
            for pos, v in zip(coef.indices[lo:hi], coef.data[lo:hi]):
                if lookup[pos] >= 0 and v != 0:
                    entries.append((k + 1, bno, pos // s + 1, pos % s + 1, v))
    entries.sort(key=lambda e: e[:4])
    lines.extend(f"{m} {b} {i} {j} {_fmt(v)}" for m, b, i, j, v in entries)
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# import

_SEP = re.compile(r"[,{}()]")


def import_sdpa(text: str) -> SdpInstance:
    """Parse SDPA sparse text into a (maximization) :class:`SdpInstance`."""
    comments: List[str] = []
    body = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.strip()
        if not body and (stripped.startswith('"') or stripped.startswith("*")):
            comments.append(raw.rstrip())
            continue
        if not stripped:
            continue
        body.append((lineno, _SEP.sub(" ", stripped).split()))
    if len(body) < 4:
        last = body[-1][0] if body else len(text.splitlines())
        raise SdpaParseError(last, "truncated header")

    def ints(idx, count=None):
        lineno, toks = body[idx]
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise SdpaParseError(lineno, f"expected integers, got {' '.join(toks)!r}") from None
        if count is not None and len(vals) < count:
            raise SdpaParseError(lineno, f"expected {count} integers")
        return vals

    m = ints(0, 1)[0]
    nblocks = ints(1, 1)[0]
    if m < 0 or nblocks < 1:
        raise SdpaParseError(body[0][0], "bad constraint or block count")
    struct = ints(2, nblocks)[:nblocks]
    if any(s == 0 for s in struct):
        raise SdpaParseError(body[2][0], "zero block size")
    lineno, toks = body[3]
    try:
        c = np.array([float(t) for t in toks[:m]])
    except ValueError:
        raise SdpaParseError(lineno, "bad objective vector") from None
    if c.size != m:
        raise SdpaParseError(lineno, f"objective has {c.size} entries, expected {m}")

    sizes = [abs(s) for s in struct]
    consts = [np.zeros((s, s)) for s in sizes]
    trip = [([], [], []) for _ in sizes]
    for lineno, toks in body[4:]:
        if len(toks) != 5:
            raise SdpaParseError(lineno, "entry lines need 5 fields: mat block i j value")
        try:
            mat, blk, i, j = (int(t) for t in toks[:4])
            v = float(toks[4])
        except ValueError:
            raise SdpaParseError(lineno, "malformed entry") from None
        if not (0 <= mat <= m and 1 <= blk <= nblocks):
            raise SdpaParseError(lineno, f"matrix {mat} / block {blk} out of range")
        s = sizes[blk - 1]
        if not (1 <= i <= s and 1 <= j <= s):
            raise SdpaParseError(lineno, f"index ({i},{j}) outside block of size {s}")
        if struct[blk - 1] < 0 and i != j:
            raise SdpaParseError(lineno, "off-diagonal entry in a diagonal block")
        i, j = i - 1, j - 1
        if mat == 0:
            consts[blk - 1][i, j] = consts[blk - 1][j, i] = -v
        else:
            rows, cols, vals = trip[blk - 1]
            rows.append(i * s + j)
            cols.append(mat - 1)
            vals.append(v)
            if i != j:
                rows.append(j * s + i)
                cols.append(mat - 1)
                vals.append(v)
    blocks = []
    for b, (s, st) in enumerate(zip(sizes, struct)):
        rows, cols, vals = trip[b]
        coef = sp.csc_matrix((vals, (rows, cols)), shape=(s * s, m))
        blocks.append(LmiBlock(s, consts[b], coef, f"block{b + 1}", None, st < 0))
    return SdpInstance(m, -c, blocks, metadata={"sdpa_comments": comments})


# ---------------------------------------------------------------------------
# solutions


def write_solution(sol: SdpSolution) -> str:
    """SDPA-style solution text for the instance variables of ``sol``."""
    x = sol.u_instance if sol.u_instance is not None else sol.u
    r = sol.residuals
    lines = [
        f"phase.value = {_PHASE[sol.status]}",
        f"objValPrimal = {_fmt(-sol.primal_obj)}",
        f"objValDual = {_fmt(-sol.dual_obj)}",
        f"iterations = {sol.iterations}",
        f"residuals = {_fmt(r.primal)} {_fmt(r.dual)} {_fmt(r.gap)}",
        "xVec = ",
        "{" + ",".join(_fmt(v) for v in x) + "}",
    ]
    return "\n".join(lines) + "\n"


_KV = re.compile(r"^\s*([A-Za-z.]+)\s*=\s*(.*)$")


def import_solution(text: str, instance: Optional[SdpInstance] = None) -> SdpSolution:
    """Parse SDPA-style solution output (ours or an external solver's).

    ``u`` is mapped to original units when ``instance`` is given.
    """
    fields = {}
    xvec = None
    lines = text.splitlines()
    k = 0
    while k < len(lines):
        mt = _KV.match(lines[k])
        if mt:
            key, val = mt.group(1), mt.group(2).strip()
            if key == "xVec":
                if not val:
                    k += 1
                    val = lines[k].strip() if k < len(lines) else ""
                try:
                    xvec = np.array([float(t) for t in _SEP.sub(" ", val).split()])
                except ValueError:
                    raise SdpaParseError(k + 1, "malformed xVec") from None
            else:
                fields[key] = (k + 1, val)
        k += 1
    for key in ("objValPrimal", "objValDual"):
        if key not in fields:
            raise SdpaParseError(len(lines), f"missing {key}")
    if xvec is None:
        raise SdpaParseError(len(lines), "missing xVec")

    def num(key):
        lineno, val = fields[key]
        try:
            return float(val.split()[0])
        except (ValueError, IndexError):
            raise SdpaParseError(lineno, f"bad value for {key}") from None

    pobj, dobj = -num("objValPrimal"), -num("objValDual")
    status = Status.OPTIMAL
    if "phase.value" in fields:
        status = _STATUS.get(fields["phase.value"][1], Status.ITER_LIMIT)
    iters = 0
    if "iterations" in fields:
        iters = int(fields["iterations"][1])
    res = Residuals(float("nan"), float("nan"), abs(pobj - dobj) / (1 + abs(pobj)))
    if "residuals" in fields:
        vals = [float(t) for t in fields["residuals"][1].split()]
        res = Residuals(*vals[:3])
    u = instance.to_original(xvec) if instance is not None else xvec.copy()
    return SdpSolution(u, pobj, dobj, status, res, iters, xvec)
