"""Solve an SDPA sparse file with an external solver (cvxpy) and write an
SDPA-style solution file.  Development aid; cvxpy is not a runtime dependency.

usage: python tools/make_external_fixture.py in.dat-s out.sol [SOLVER]
"""

import sys

import cvxpy as cp
import numpy as np


def read_sdpa(path):
    lines = [l for l in open(path) if l.strip() and l.lstrip()[0] not in '"*']
    toks = [l.replace(",", " ").replace("{", " ").replace("}", " ").split() for l in lines]
    m, nb = int(toks[0][0]), int(toks[1][0])
    struct = [int(t) for t in toks[2][:nb]]
    c = np.array([float(t) for t in toks[3][:m]])
    F = [[np.zeros((abs(s), abs(s))) for s in struct] for _ in range(m + 1)]
    for t in toks[4:]:
        k, b, i, j, v = int(t[0]), int(t[1]) - 1, int(t[2]) - 1, int(t[3]) - 1, float(t[4])
        F[k][b][i, j] = F[k][b][j, i] = v
    return m, struct, c, F


def main(src, dst, solver="CLARABEL"):
    m, struct, c, F = read_sdpa(src)
    x = cp.Variable(m)
    cons = []
    for b, s in enumerate(struct):
        expr = sum(x[k] * F[k + 1][b] for k in range(m)) - F[0][b]
        cons.append(expr >> 0 if s > 0 else cp.diag(expr) >= 0)
    prob = cp.Problem(cp.Minimize(c @ x), cons)
    prob.solve(solver=solver)
    with open(dst, "w") as fh:
        fh.write(f"phase.value = {'pdOPT' if prob.status == 'optimal' else 'noINFO'}\n")
        fh.write(f"objValPrimal = {float(prob.value)!r}\n")
        fh.write(f"objValDual = {float(prob.value)!r}\n")
        fh.write(f"solver = cvxpy {cp.__version__} {solver}\n")
        fh.write("xVec = \n{" + ",".join(repr(float(v)) for v in x.value) + "}\n")


if __name__ == "__main__":
    main(*sys.argv[1:])
