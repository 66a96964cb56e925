"""Interior-point solver against analytic answers and a grid-search oracle."""


import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semialg.instance import SdpInstance, block_from_dense
from semialg.moments import MeasureSpec, MomentOracle
from semialg.polycore import Poly
from semialg.relaxation import SemiAlgebraicSet, build_scheme1, build_scheme3
from semialg.sdp import SolverConfig, Status, nullspace_parametrization, solve
from sdp_oracle import grid_search, lin, random_instance, tiny_interval, tiny_psd

ERF_MASS = 0.6826894921370859  # 2 Phi(1) - 1


def interval_set():
    x = Poly.variable(1, 0)
    return SemiAlgebraicSet(1, [1 - x * x])


class TestAnalytic:
    def test_tiny_psd(self):
        sol = solve(tiny_psd())
        assert sol.status is Status.OPTIMAL
        assert sol.u[0] == pytest.approx(1.0, abs=1e-7)
        assert sol.primal_obj == pytest.approx(1.0, abs=1e-7)

    def test_tiny_interval(self):
        sol = solve(tiny_interval())
        assert sol.status is Status.OPTIMAL
        assert sol.primal_obj == pytest.approx(3.0, abs=1e-7)

    def test_with_equality(self):
        # u0 + u1 = 1, 0 <= u0 <= 3, u1 >= -1: optimum u = (2, -1)
        inst = SdpInstance(
            2, np.array([1.0, 0.0]), [lin(0, [1, 0]), lin(3, [-1, 0]), lin(1, [0, 1])], np.array([[1.0, 1.0]]), np.array([1.0])
        )
        sol = solve(inst)
        assert sol.status is Status.OPTIMAL
        np.testing.assert_allclose(sol.u, [2, -1], atol=1e-6)

    def test_primal_infeasible(self):
        inst = SdpInstance(1, np.array([1.0]), [lin(-1, [1]), lin(0, [-1])])
        assert solve(inst).status is Status.PRIMAL_INFEASIBLE

    def test_unbounded(self):
        assert solve(SdpInstance(1, np.array([1.0]), [lin(0, [1])])).status is Status.DUAL_INFEASIBLE


class TestHierarchyInstances:
    def test_scheme1_interval_monotone(self):
        o = MomentOracle(MeasureSpec.gaussian(1))
        v3 = solve(build_scheme1(interval_set(), o, 3))
        v4 = solve(build_scheme1(interval_set(), o, 4))
        assert v3.status is v4.status is Status.OPTIMAL
        assert ERF_MASS <= v4.primal_obj <= v3.primal_obj + 1e-8

    def test_scheme1_interval_d1_closed_form(self):
        # d=1: max u0 with M1(u) >= 0, I - M1(u) >= 0, u0 >= u2; the optimum is 1
        sol = solve(build_scheme1(interval_set(), MomentOracle(MeasureSpec.gaussian(1)), 1))
        assert sol.primal_obj == pytest.approx(1.0, abs=1e-7)


def _instances():
    cases = [tiny_psd(), tiny_interval()]
    o = MomentOracle(MeasureSpec.gaussian(2))
    x, y = Poly.variable(2, 0), Poly.variable(2, 1)
    disc = SemiAlgebraicSet(2, [1 - x * x - y * y])
    cases += [build_scheme1(disc, o, 3), build_scheme3(disc, o, 4)]
    e = MomentOracle(MeasureSpec.exponential(2, 5.0))
    cases.append(build_scheme3(SemiAlgebraicSet(2, [1 - 3 * x - y]), e, 4))
    return cases


@pytest.mark.parametrize("k", range(5))
def test_weak_duality_and_residuals(k):
    inst = _instances()[k]
    cfg = SolverConfig()
    sol = solve(inst, cfg)
    assert sol.status is Status.OPTIMAL
    p, d = sol.primal_obj, sol.dual_obj
    assert d >= p - 10 * cfg.tol_gap * (1 + abs(p))
    assert abs(p - d) <= cfg.tol_gap * (1 + abs(p))
    r = sol.residuals
    assert r.primal <= cfg.tol_feas and r.dual <= cfg.tol_feas and r.gap <= cfg.tol_gap


@pytest.mark.parametrize("k", range(5))
def test_determinism(k):
    a, b = solve(_instances()[k]), solve(_instances()[k])
    assert a.iterations == b.iterations
    assert a.primal_obj == b.primal_obj and a.dual_obj == b.dual_obj
    assert np.array_equal(a.u, b.u)


def disc_instance(c):
    """[[1 + u0, u1], [u1, 1 - u0]] PSD is the unit disc; the argmax is c / |c|."""
    F = [np.array([[1, 0], [0, -1]], float), np.array([[0, 1], [1, 0]], float)]
    return SdpInstance(2, np.asarray(c, float), [block_from_dense(np.eye(2), F)])


@pytest.mark.parametrize("make", [tiny_psd, tiny_interval, lambda: disc_instance([0.6, -0.3])])
def test_scale_invariance(make):
    inst = make()
    scaled = SdpInstance(inst.num_vars, inst.c * 1e3, inst.blocks)
    u1, u2 = solve(inst).u, solve(scaled).u
    np.testing.assert_allclose(u2, u1, atol=1e-6)


def test_disc_argmax():
    sol = solve(disc_instance([0.6, -0.3]))
    np.testing.assert_allclose(sol.u, np.array([0.6, -0.3]) / np.hypot(0.6, -0.3), atol=1e-6)


# -- grid-search oracle -----------------------------------------------------


@pytest.mark.parametrize("seed", range(12))
def test_grid_oracle_agrees(seed):
    k = 1 + seed % 3
    inst = random_instance(seed, k)
    ref, _ = grid_search(inst)
    sol = solve(inst)
    assert sol.status is Status.OPTIMAL
    assert sol.primal_obj == pytest.approx(ref, abs=1e-3)
    assert sol.primal_obj >= ref - 1e-6  # grid points are feasible, so none beats the optimum


@settings(max_examples=15)
@given(st.integers(0, 10**6), st.integers(1, 3))
def test_grid_oracle_property(seed, k):
    inst = random_instance(seed, k)
    ref, _ = grid_search(inst)
    assert solve(inst).primal_obj == pytest.approx(ref, abs=1e-3)


# -- nullspace helper -------------------------------------------------------


@given(st.integers(0, 10**6), st.integers(1, 6), st.integers(0, 5))
def test_nullspace_parametrization(seed, nvars, rows):
    rng = np.random.default_rng(seed)
    rows = min(rows, nvars)
    A = rng.normal(size=(rows, nvars))
    if rows > 1:
        A[-1] = A[0] * 2.0  # a dependent row
    b = A @ rng.normal(size=nvars)
    u0, N = nullspace_parametrization(A, b, nvars)
    assert np.allclose(A @ u0, b, atol=1e-9)
    if N.size:
        assert np.allclose(A @ N, 0, atol=1e-9)
        assert np.allclose(N.T @ N, np.eye(N.shape[1]), atol=1e-12)
    assert N.shape[1] == nvars - np.linalg.matrix_rank(A) if rows else N.shape[1] == nvars


def test_solver_config_validation():
    for kw in ({"tol_gap": 0}, {"tol_feas": -1}, {"max_iter": 0}, {"step": 1.0}, {"step": 0.0}):
        with pytest.raises(ValueError):
            SolverConfig(**kw)
