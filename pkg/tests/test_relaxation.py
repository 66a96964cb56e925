import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from semialg.moments import Convention, MeasureSpec, MomentOracle
from semialg.polycore import Poly, basis_size, enumerate_multiindices, index_map
from semialg.relaxation import (
    RelaxationError,
    SemiAlgebraicSet,
    augment_exponential_support,
    basis_scales,
    build_scheme1,
    build_scheme3,
    complement_cells,
    default_stokes_multiplier,
    linear_form,
    localizing_entries,
    moment_matrix_entries,
    precondition,
    prepare_set,
    stokes_budget,
    stokes_polys,
    unprecondition,
    variable_scales,
)

G1 = MeasureSpec.gaussian(1)
G2 = MeasureSpec.gaussian(2)


def var(n, i):
    return Poly.variable(n, i)


def interval():
    x = var(1, 0)
    return SemiAlgebraicSet(1, [1 - x * x])


def disc():
    x, y = var(2, 0), var(2, 1)
    return SemiAlgebraicSet(2, [1 - x * x - y * y])


class TestSet:
    def test_degree_zero_rejected(self):
        with pytest.raises(RelaxationError):
            SemiAlgebraicSet(1, [Poly.constant(1, 1.0)])

    def test_dimension_checked(self):
        with pytest.raises(RelaxationError):
            SemiAlgebraicSet(2, [var(1, 0)])

    def test_d0(self):
        x = var(2, 0)
        s = SemiAlgebraicSet(2, [x, 1 - x**3])
        assert s.half_degrees == [1, 2] and s.d0 == 2


class TestMomentMatrix:
    def test_n1_d1(self):
        mm = moment_matrix_entries(1, 1)
        u = np.array([10.0, 11.0, 12.0])
        np.testing.assert_array_equal(mm.matrix(u), [[10, 11], [11, 12]])

    def test_gaussian_values(self):
        y = MomentOracle(G1).moment_vector(2)
        np.testing.assert_allclose(moment_matrix_entries(1, 1).matrix(y), np.eye(2))

    def test_cross_entry(self):
        mm = moment_matrix_entries(2, 1)
        assert mm.entry((1, 0), (0, 1)) == index_map(2, 2)[(1, 1)]

    @pytest.mark.parametrize("n,d", [(1, 1), (1, 3), (2, 1), (2, 2), (2, 3)])
    def test_matches_symbolic_outer_product(self, n, d):
        # B_alpha from expanding v_d(x) v_d(x)^T with polynomial arithmetic
        basis = enumerate_multiindices(n, d)
        v = [Poly.monomial(b) for b in basis]
        pos = index_map(n, 2 * d)
        rng = np.random.default_rng(n * 10 + d)
        u = rng.normal(size=basis_size(n, 2 * d))
        ref = np.empty((len(v), len(v)))
        for r, p in enumerate(v):
            for c, q in enumerate(v):
                ref[r, c] = sum(coef * u[pos[a]] for a, coef in (p * q).items())
        np.testing.assert_array_equal(moment_matrix_entries(n, d).matrix(u), ref)


class TestLocalizing:
    def test_interval_d1(self):
        loc = localizing_entries(interval().gs[0], 1, 1)
        assert loc.side == 1
        assert loc.linear_form(0, 0) == {0: 1.0, 2: -1.0}

    def test_linear_g(self):
        loc = localizing_entries(var(2, 0), 2, 1)
        assert loc.side == 1 and loc.linear_form(0, 0) == {index_map(2, 2)[(1, 0)]: 1.0}

    def test_interval_d2(self):
        loc = localizing_entries(interval().gs[0], 1, 2)
        assert loc.side == 2
        assert loc.linear_form(1, 1) == {2: 1.0, 4: -1.0}

    def test_level_too_small(self):
        with pytest.raises(RelaxationError):
            localizing_entries(var(1, 0) ** 4, 1, 1)

    def test_matches_symbolic(self):
        x, y = var(2, 0), var(2, 1)
        g = 1 - x * x + 0.5 * x * y
        d = 3
        loc = localizing_entries(g, 2, d)
        basis = enumerate_multiindices(2, d - 1)
        pos = index_map(2, 2 * d)
        u = np.random.default_rng(1).normal(size=basis_size(2, 2 * d))
        ref = np.array(
            [[sum(c * u[pos[a]] for a, c in (Poly.monomial(b) * Poly.monomial(e) * g).items()) for e in basis] for b in basis]
        )
        np.testing.assert_allclose(loc.matrix(u), ref, rtol=1e-14)


class TestSupport:
    def test_augment_2d(self):
        x, y = var(2, 0), var(2, 1)
        s = augment_exponential_support(SemiAlgebraicSet(2, [1 - 3 * x - y]))
        assert s.gs == (1 - 3 * x - y, x, y) and s.orthant_augmented

    def test_augment_1d(self):
        g = 1 - var(1, 0)
        assert augment_exponential_support(SemiAlgebraicSet(1, [g])).gs == (g, var(1, 0))

    def test_double_augmentation(self):
        s = augment_exponential_support(interval())
        with pytest.raises(RelaxationError):
            augment_exponential_support(s)

    def test_prepare_idempotent(self):
        e = MeasureSpec.exponential(1, 1.0)
        once = prepare_set(interval(), e)
        assert prepare_set(once, e) is once
        assert prepare_set(interval(), G1) == interval()


class TestStokes:
    def test_gaussian_example(self):
        x = var(1, 0)
        ps = stokes_polys(1 - x * x, G1, 2)
        assert ps[0].alpha == (0,) and ps[0].i == 0
        assert ps[0].p == x**3 - 3 * x

    def test_exponential_example(self):
        x = var(1, 0)
        ps = stokes_polys(x * (1 - x), MeasureSpec.exponential(1, 1.0), 1)
        assert ps[0].p == x * x - 3 * x + 1

    def test_experimental_rate(self):
        x = var(1, 0)
        spec = MeasureSpec.gaussian(1, 0.5, Convention.EXPERIMENTAL)
        p = stokes_polys(1 - x * x, spec, 2)[0].p
        assert p == -2 * x - 8 * x * (1 - x * x)

    def test_odd_integrand_vanishes(self):
        from scipy.integrate import quad

        val = quad(lambda t: (t**3 - 3 * t) * math.exp(-t * t / 2), -1, 1)[0]
        assert abs(val) < 1e-15

    def test_budget_warning(self):
        x = var(1, 0)
        with pytest.warns(UserWarning):
            assert stokes_polys(x**4 - 1, G1, 2) == []

    @pytest.mark.parametrize("spec", [G2, MeasureSpec.exponential(2, 5.0), MeasureSpec.gaussian(2, 0.8, "experimental")], ids=str)
    @pytest.mark.parametrize("d", [1, 2, 3, 4, 6, 8])
    def test_degree_bookkeeping(self, spec, d):
        s = prepare_set(disc(), spec)
        f = default_stokes_multiplier(s)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ps = stokes_polys(f, spec, d)
        assert all(p.p.degree <= 2 * d for p in ps)
        r = stokes_budget(f, spec, d)
        assert len(ps) == (spec.n * basis_size(spec.n, r) if r >= 0 else 0)

    def test_default_multiplier(self):
        x, y = var(2, 0), var(2, 1)
        assert default_stokes_multiplier(disc()) == disc().gs[0]
        s = augment_exponential_support(SemiAlgebraicSet(2, [1 - 3 * x - y]))
        assert default_stokes_multiplier(s) == (1 - 3 * x - y) * x * y
        with pytest.raises(RelaxationError):
            default_stokes_multiplier(SemiAlgebraicSet(2, []))


class TestComplementCells:
    def test_staircase(self):
        x, y = var(2, 0), var(2, 1)
        g1, g2 = 1 - x, 1 - y * y
        cells = complement_cells(SemiAlgebraicSet(2, [g1, g2]), G2)
        assert [c.gs for c in cells] == [(-g1,), (g1, -g2)]

    def test_exponential_cells(self):
        x, y = var(2, 0), var(2, 1)
        g = 1 - 3 * x - y
        spec = MeasureSpec.exponential(2, 5.0)
        for s in (SemiAlgebraicSet(2, [g]), prepare_set(SemiAlgebraicSet(2, [g]), spec)):
            cells = complement_cells(s, spec)
            assert [c.gs for c in cells] == [(-g, x, y)]

    def test_single(self):
        cells = complement_cells(disc(), G2)
        assert len(cells) == 1 and cells[0].gs == (-disc().gs[0],)

    def test_cover_by_sampling(self):
        # each sample lies in exactly one of {set, cells} up to null boundaries
        x, y = var(2, 0), var(2, 1)
        s = SemiAlgebraicSet(2, [1 - x * x - y * y, x + 0.3, 0.5 - x * y])
        pts = np.random.default_rng(5).normal(size=(200_000, 2)) * 1.5
        regions = [s] + complement_cells(s, G2)
        count = sum(r.contains(pts).astype(int) for r in regions)
        assert np.mean(count == 1) > 1 - 1e-3


class TestBuilders:
    def test_scheme1_interval_d1(self):
        inst = build_scheme1(interval(), MomentOracle(G1), 1, precondition_instance=False)
        assert inst.num_vars == 3
        np.testing.assert_array_equal(inst.c, [1, 0, 0])
        u = np.array([0.3, 0.1, 0.2])
        mats = inst.block_matrices(u)
        np.testing.assert_allclose(mats[0], [[0.3, 0.1], [0.1, 0.2]])
        np.testing.assert_allclose(mats[1], [[0.7, -0.1], [-0.1, 0.8]])
        np.testing.assert_allclose(mats[2], [[0.1]])
        assert [b.label for b in inst.blocks] == ["moment", "complement", "localizing[0]"]
        assert inst.num_equalities == 0

    def test_objective_from_polynomial(self):
        x = var(1, 0)
        inst = build_scheme1(interval(), MomentOracle(G1), 2, x * x + 2, precondition_instance=False)
        np.testing.assert_array_equal(inst.c, [2, 0, 1, 0, 0])

    def test_level_below_d0(self):
        x = var(1, 0)
        s = SemiAlgebraicSet(1, [1 - x**4])
        for build in (build_scheme1, build_scheme3):
            with pytest.raises(RelaxationError, match="d0=2"):
                build(s, MomentOracle(G1), 1)

    def test_scheme3_contains_stokes_row(self):
        inst = build_scheme3(interval(), MomentOracle(G1), 2, precondition_instance=False)
        row = np.array([0, -3, 0, 1, 0.0])  # u3 - 3 u1
        coef, *_ = np.linalg.lstsq(inst.A.T, row, rcond=None)
        assert np.linalg.norm(inst.A.T @ coef - row) < 1e-12

    @pytest.mark.parametrize("spec", [G2, MeasureSpec.exponential(2, 5.0)], ids=str)
    @pytest.mark.parametrize("d", [2, 4])
    def test_scheme3_extends_scheme1(self, spec, d):
        o = MomentOracle(spec)
        s = prepare_set(disc(), spec)
        i1 = build_scheme1(s, o, d, precondition_instance=False)
        i3 = build_scheme3(s, o, d, precondition_instance=False)
        assert len(i1.blocks) == len(i3.blocks)
        for b1, b3 in zip(i1.blocks, i3.blocks):
            np.testing.assert_array_equal(b1.const, b3.const)
            assert (b1.coef != b3.coef).nnz == 0
        f = default_stokes_multiplier(s)
        r = stokes_budget(f, spec, d)
        assert 0 < i3.num_equalities <= spec.n * basis_size(spec.n, r)
        assert np.linalg.matrix_rank(i3.A) == i3.num_equalities

    def test_blocks_symmetric(self):
        inst = build_scheme3(disc(), MomentOracle(G2), 3)
        assert all(b.is_symmetric(1e-15) for b in inst.blocks)


class TestPreconditioning:
    def test_identity_when_unit_moments(self):
        # every y_{2 beta} is 1 at d = 1 under the standard Gaussian
        o = MomentOracle(G2)
        raw = build_scheme1(disc(), o, 1, precondition_instance=False)
        pre = precondition(raw, o)
        np.testing.assert_array_equal(pre.precond.var_scale, np.ones(raw.num_vars))
        np.testing.assert_array_equal(pre.c, raw.c)

    def test_quartic_scale(self):
        # the x^2 row of M_2 is divided by sqrt(y_4) = sqrt(3)
        o = MomentOracle(G1)
        assert basis_scales(o, 2)[2] == pytest.approx(math.sqrt(3), rel=1e-15)
        assert variable_scales(o, 2)[4] == pytest.approx(3.0, rel=1e-15)
        inst = build_scheme1(interval(), o, 2)
        y_hat = o.moment_vector(4) / inst.var_scale
        mom = inst.blocks[0]
        peak = 1 / np.max(np.abs(mom.coef.data))
        diag = np.diag(mom.matrix(y_hat)) * peak
        np.testing.assert_allclose(diag, np.ones(3), rtol=1e-14)

    @pytest.mark.parametrize("spec", [G2, MeasureSpec.exponential(2, 5.0), MeasureSpec.gaussian(2, 0.5, "experimental")], ids=str)
    def test_round_trip(self, spec):
        o = MomentOracle(spec)
        s = prepare_set(disc(), spec)
        raw = build_scheme1(s, o, 4, precondition_instance=False)
        back = unprecondition(precondition(raw, o))
        u = np.random.default_rng(0).normal(size=raw.num_vars)
        assert back.objective(u) == pytest.approx(raw.objective(u), rel=1e-12)
        for m1, m2 in zip(raw.block_matrices(u), back.block_matrices(u)):
            np.testing.assert_allclose(m2, m1, rtol=1e-12, atol=1e-12 * np.abs(m1).max())

    def test_objective_preserved_in_original_units(self):
        o = MomentOracle(G2)
        raw = build_scheme1(disc(), o, 3, precondition_instance=False)
        pre = precondition(raw, o)
        u = np.random.default_rng(2).normal(size=raw.num_vars)
        assert pre.objective(pre.from_original(u)) == pytest.approx(raw.objective(u), rel=1e-13)

    def test_double_precondition(self):
        o = MomentOracle(G2)
        with pytest.raises(RelaxationError):
            precondition(build_scheme1(disc(), o, 1), o)


@pytest.mark.parametrize(
    "spec",
    [G2, MeasureSpec.gaussian(2, 0.5, "experimental"), MeasureSpec.exponential(2, 5.0), MeasureSpec.exponential(1, 1.0)],
    ids=str,
)
def test_reference_moment_matrix_is_psd(spec):
    o = MomentOracle(spec)
    for d in range(0, 9):
        y = o.moment_vector(2 * d)
        M = moment_matrix_entries(spec.n, d).matrix(y)
        # compare in the diagonally scaled basis to avoid meaningless absolute noise
        s = 1 / np.sqrt(np.diag(M))
        ev = np.linalg.eigvalsh(M * np.outer(s, s))
        assert ev.min() >= -1e-9 * o.growth_bound(2 * d) / np.max(np.diag(M))


@given(st.integers(1, 3), st.integers(0, 4), st.integers(0, 10**6))
def test_linear_form_evaluates_polynomials(n, d, seed):
    rng = np.random.default_rng(seed)
    basis = enumerate_multiindices(n, 2 * d)
    p = Poly(n, {a: float(rng.normal()) for a in basis if rng.random() < 0.5})
    u = rng.normal(size=len(basis))
    pos = index_map(n, 2 * d)
    assert linear_form(p, d) @ u == pytest.approx(sum(c * u[pos[a]] for a, c in p.items()), abs=1e-12)
