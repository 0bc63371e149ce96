"""Space triple, test functions, generator application, separating family."""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import quad

from fpklab import (DimensionError, EmpiricalMeasure, FinitelyBasedFunction,
                    SingularWeightError, SpaceTriple, apply_generator,
                    constant_function, coordinate_bump, coordinate_function,
                    h_power_gauge, quadratic_function, separating_family,
                    weighted_square_gauge)
from fpklab.spaces import (bump_profile, bump_profile_d1, bump_profile_d2,
                           family_finest_lattice, product_function)

# ---------------------------------------------------------------------------
# norms and projections
# ---------------------------------------------------------------------------


def test_project_truncates():
    tri = SpaceTriple(np.array([1.0, 2.0, 3.0, 4.0]))
    assert_allclose(tri.project([1, 2, 3, 4], 2), [1.0, 2.0])
    assert_allclose(tri.project(np.zeros(4), 3), np.zeros(3))


def test_project_rejects_bad_n():
    tri = SpaceTriple(np.array([1.0, 2.0]))
    with pytest.raises(DimensionError):
        tri.project([1.0, 1.0], 3)
    with pytest.raises(DimensionError):
        tri.project([1.0, 1.0], 0)
    with pytest.raises(DimensionError):
        tri.project([1.0], 2)


def test_dual_norm_contraction_exact_fractions():
    # oracle: exact rational arithmetic for lam=(1,2,3,4), z=(1,1,1,1)
    lam = [Fraction(1), Fraction(2), Fraction(3), Fraction(4)]
    z = [Fraction(1)] * 4
    full_sq = sum(zi * zi / li for zi, li in zip(z, lam))
    proj_sq = sum((zi * zi / li for zi, li in zip(z[:2], lam[:2])))
    assert proj_sq == Fraction(3, 2)
    assert full_sq == Fraction(25, 12)

    tri = SpaceTriple(np.array([1.0, 2.0, 3.0, 4.0]))
    zf = np.ones(4)
    assert_allclose(tri.norm(tri.project(zf, 2), "X*") ** 2, float(proj_sq))
    assert_allclose(tri.norm(zf, "X*") ** 2, float(full_sq))
    assert tri.norm(tri.project(zf, 2), "X*") <= tri.norm(zf, "X*")


def test_norm_examples():
    tri = SpaceTriple(np.array([1.0, 4.0]))
    assert_allclose(tri.norm([1.0, 1.0], "X"), math.sqrt(5.0))
    # H-norm is plain Euclidean
    rng = np.random.default_rng(0)
    z = rng.standard_normal(2)
    assert_allclose(tri.norm(z, "H"), np.linalg.norm(z))
    # oracle: 2^2/1 + 2^2/4 = 5
    assert_allclose(tri.norm([2.0, 2.0], "X*"), math.sqrt(5.0))


def test_zero_weight_dual_norm():
    tri = SpaceTriple(np.array([0.0, 1.0, 2.0]))
    with pytest.raises(SingularWeightError):
        tri.norm([1.0, 0.0, 0.0], "X*")
    # zero coordinate on the zero weight is fine
    assert_allclose(tri.norm([0.0, 2.0, 0.0], "X*"), 2.0)


def test_triple_validation():
    with pytest.raises(ValueError):
        SpaceTriple(np.array([1.0, -1.0]))
    with pytest.raises(ValueError):
        SpaceTriple(np.array([1.0, np.inf]))
    with pytest.raises(DimensionError):
        SpaceTriple(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        SpaceTriple(np.array([1.0, 3.0, 2.0]))  # decreasing tail
    SpaceTriple(np.array([5.0, 1.0, 2.0]), monotone_from=1)


def test_json_round_trip():
    tri = SpaceTriple(np.array([1.0, 2.5, 7.0]))
    again = SpaceTriple.from_json(tri.to_json())
    assert_allclose(again.weights, tri.weights)
    assert again.n_max == 3


def test_pair_is_dot_product():
    z = np.array([1.0, -2.0, 0.5])
    v = np.array([2.0, 1.0, 4.0])
    assert SpaceTriple.pair(z, v) == pytest.approx(2.0 - 2.0 + 2.0)
    with pytest.raises(DimensionError):
        SpaceTriple.pair(z, v[:2])


coords = st.lists(st.floats(-10, 10), min_size=1, max_size=8)


@given(coords, st.integers(1, 8))
@settings(max_examples=200, deadline=None)
def test_projection_contraction_property(zs, n):
    tri = SpaceTriple.linear(8)
    z = np.asarray(zs)
    n = min(n, z.size)
    p = tri.project(z, n)
    for space in ("H", "X", "X*"):
        assert tri.norm(p, space) <= tri.norm(z, space) + 0.0
    # idempotence
    assert_allclose(tri.project(p, n), p)


# ---------------------------------------------------------------------------
# finitely based functions and the generator
# ---------------------------------------------------------------------------


def test_apply_generator_square():
    f = quadratic_function(1)
    a = np.array([[1.0]])
    b = np.array([-1.0])
    # 1*2 + (-1)*(2*1) = 0
    assert apply_generator(f, np.array([1.0]), a, b) == pytest.approx(0.0)


def test_apply_generator_constant():
    f = constant_function(3.0)
    rng = np.random.default_rng(1)
    for _ in range(5):
        y = rng.standard_normal(3)
        a = np.eye(3)
        b = rng.standard_normal(3)
        assert apply_generator(f, y, a, b) == pytest.approx(0.0)


def test_apply_generator_product_against_sympy():
    import sympy as sp

    u, v = sp.symbols("u v")
    g = u * v
    y = (2.0, 3.0)
    grad = [sp.diff(g, s) for s in (u, v)]
    hess = [[sp.diff(g, s1, s2) for s2 in (u, v)] for s1 in (u, v)]
    subs = {u: y[0], v: y[1]}
    a = np.eye(2)
    b = np.array([1.0, 1.0])
    oracle = sum(
        a[i, j] * float(hess[i][j].subs(subs)) for i in range(2) for j in range(2)
    ) + sum(b[i] * float(grad[i].subs(subs)) for i in range(2))
    assert oracle == pytest.approx(5.0)

    f = product_function()
    assert apply_generator(f, np.array(y), a, b) == pytest.approx(oracle)


def test_apply_generator_linear_in_f():
    f1 = quadratic_function(1)
    f2 = coordinate_function(1)
    y = np.array([0.7])
    a = np.array([[0.9]])
    b = np.array([-0.3])
    alpha, beta = 2.5, -1.25

    combo = FinitelyBasedFunction(
        base_dim=1,
        value=lambda u: alpha * f1(u) + beta * f2(u),
        gradient=lambda u: alpha * f1.gradient(u) + beta * f2.gradient(u),
        hessian=lambda u: alpha * f1.hessian(u) + beta * f2.hessian(u),
    )
    lhs = apply_generator(combo, y, a, b)
    rhs = alpha * apply_generator(f1, y, a, b) + beta * apply_generator(f2, y, a, b)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_bump_profile_derivatives_against_sympy():
    import sympy as sp

    x = sp.symbols("x")
    psi = sp.exp(1 / (x**2 - 1))
    d1 = sp.lambdify(x, sp.diff(psi, x), "numpy")
    d2 = sp.lambdify(x, sp.diff(psi, x, 2), "numpy")
    us = np.linspace(-0.95, 0.95, 41)
    assert_allclose(bump_profile_d1(us), d1(us), rtol=1e-10, atol=1e-12)
    assert_allclose(bump_profile_d2(us), d2(us), rtol=1e-10, atol=1e-12)
    # dead outside the unit interval
    outside = np.array([-2.0, -1.0, 1.0, 3.0])
    assert_allclose(bump_profile(outside), 0.0)
    assert_allclose(bump_profile_d1(outside), 0.0)
    assert_allclose(bump_profile_d2(outside), 0.0)


@pytest.mark.parametrize("maker", [
    lambda: coordinate_bump(1, 0.5, 2.0),
    lambda: coordinate_bump(2, -1.0, 1.0),
    lambda: quadratic_function(2),
    lambda: coordinate_function(1),
    lambda: product_function(),
])
def test_gradient_hessian_finite_differences(maker):
    f = maker()
    rng = np.random.default_rng(42)
    h = 1e-5
    for _ in range(10):
        y = rng.uniform(-1.5, 1.5, size=f.base_dim)
        g = f.gradient(y)
        hess = f.hessian(y)
        for i in range(f.base_dim):
            e = np.zeros(f.base_dim)
            e[i] = h
            fd = (f(y + e) - f(y - e)) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-7)
            for j in range(f.base_dim):
                e2 = np.zeros(f.base_dim)
                e2[j] = h
                fd2 = (
                    f.gradient(y + e2)[i] - f.gradient(y - e2)[i]
                ) / (2 * h)
                assert hess[i][j] == pytest.approx(fd2, rel=1e-6, abs=1e-7)


def test_bump_support_radius():
    f = coordinate_bump(1, 1.0, 0.5)
    assert f.support_radius == pytest.approx(1.5)
    assert f(np.array([1.6])) == 0.0
    assert f(np.array([1.2])) > 0.0


def test_batched_evaluation_matches_loop():
    f = coordinate_bump(1, 0.0, 2.0)
    ys = np.random.default_rng(3).uniform(-3, 3, size=(50, 4))
    vals = f(ys)
    for k in range(50):
        assert vals[k] == pytest.approx(f(ys[k]))


# ---------------------------------------------------------------------------
# separating family
# ---------------------------------------------------------------------------


def test_family_separates_atoms():
    fam = separating_family(1, 4, box=4.0)
    a = EmpiricalMeasure.point_mass([0.0])
    b = EmpiricalMeasure.point_mass([1.0])
    gaps = [abs(a.integrate(f) - b.integrate(f)) for f in fam]
    assert max(gaps) > 0.0


def test_family_identical_measures():
    fam = separating_family(1, 4)
    mu = EmpiricalMeasure(np.array([[0.3], [1.2]]))
    assert all(mu.integrate(f) == pytest.approx(mu.integrate(f)) for f in fam)
    nu = EmpiricalMeasure(np.array([[0.3], [1.2]]))
    assert max(abs(mu.integrate(f) - nu.integrate(f)) for f in fam) == 0.0


def test_family_separates_gaussians_quadrature():
    # oracle first: quadrature of each bump against N(0,1) and N(0,2)
    fam = separating_family(1, 4, box=4.0)

    def gauss(x, var):
        return np.exp(-x * x / (2 * var)) / np.sqrt(2 * np.pi * var)

    best = 0.0
    for f in fam:
        lo, hi = -f.support_radius, f.support_radius
        i1 = quad(lambda x: f(np.array([x])) * gauss(x, 1.0), lo, hi)[0]
        i2 = quad(lambda x: f(np.array([x])) * gauss(x, 2.0), lo, hi)[0]
        best = max(best, abs(i1 - i2))
    assert best > 1e-2


def test_family_exhaustive_lattice_separation():
    """Any two distinct finest-lattice atoms are split by some member."""
    fam = separating_family(1, 4, box=4.0)
    lattice = family_finest_lattice(4, box=4.0)
    for i, ci in enumerate(lattice):
        for cj in lattice[i + 1:]:
            a = EmpiricalMeasure.point_mass([ci])
            b = EmpiricalMeasure.point_mass([cj])
            assert any(
                abs(a.integrate(f) - b.integrate(f)) > 1e-12 for f in fam
            )


def test_family_validation():
    with pytest.raises(ValueError):
        separating_family(0, 4)
    with pytest.raises(ValueError):
        separating_family(1, 1)
    with pytest.raises(ValueError):
        separating_family(1, 4, box=-1.0)


# ---------------------------------------------------------------------------
# dissipation gauges
# ---------------------------------------------------------------------------


def test_h_power_gauge_values():
    gauge = h_power_gauge(2.0)
    assert gauge(np.zeros(3)) == pytest.approx(0.0)
    assert gauge(np.array([3.0, 4.0])) == pytest.approx(25.0)
    assert gauge.p == 2.0 and gauge.homogeneity == 2.0


def test_weighted_gauge_slices_weights():
    tri = SpaceTriple(np.array([1.0, 2.0, 3.0]))
    gauge = weighted_square_gauge(tri, factor=0.5)
    assert gauge(np.array([1.0, 1.0])) == pytest.approx(0.5 * 3.0)
    ys = np.array([[1.0, 0.0, 1.0], [0.0, 2.0, 0.0]])
    assert_allclose(gauge(ys), [0.5 * 4.0, 0.5 * 8.0])


@given(st.floats(0.0, 4.0), coords)
@settings(max_examples=150, deadline=None)
def test_gauge_homogeneity_property(c, zs):
    gauge = h_power_gauge(2.0)
    y = np.asarray(zs)
    lhs = gauge(c * y)
    rhs = c**gauge.homogeneity * gauge(y)
    assert lhs <= rhs * (1 + 1e-12) + 1e-12
