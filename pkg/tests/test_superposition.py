"""Family pseudometric, flow comparison, moment ledger, Galerkin table."""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.integrate import quad
from scipy.stats import kstest, norm

from fpklab import (DimensionError, EmpiricalMeasure, GridDensity,
                    GridMismatchError, GridSpec, LyapunovData, MarginalFlow,
                    coordinate_bump, ensemble_flow, galerkin_convergence,
                    ks_band, ks_statistic, lyapunov_bound_check,
                    lyapunov_constants, marginal_distance,
                    narrow_continuity_modulus, separating_family,
                    shifted_square_lyapunov, simulate_em, solve_fpke_grid,
                    solve_fpke_particle, superposition_integrability,
                    verify_superposition)
from fpklab.models import (cascade_model, diagonal_ou_model, ou_model,
                           zero_model)


@pytest.fixture(scope="module")
def ou_grid_flow():
    spec = GridSpec(lo=(-7.0,), hi=(7.0,), cells=(280,), steps=280)
    return solve_fpke_grid(ou_model(1), [1.0], 1, spec)


def _gaussian_density(mu, sd=1.0, cells=1000, lo=-9.0, hi=9.0):
    h = (hi - lo) / cells
    ax = lo + (np.arange(cells) + 0.5) * h
    dens = norm.pdf(ax, mu, sd)
    dens /= np.trapezoid(dens, dx=h)
    return GridDensity((ax,), dens)


# ---------------------------------------------------------------------------
# marginal distance
# ---------------------------------------------------------------------------


def test_distance_identical_measures(bump_family):
    mu = EmpiricalMeasure(np.random.default_rng(0).standard_normal((50, 1)))
    assert marginal_distance(mu, mu, bump_family) == 0.0


def test_distance_separates_atoms():
    fam = separating_family(2, 4)
    a = EmpiricalMeasure.point_mass([0.0, 0.0])
    b = EmpiricalMeasure.point_mass([1.0, 0.0])
    assert marginal_distance(a, b, fam) > 0.0


def test_distance_gaussian_mean_shift_quadrature(bump_family):
    # oracle first: adaptive quadrature per family member
    best = 0.0
    for f in bump_family:
        lo, hi = -f.support_radius, f.support_radius
        i1 = quad(lambda x: f(np.array([x])) * norm.pdf(x, 0.0, 1.0), lo, hi)[0]
        i2 = quad(lambda x: f(np.array([x])) * norm.pdf(x, 0.1, 1.0), lo, hi)[0]
        best = max(best, abs(i1 - i2))
    mu = _gaussian_density(0.0)
    nu = _gaussian_density(0.1)
    got = marginal_distance(mu, nu, bump_family)
    assert got == pytest.approx(best, abs=1e-5)
    assert got > 1e-3


def test_distance_cross_dimension(bump_family):
    mu = EmpiricalMeasure.point_mass([0.2])
    nu = EmpiricalMeasure.point_mass([0.2, 5.0])
    assert marginal_distance(mu, nu, bump_family) == 0.0
    deep = separating_family(2, 4)
    with pytest.raises(DimensionError):
        marginal_distance(mu, nu, deep)
    with pytest.raises(ValueError):
        marginal_distance(mu, nu, [])


def test_distance_pseudometric_properties(bump_family):
    rng = np.random.default_rng(4)
    ms = [EmpiricalMeasure(rng.standard_normal((30, 1))) for _ in range(3)]
    d01 = marginal_distance(ms[0], ms[1], bump_family)
    d10 = marginal_distance(ms[1], ms[0], bump_family)
    assert d01 == d10
    d02 = marginal_distance(ms[0], ms[2], bump_family)
    d12 = marginal_distance(ms[1], ms[2], bump_family)
    assert d02 <= d01 + d12 + 1e-12


# ---------------------------------------------------------------------------
# flow comparison
# ---------------------------------------------------------------------------


def test_verify_self_consistency(ou, bump_family):
    flow, ens = solve_fpke_particle(ou, [1.0], 1, steps=50, paths=400, seed=8)
    rep = verify_superposition(flow, ens, bump_family, tol=1e-12)
    assert rep.passed
    assert rep.max_distance == 0.0
    assert np.all(rep.distances == 0.0)


def test_verify_grid_vs_ensemble(ou_grid_flow, ou_ensemble, bump_family):
    rep = verify_superposition(ou_grid_flow, ou_ensemble, bump_family,
                               tol=2e-2, times=[0.25, 0.5, 1.0])
    assert rep.passed
    assert rep.max_distance < 5e-3
    assert rep.family_size == len(bump_family)


def test_verify_flipped_drift_fails(ou_grid_flow, bump_family):
    anti = ou_model(rate=-1.0)
    ens = simulate_em(anti, [1.0], 1, 100, 2000, seed=55)
    rep = verify_superposition(ou_grid_flow, ens, bump_family,
                               tol=2e-2, times=[0.25, 0.5])
    assert not rep.passed
    assert rep.distances[1] > 2e-2  # separated by t = 0.5


def test_verify_requires_shared_grid(ou_grid_flow, ou_ensemble, bump_family):
    with pytest.raises(GridMismatchError):
        verify_superposition(ou_grid_flow, ou_ensemble, bump_family, tol=1e-2)


def test_verify_seed_stable(ou_grid_flow, bump_family):
    verdicts = set()
    for seed in range(10):
        ens = simulate_em(ou_model(), [1.0], 1, 100, 2000, seed=1000 + seed)
        rep = verify_superposition(ou_grid_flow, ens, bump_family,
                                   tol=5e-2, times=[0.5, 1.0])
        verdicts.add(rep.passed)
    assert verdicts == {True}


def test_report_serialization(ou, bump_family):
    flow, ens = solve_fpke_particle(ou, [1.0], 1, steps=20, paths=50, seed=8)
    d = verify_superposition(flow, ens, bump_family, tol=1e-9).to_dict()
    assert set(d) == {"times", "distances", "max_distance", "tol", "passed",
                      "family_size"}
    assert isinstance(d["passed"], bool)


# ---------------------------------------------------------------------------
# moment ledger
# ---------------------------------------------------------------------------


def test_lyapunov_constants_closed_form():
    mk, nk = lyapunov_constants(1, 2.0, 4.0)
    assert mk == 2.0
    assert nk == 2.0 * math.exp(2.0) + 1.0
    mk2, nk2 = lyapunov_constants(2, 1.0, 2.0)
    assert mk2 == 6.0
    assert nk2 == 6.0 * math.exp(6.0) + 1.0
    with pytest.raises(ValueError):
        lyapunov_constants(0, 1.0, 1.0)


def test_ledger_ou_linear_growth(ou_grid_flow):
    lyap = shifted_square_lyapunov()
    ledger = lyapunov_bound_check(ou_grid_flow, lyap, 1, [1.0])
    # closed form: E V = 2 for all t, dissipation integral adds 2t;
    # the mollified start contributes about 1e-2 of extra variance
    for t in (0.0, 0.5, 1.0):
        j = ou_grid_flow.node_index(t)
        assert ledger.lhs[j] == pytest.approx(2.0 + 2.0 * t, abs=1.5e-2)
    assert ledger.bound == pytest.approx((2 * math.exp(2) + 1) * 2.0)
    assert ledger.passed
    assert ledger.finite_fraction == 1.0
    lhs, rhs, verdict = ledger
    assert verdict and np.all(lhs <= rhs)


def test_ledger_fails_when_constants_understated(ou_grid_flow):
    lyap = shifted_square_lyapunov()
    # c0 = 0 makes the bound factor collapse to W_1 = 2 < lhs
    weak = LyapunovData(lyap.v, lyap.v_grad, lyap.v_hess, lyap.theta,
                        c0=0.0, m0=0.0)
    ledger = lyapunov_bound_check(ou_grid_flow, weak, 1, [1.0])
    assert not ledger.passed


def test_ledger_initial_level_scans_truncations():
    lyap = shifted_square_lyapunov()
    times = np.linspace(0.0, 1.0, 3)
    mu = EmpiricalMeasure.point_mass([0.0, 0.0, 0.0])
    flow = MarginalFlow.constant(times, mu, 3)
    ledger = lyapunov_bound_check(flow, lyap, 2, [1.0, 2.0, 2.0])
    # W_2 = max over n of V(x0[:n])^2 = (1 + 1 + 4 + 4)^2
    assert ledger.initial_level == 100.0


# ---------------------------------------------------------------------------
# integrability functional
# ---------------------------------------------------------------------------


def test_integrability_zero_model():
    flow, _ = solve_fpke_particle(zero_model(1), [0.0], 1, steps=10,
                                  paths=20, seed=3)
    assert superposition_integrability(flow, zero_model(1)) == 0.0


def test_integrability_ou_quadrature_oracle(ou_grid_flow):
    got = superposition_integrability(ou_grid_flow, ou_model(1))

    def node_value(t):
        mean, var = np.exp(-t), 1.0 - np.exp(-2.0 * t)
        sd = np.sqrt(max(var, 1e-12))

        def integrand(y):
            return (1.0 + abs(-y * y)) / (1.0 + abs(y)) ** 2 * \
                norm.pdf(y, mean, sd)

        return quad(integrand, mean - 10 * sd - 1, mean + 10 * sd + 1,
                    limit=200)[0]

    ts = ou_grid_flow.times
    vals = np.array([node_value(float(t)) for t in ts[:: 14]])
    oracle = np.trapezoid(vals, ts[:: 14])
    assert got == pytest.approx(oracle, abs=2e-2)
    assert np.isfinite(got)


def test_integrability_operator_vs_frobenius():
    flow, _ = solve_fpke_particle(diagonal_ou_model(2), [1.0, 1.0], 2,
                                  steps=20, paths=50, seed=5)
    m = diagonal_ou_model(2)
    v_op = superposition_integrability(flow, m, norm="op")
    v_fro = superposition_integrability(flow, m, norm="fro")
    assert v_fro > v_op  # diag(1/2, 1/2): op = 1/2, fro = sqrt(2)/2
    with pytest.raises(ValueError):
        superposition_integrability(flow, m, norm="nuclear")


def test_integrability_cubic_drift_grows_with_support():
    m = ou_model(1)  # carrier for times/horizon only

    def cubic(t, y):
        return np.asarray(y, dtype=float) ** 3

    from fpklab import CoefficientModel
    fix = CoefficientModel(b_eval=cubic, sigma_eval=lambda t, y: np.zeros((1, 1)),
                           noise_dim=1, horizon=1.0, name="cubic-fixture")
    times = np.linspace(0.0, 1.0, 5)
    vals = []
    for r in (10.0, 100.0):
        mu = EmpiricalMeasure.point_mass([r])
        flow = MarginalFlow.constant(times, mu, 1)
        vals.append(superposition_integrability(flow, fix))
    assert vals[1] > 50.0 * vals[0]


# ---------------------------------------------------------------------------
# Galerkin stabilization
# ---------------------------------------------------------------------------


def _level_flows(factory, levels, seed0, paths=20000):
    flows = {}
    for i, n in enumerate(levels):
        fl, _ = solve_fpke_particle(factory(n), [1.0] * n, n, steps=100,
                                    paths=paths, seed=seed0 + i,
                                    record_every=25)
        flows[n] = fl
    return flows


def test_galerkin_decoupled_levels_agree():
    fam = separating_family(2, 4)
    flows = _level_flows(diagonal_ou_model, (2, 4, 8), 100)
    table = galerkin_convergence(flows, fam, [0.5, 1.0])
    assert table["levels"] == [2, 4, 8]
    bound = 3.0 / np.sqrt(20000)
    for row in table["pairs"]:
        assert row["distance"] < bound


def test_galerkin_cascade_stabilizes():
    fam = separating_family(2, 4)
    flows = _level_flows(cascade_model, (2, 4, 8), 200)
    table = galerkin_convergence(flows, fam, [0.5, 1.0])
    gaps = [r["distance_to_finest"] for r in table["to_finest"]]
    assert gaps[0] > gaps[1]
    assert table["stabilizing"]


def test_galerkin_preconditions(bump_family):
    flow, _ = solve_fpke_particle(ou_model(), [1.0], 1, steps=10, paths=20,
                                  seed=1)
    with pytest.raises(ValueError):
        galerkin_convergence({1: flow}, bump_family, [1.0])
    deep = [coordinate_bump(3, 0.0, 1.0)]
    flows = {1: flow, 2: flow}
    with pytest.raises(ValueError):
        galerkin_convergence(flows, deep, [1.0])


# ---------------------------------------------------------------------------
# distribution helpers and the continuity corollary
# ---------------------------------------------------------------------------


def test_ks_statistic_small_sample_exact():
    sample = np.array([0.25, 0.75])
    got = ks_statistic(sample, lambda x: x)
    assert got == pytest.approx(0.25)
    ref = kstest(sample, "uniform").statistic
    assert got == pytest.approx(ref)
    with pytest.raises(ValueError):
        ks_statistic(np.array([]), lambda x: x)


def test_ks_band_matches_asymptotic_constant():
    assert ks_band(10000) == pytest.approx(1.358 / 100.0, rel=1e-3)
    assert ks_band(10000, alpha=0.01) > ks_band(10000, alpha=0.05)


def test_continuity_corollary_triangle(ou_ensemble, bump_family):
    spec = GridSpec(lo=(-7.0,), hi=(7.0,), cells=(200,), steps=200)
    gflow = solve_fpke_grid(ou_model(1), [1.0], 1, spec)
    eflow = ensemble_flow(ou_ensemble)
    rep = verify_superposition(gflow, eflow, bump_family, tol=1.0)
    m_ens = narrow_continuity_modulus(eflow, bump_family)
    m_grid = narrow_continuity_modulus(gflow, bump_family)
    assert m_ens <= m_grid + 2.0 * rep.max_distance
