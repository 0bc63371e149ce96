"""Measure-dependent coefficients: freezing, fixed point, oracle agreement.

Closed-form oracle used throughout: for dX = -(X - a E[X]) dt + dW the
mean curve solves m' = (a - 1) m, so m(t) = m(0) exp((a - 1) t).  The
interacting-particle system is the independent estimator of the same
law; Picard and interacting runs must agree within combined Monte Carlo
tolerance without sharing seeds.
"""

import numpy as np
import pytest

from fpklab.coefficients import (AssumptionParams, SamplePlan,
                                 check_coercivity, check_growth,
                                 check_measure_uniform, check_symmetry_psd)
from fpklab.errors import DimensionError, TimeWindowError
from fpklab.martingale import (PathFunctional, ensemble_flow, martingale_test,
                               product_functional, simulate_em)
from fpklab.mckean import (MeasureDependentCoefficients, PicardResult, freeze,
                           freeze_at_measure, solve_mkv_interacting,
                           solve_mkv_picard, verify_nonlinear_superposition)
from fpklab.measures import EmpiricalMeasure, MarginalFlow
from fpklab.models import (mean_field_ou_model, ou_model,
                           variance_noise_model)
from fpklab.spaces import SpaceTriple, h_power_gauge
from fpklab.superposition import verify_superposition

MF = mean_field_ou_model(a=0.5)
STRONG = mean_field_ou_model(a=5.0, horizon=0.5)


def wrap_linear(model):
    """Measure-dependent facade over an ordinary model; ignores mu."""
    return MeasureDependentCoefficients(
        b_eval=lambda t, y, mu: model.b_eval(t, y),
        sigma_eval=lambda t, y, mu: model.sigma_eval(t, y),
        noise_dim=model.noise_dim,
        horizon=model.horizon,
        name=f"{model.name}|measure-blind",
        b_batch=(lambda t, ys, mu: model.b_batch(t, ys))
        if model.b_batch is not None else None,
        additive_noise=model.additive_noise,
    )


@pytest.fixture(scope="module")
def picard_mf(bump_family):
    return solve_mkv_picard(MF, [1.0], 1, 100, 20000, 501, bump_family,
                            tol=5e-3, max_iter=10, record_every=5)


@pytest.fixture(scope="module")
def interacting_mf():
    return solve_mkv_interacting(MF, [1.0], 1, 100, 20000, 313,
                                 record_every=5)


@pytest.fixture(scope="module")
def strong_pair(bump_family):
    conv = solve_mkv_picard(STRONG, [1.0], 1, 50, 4000, 901, bump_family,
                            tol=1e-3, max_iter=10, record_every=2)
    stale = solve_mkv_picard(STRONG, [1.0], 1, 50, 4000, 901, bump_family,
                             tol=1e-3, max_iter=1, record_every=2)
    return conv, stale


def test_freeze_substitutes_flow_mean():
    times = [0.0, 0.5, 1.0]
    means = [1.0, 2.0, 4.0]
    flow = MarginalFlow(
        times,
        [EmpiricalMeasure.point_mass(np.array([m])) for m in means],
        "empirical", 1,
    )
    frozen = freeze(MF, flow)
    for t, m in zip(times, means):
        for y in (-1.5, 0.3, 2.0):
            got = frozen.drift(t, np.array([y]))
            np.testing.assert_array_equal(got, np.array([-y + 0.5 * m]))
    # off-node times read the nearest node, no interpolation
    np.testing.assert_array_equal(
        frozen.drift(0.6, np.array([0.0])), np.array([0.5 * 2.0]))
    np.testing.assert_array_equal(
        frozen.drift(0.8, np.array([0.0])), np.array([0.5 * 4.0]))


def test_freeze_measure_blind_is_identity():
    ou = ou_model()
    wrapped = wrap_linear(ou)
    flow = MarginalFlow.constant(
        np.linspace(0.0, 1.0, 5),
        EmpiricalMeasure.point_mass(np.array([0.7])), dim=1,
        kind="empirical",
    )
    frozen = freeze(wrapped, flow)
    rng = np.random.default_rng(9)
    for t in (0.0, 0.3, 1.0):
        for y in rng.standard_normal((4, 1)):
            np.testing.assert_array_equal(frozen.drift(t, y), ou.drift(t, y))
            np.testing.assert_array_equal(
                frozen.dispersion(t, y), ou.dispersion(t, y))
    ys = rng.standard_normal((8, 1))
    np.testing.assert_array_equal(
        frozen.drift_block(0.5, ys), ou.drift_block(0.5, ys))
    # fixing a single measure gives the same identity
    pinned = freeze_at_measure(wrapped, flow.measures[0])
    np.testing.assert_array_equal(
        pinned.drift_block(0.5, ys), ou.drift_block(0.5, ys))
    np.testing.assert_array_equal(
        pinned.dispersion(0.5, ys[0]), ou.dispersion(0.5, ys[0]))


def test_freeze_variance_noise_tracks_flow_variance():
    model = variance_noise_model(rate=1.0, gain=1.0)
    spreads = [0.0, 1.0, 3.0]
    measures = [
        EmpiricalMeasure(np.array([[s], [-s]]), np.array([0.5, 0.5]))
        for s in spreads
    ]
    flow = MarginalFlow([0.0, 0.5, 1.0], measures, "empirical", 1)
    frozen = freeze(model, flow)
    for t, mu in zip(flow.times, measures):
        second = mu.integrate(lambda pts: pts[:, 0] ** 2)
        var = second - mu.mean()[0] ** 2
        got = frozen.dispersion(float(t), np.array([0.3]))
        np.testing.assert_allclose(
            got, np.sqrt(1.0 + var) * np.eye(1), rtol=1e-12)
    # spot value: spread 3 has variance 9, sigma = sqrt(10)
    np.testing.assert_allclose(
        frozen.dispersion(1.0, np.array([0.0]))[0, 0], np.sqrt(10.0),
        rtol=1e-12)


def test_freeze_time_lookup_errors():
    flow = MarginalFlow.constant(
        np.linspace(0.0, 0.5, 3),
        EmpiricalMeasure.point_mass(np.array([0.0])), dim=1,
        kind="empirical",
    )
    frozen = freeze(MF, flow)
    # inside the model horizon but beyond the flow's last node
    with pytest.raises(TimeWindowError):
        frozen.drift(0.9, np.array([1.0]))
    # beyond the model horizon entirely
    with pytest.raises(TimeWindowError):
        frozen.drift(1.5, np.array([1.0]))


def test_measure_dependent_validation():
    with pytest.raises(DimensionError):
        MeasureDependentCoefficients(
            b_eval=lambda t, y, mu: y, sigma_eval=lambda t, y, mu: np.eye(1),
            noise_dim=0, horizon=1.0)
    with pytest.raises(ValueError):
        MeasureDependentCoefficients(
            b_eval=lambda t, y, mu: y, sigma_eval=lambda t, y, mu: np.eye(1),
            noise_dim=1, horizon=0.0)


def test_picard_measure_blind_converges_first_iteration(bump_family):
    wrapped = wrap_linear(ou_model())
    res = solve_mkv_picard(wrapped, [1.0], 1, 50, 2000, 77, bump_family,
                           tol=1e-3, max_iter=5)
    assert res.iterations == 1
    assert res.converged is True
    # common random numbers: the re-simulated flow is bitwise identical
    assert res.distance_trace == (0.0,)
    plain = simulate_em(ou_model(), np.array([1.0]), 1, 50, 2000, 77)
    assert np.array_equal(res.ensemble.paths, plain.paths)
    flow, ens, iters = res  # unpacks as a triple
    assert iters == 1 and ens is res.ensemble and flow is res.flow


def test_picard_mean_field_mean_curve(picard_mf):
    res = picard_mf
    assert res.converged and res.iterations <= 10
    ens = res.ensemble
    for t, ref in [(0.5, np.exp(-0.25)), (1.0, np.exp(-0.5))]:
        vals = ens.paths[:, ens.node_index(t), 0]
        se = vals.std(ddof=1) / np.sqrt(ens.n_paths)
        assert abs(vals.mean() - ref) < 3.0 * se


def test_picard_fixed_point_residual(picard_mf, bump_family):
    # one more application of the Picard map moves the flow by < tol
    res = picard_mf
    frozen = freeze(MF, res.flow)
    re_ens = simulate_em(frozen, np.array([1.0]), 1, 100, 20000, 501,
                         record_every=5)
    residual = verify_superposition(
        ensemble_flow(re_ens), res.flow, bump_family, tol=np.inf
    ).max_distance
    assert residual < 5e-3


def test_picard_strong_feedback_deterministic(bump_family):
    runs = [
        solve_mkv_picard(STRONG, [1.0], 1, 50, 2000, 901, bump_family,
                         tol=1e-2, max_iter=8, record_every=2)
        for _ in range(2)
    ]
    a, b = runs
    assert a.iterations == b.iterations
    assert a.converged == b.converged
    assert a.distance_trace == b.distance_trace
    assert np.array_equal(a.ensemble.paths, b.ensemble.paths)
    # the trace contracts monotonically even with feedback factor a=5
    trace = np.asarray(a.distance_trace)
    assert a.converged or np.all(np.diff(trace) < 0.0)
    assert np.all(np.diff(trace) < 0.0)


def test_interacting_measure_blind_matches_plain_simulator(bump_family):
    wrapped = wrap_linear(ou_model())
    flow_i, ens_i = solve_mkv_interacting(wrapped, [1.0], 1, 50, 1000, 311)
    plain = simulate_em(ou_model(), np.array([1.0]), 1, 50, 1000, 311)
    assert np.array_equal(ens_i.paths, plain.paths)
    rep = verify_superposition(flow_i, plain, bump_family, tol=np.inf)
    assert rep.max_distance == 0.0
    assert rep.max_distance < 3.0 / np.sqrt(1000)


def test_interacting_mean_field_mean(interacting_mf):
    _, ens = interacting_mf
    for t, ref in [(0.5, np.exp(-0.25)), (1.0, np.exp(-0.5))]:
        vals = ens.paths[:, ens.node_index(t), 0]
        se = vals.std(ddof=1) / np.sqrt(ens.n_paths)
        assert abs(vals.mean() - ref) < 3.0 * se


def test_picard_vs_interacting_cross_check(picard_mf, interacting_mf,
                                           bump_family):
    flow_i, _ = interacting_mf
    rep = verify_superposition(picard_mf.flow, flow_i, bump_family,
                               tol=np.inf)
    # two independent estimators of the same law, seeds unrelated
    assert len(rep.distances) == 21  # every shared grid node compared
    assert rep.max_distance < 2.0 * (3.0 / np.sqrt(20000))


def test_verify_self_consistent_fixed_point(picard_mf, bump_family):
    res = picard_mf
    report = verify_nonlinear_superposition(MF, res.flow, res.ensemble,
                                            bump_family, tol=2e-2)
    assert report["passed"] is True
    assert report["max_abs_z"] <= 4.0
    assert np.isfinite(report["integrability"])
    assert report["superposition"].passed
    assert set(report) >= {"superposition", "integrability", "max_abs_z",
                           "z_max", "tol", "passed"}


def test_verify_stale_flow_fails(strong_pair, bump_family):
    conv, stale = strong_pair
    assert conv.converged
    assert stale.iterations == 1 and not stale.converged
    report = verify_nonlinear_superposition(STRONG, stale.flow,
                                            conv.ensemble, bump_family,
                                            tol=2e-2)
    assert report["passed"] is False
    assert report["superposition"].max_distance > 2e-2


def test_verify_measure_blind_reduces_to_linear(bump_family):
    ou = ou_model()
    wrapped = wrap_linear(ou)
    ens = simulate_em(ou, np.array([1.0]), 1, 100, 5000, 404,
                      record_every=5)
    flow = ensemble_flow(ens)
    nl = verify_nonlinear_superposition(wrapped, flow, ens, bump_family,
                                        tol=2e-2)
    lin = verify_superposition(flow, ens, bump_family, 2e-2)
    assert nl["superposition"].max_distance == lin.max_distance
    assert nl["superposition"].passed == lin.passed
    assert nl["passed"] is True
    # the martingale leg equals the same statistics on the plain model
    nodes = ens.times
    s, t_end = float(nodes[nodes.size // 2]), float(nodes[-1])
    ones = PathFunctional(name="one", horizon=0.0,
                          eval=lambda e: np.ones(e.n_paths))
    worst = 0.0
    for f in bump_family[:3]:
        conds = [ones, product_functional([f], [s])]
        for st in martingale_test(ens, f, ou, s, t_end, conds):
            worst = max(worst, abs(st.z))
    assert nl["max_abs_z"] == worst


def test_measure_uniform_mean_field_pass():
    triple = SpaceTriple(np.array([1.0]))
    gauge = h_power_gauge(2.0)
    plan = SamplePlan(seed=7, n_samples=48, truncations=(1,), scale=2.0)
    measures = [EmpiricalMeasure.point_mass(np.array([float(m)]))
                for m in (-2, -1, 0, 1, 2)]
    params = AssumptionParams(1.0, 2.0, 2.0, 1.0, 2.0, 2.0)
    report = check_measure_uniform(MF, measures, triple, gauge, params, plan)
    assert report.verdict == "pass"


def test_measure_uniform_measure_blind_matches_direct():
    ou = ou_model()
    triple = SpaceTriple(np.array([1.0]))
    gauge = h_power_gauge(2.0)
    plan = SamplePlan(seed=7, n_samples=48, truncations=(1,), scale=2.0)
    measures = [EmpiricalMeasure.point_mass(np.array([float(m)]))
                for m in (-2.0, 0.0, 2.0)]
    params = AssumptionParams(0.0, 1.0, 1.0, 2.0, 2.0, 2.0)
    uniform = check_measure_uniform(wrap_linear(ou), measures, triple, gauge,
                                    params, plan)
    direct = [
        check_symmetry_psd(ou, plan),
        check_coercivity(ou, gauge, params, plan),
        check_growth(ou, triple, gauge, params, plan),
    ]
    assert uniform.verdict == "pass"
    assert all(r.verdict == "pass" for r in direct)
    assert uniform.worst_gap == max(r.worst_gap for r in direct)


def test_measure_uniform_unbounded_variance_fails():
    model = variance_noise_model(rate=1.0, gain=1.0)
    triple = SpaceTriple(np.array([1.0]))
    gauge = h_power_gauge(2.0)
    plan = SamplePlan(seed=7, n_samples=48, truncations=(1,), scale=2.0)
    calm = EmpiricalMeasure.point_mass(np.array([0.0]))
    wild = EmpiricalMeasure(np.array([[10.0], [-10.0]]),
                            np.array([0.5, 0.5]))
    params = AssumptionParams(0.0, 1.0, 1.0, 2.0, 2.0, 2.0)
    report = check_measure_uniform(model, [calm, wild], triple, gauge,
                                   params, plan, checks=("growth",))
    # HS norm at the wild measure is 1 + 100, far above lam4 * (1 + |y|^2)
    assert report.verdict == "fail"
    assert report.worst_gap > 90.0


def test_picard_result_to_dict(picard_mf):
    d = picard_mf.to_dict()
    assert d["iterations"] == picard_mf.iterations
    assert d["converged"] is True
    assert d["distance_trace"] == [pytest.approx(x)
                                   for x in picard_mf.distance_trace]
    assert isinstance(d["distance_trace"], list)
