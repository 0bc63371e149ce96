"""Euler-Maruyama ensembles and martingale-defect statistics.

``simulate_em`` integrates X_{k+1} = X_k + b(t_k, X_k) dt + S(t_k, X_k)
sqrt(dt) xi_k with standard normal increments from a single seeded
generator, drawn in a fixed order, so a given seed reproduces the
ensemble bit for bit.  ``martingale_test`` estimates

    E[ (M_f(t) - M_f(s)) * g(path up to s) ],
    M_f(t) = f(x_t) - f(x_0) - int_0^t (L f)(u, x_u) du,

whose vanishing over a rich class of f and g is the martingale
formulation of the dynamics; the reported z-score is the Monte Carlo
estimate over its standard error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .coefficients import CoefficientModel
from .errors import DimensionError, DivergenceError, TimeWindowError
from .measures import EmpiricalMeasure, MarginalFlow
from .spaces import DissipationGauge, FinitelyBasedFunction, SpaceTriple

__all__ = [
    "PathEnsemble",
    "MartingaleStat",
    "PathFunctional",
    "simulate_em",
    "marginal",
    "ensemble_flow",
    "martingale_test",
    "martingale_suite",
    "product_functional",
    "energy_estimate",
    "path_integrability",
]


@dataclass(frozen=True)
class PathEnsemble:
    """Simulated paths on a uniform record grid.

    ``paths`` has shape (M, K+1, n) with paths[:, 0, :] equal to the
    starting state for every path.  ``times`` holds the K+1 record
    nodes.  ``seed`` and ``model_id`` identify how the ensemble was
    produced.
    """

    times: np.ndarray
    paths: np.ndarray
    seed: int
    model_id: str = ""

    def __post_init__(self):
        if self.paths.ndim != 3 or self.times.ndim != 1:
            raise DimensionError("paths must be (M, K+1, n), times (K+1,)")
        if self.paths.shape[1] != self.times.size:
            raise DimensionError("times and paths disagree on node count")

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def dim(self) -> int:
        return self.paths.shape[2]

    def node_index(self, t: float, atol: float = 1e-9) -> int:
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(float(self.times[i]) - t) > atol:
            raise TimeWindowError(f"t = {t} is not a record node")
        return i


def simulate_em(model: CoefficientModel, x0, n: int, steps: int, paths: int,
                seed: int, record_every: int = 1,
                divergence_bound: float = 1e8) -> PathEnsemble:
    """Simulate an Euler-Maruyama ensemble.

    ``record_every`` thins the stored nodes (it must divide ``steps``);
    integration always happens at the fine step.  Any path whose max
    coordinate magnitude exceeds ``divergence_bound`` aborts the run
    with a :class:`DivergenceError` naming the first offending path and
    step; nothing is silently dropped.
    """
    if steps < 1 or paths < 1:
        raise ValueError("need steps >= 1 and paths >= 1")
    if record_every < 1 or steps % record_every != 0:
        raise ValueError("record_every must divide steps")
    x0 = np.asarray(x0, dtype=float)
    if x0.size < n:
        raise DimensionError("initial state shorter than n")
    start = x0[:n]
    dt = model.horizon / steps
    sq = float(np.sqrt(dt))
    m = model.noise_dim
    rng = np.random.default_rng(seed)

    k_rec = steps // record_every
    out = np.empty((paths, k_rec + 1, n))
    out[:, 0, :] = start
    x = np.tile(start, (paths, 1))
    for k in range(steps):
        t = k * dt
        b = model.drift_block(t, x)
        s = model.dispersion_block(t, x)
        xi = rng.standard_normal((paths, m))
        if s.ndim == 2:
            x = x + b * dt + sq * (xi @ s.T)
        else:
            x = x + b * dt + sq * np.einsum("pij,pj->pi", s, xi)
        worst = float(np.max(np.abs(x)))
        if not worst <= divergence_bound:
            flat = np.abs(x)
            p = int(np.unravel_index(np.argmax(flat), flat.shape)[0])
            raise DivergenceError(step=k + 1, path=p, value=worst,
                                  bound=divergence_bound)
        if (k + 1) % record_every == 0:
            out[:, (k + 1) // record_every, :] = x
    times = np.linspace(0.0, model.horizon, k_rec + 1)
    return PathEnsemble(times=times, paths=out, seed=seed, model_id=model.name)


def marginal(ens: PathEnsemble, t: float) -> EmpiricalMeasure:
    """Equal-weight empirical marginal at record node ``t`` (a view)."""
    k = ens.node_index(t)
    w = np.full(ens.n_paths, 1.0 / ens.n_paths)
    return EmpiricalMeasure(ens.paths[:, k, :], w, validate=False)


def ensemble_flow(ens: PathEnsemble) -> MarginalFlow:
    """Marginal flow whose node measures are views into the ensemble."""
    w = np.full(ens.n_paths, 1.0 / ens.n_paths)
    measures = [
        EmpiricalMeasure(ens.paths[:, k, :], w, validate=False)
        for k in range(ens.times.size)
    ]
    return MarginalFlow(ens.times, measures, kind="empirical", dim=ens.dim)


# ---------------------------------------------------------------------------
# martingale statistics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PathFunctional:
    """Bounded functional of the path restricted to [0, horizon].

    ``horizon`` is the largest time the functional reads; martingale
    tests require it to be <= the conditioning time s.
    """

    name: str
    horizon: float
    eval: Callable[[PathEnsemble], np.ndarray]


def product_functional(members: Sequence[FinitelyBasedFunction],
                       times: Sequence[float]) -> PathFunctional:
    """Product of test-function evaluations at fixed times.

    With members f_1, ..., f_k and times t_1, ..., t_k (k <= 3) the
    functional is g(x) = prod_j f_j(x(t_j)); such products against a
    separating family generate the conditioning information actually
    used by the statistics.
    """
    if not 1 <= len(members) <= 3 or len(members) != len(times):
        raise ValueError("need 1 to 3 members with matching times")
    times = [float(t) for t in times]

    def ev(ens: PathEnsemble) -> np.ndarray:
        out = np.ones(ens.n_paths)
        for f, t in zip(members, times):
            k = ens.node_index(t)
            out *= f(ens.paths[:, k, :])
        return out

    label = "*".join(f"{f.name}@{t:g}" for f, t in zip(members, times))
    return PathFunctional(name=label, horizon=max(times), eval=ev)


@dataclass(frozen=True)
class MartingaleStat:
    """One martingale-defect statistic and its Monte Carlo error."""

    f_name: str
    s: float
    t: float
    g_name: str
    stat: float
    se: float
    z: float
    n_paths: int


def _defect_increment(ens: PathEnsemble, f: FinitelyBasedFunction,
                      model: CoefficientModel, ks: int, kt: int,
                      lf_nodes: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-path M_f(t_kt) - M_f(t_ks) using trapezoid on the record grid."""
    if lf_nodes is None:
        lf_nodes = _generator_on_paths(ens, f, model, ks, kt)
    seg = trapezoid(lf_nodes, x=ens.times[ks: kt + 1], axis=1)
    return f(ens.paths[:, kt, :]) - f(ens.paths[:, ks, :]) - seg


def _generator_on_paths(ens, f, model, ks, kt):
    d = f.base_dim
    m_paths = ens.n_paths
    vals = np.empty((m_paths, kt - ks + 1))
    for j in range(ks, kt + 1):
        t = float(ens.times[j])
        x = ens.paths[:, j, :]
        b = model.drift_block(t, x)[:, :d]
        s = model.dispersion_block(t, x)
        u = x[:, :d]
        if s.ndim == 2:
            sd = s[:d]
            a_dd = 0.5 * (sd @ sd.T)
            second = np.einsum("ij,mij->m", a_dd, f.hessian(u))
        else:
            sd = s[:, :d, :]
            a_dd = 0.5 * np.einsum("mik,mjk->mij", sd, sd)
            second = np.einsum("mij,mij->m", a_dd, f.hessian(u))
        vals[:, j - ks] = second + np.einsum("mi,mi->m", b, f.gradient(u))
    return vals


def martingale_test(ens: PathEnsemble, f: FinitelyBasedFunction,
                    model: CoefficientModel, s: float, t: float,
                    cond_fns: Sequence[PathFunctional]) -> list[MartingaleStat]:
    """Statistics E[(M_f(t) - M_f(s)) g] for each conditioning functional.

    Requires 0 <= s < t <= horizon on record nodes and every functional
    measurable by time s.  A zero standard error with a zero statistic
    reports z = 0 (constant f); a zero standard error with a nonzero
    statistic reports an infinite z.
    """
    if not cond_fns:
        raise ValueError("need at least one conditioning functional")
    if not 0.0 <= s < t <= model.horizon + 1e-9:
        raise TimeWindowError(f"need 0 <= s < t <= {model.horizon}")
    ks, kt = ens.node_index(s), ens.node_index(t)
    for g in cond_fns:
        if g.horizon > s + 1e-9:
            raise TimeWindowError(
                f"functional {g.name!r} reads the path after s = {s}"
            )
    dm = _defect_increment(ens, f, model, ks, kt)
    out = []
    for g in cond_fns:
        gv = np.asarray(g.eval(ens), dtype=float)
        prod = dm * gv
        stat = float(prod.mean())
        se = float(prod.std(ddof=1)) / np.sqrt(prod.size)
        if se == 0.0:
            z = 0.0 if stat == 0.0 else float("inf")
        else:
            z = stat / se
        out.append(MartingaleStat(f.name, s, t, g.name, stat, se, z, prod.size))
    return out


def martingale_suite(ens: PathEnsemble, model: CoefficientModel,
                     combos: Sequence[tuple]) -> list[MartingaleStat]:
    """Run many (f, s, t, cond_fns) combinations, sharing generator work.

    ``combos`` holds tuples (f, s, t, cond_fns).  Generator values along
    paths are computed once per test function over the widest window it
    needs.
    """
    by_f: dict[int, list[int]] = {}
    fs: list[FinitelyBasedFunction] = []
    for i, (f, s, t, _) in enumerate(combos):
        key = id(f)
        if key not in by_f:
            by_f[key] = []
            fs.append(f)
        by_f[key].append(i)
    results: list[Optional[list[MartingaleStat]]] = [None] * len(combos)
    for f in fs:
        idxs = by_f[id(f)]
        lo = min(ens.node_index(combos[i][1]) for i in idxs)
        hi = max(ens.node_index(combos[i][2]) for i in idxs)
        lf = _generator_on_paths(ens, f, model, lo, hi)
        for i in idxs:
            _, s, t, gs = combos[i]
            ks, kt = ens.node_index(s), ens.node_index(t)
            for g in gs:
                if g.horizon > s + 1e-9:
                    raise TimeWindowError(
                        f"functional {g.name!r} reads the path after s = {s}"
                    )
            dm = _defect_increment(
                ens, f, model, ks, kt, lf_nodes=lf[:, ks - lo: kt - lo + 1]
            )
            stats = []
            for g in gs:
                gv = np.asarray(g.eval(ens), dtype=float)
                prod = dm * gv
                stat = float(prod.mean())
                se = float(prod.std(ddof=1)) / np.sqrt(prod.size)
                if se == 0.0:
                    z = 0.0 if stat == 0.0 else float("inf")
                else:
                    z = stat / se
                stats.append(
                    MartingaleStat(f.name, s, t, g.name, stat, se, z, prod.size)
                )
            results[i] = stats
    return [st for group in results for st in group]  # type: ignore[union-attr]


# ---------------------------------------------------------------------------
# pathwise energy functionals
# ---------------------------------------------------------------------------


def energy_estimate(ens: PathEnsemble, q: int, gauge: DissipationGauge) -> float:
    """Monte Carlo estimate of the order-q energy functional.

    Mean over paths of sup_k |x_k|^{2q} plus the trapezoid-in-time
    integral of |x|^{2(q-1)} N(x).  Non-finite values are returned as
    they are; callers treat them as failures rather than clamping.
    """
    if q < 1:
        raise ValueError("q must be >= 1")
    norms2 = np.einsum("pki,pki->pk", ens.paths, ens.paths)
    sup_term = np.max(norms2**q, axis=1)
    gvals = np.asarray(gauge(ens.paths), dtype=float)
    integrand = norms2 ** (q - 1) * gvals
    time_term = trapezoid(integrand, x=ens.times, axis=1)
    return float(np.mean(sup_term + time_term))


def path_integrability(ens: PathEnsemble, model: CoefficientModel,
                       triple: SpaceTriple) -> np.ndarray:
    """Per-path integral of the dual drift norm plus squared HS norm.

    Every retained path must make int |b(u, x_u)|_Xs du + int
    |sigma(u, x_u)|_HS^2 du finite; the array of values supports that
    check and feeds run reports.
    """
    n = ens.dim
    w = triple.weights[:n]
    if np.any(w == 0.0):
        raise ValueError("dual norm undefined for zero weights")
    vals = np.empty((ens.n_paths, ens.times.size))
    for j in range(ens.times.size):
        t = float(ens.times[j])
        x = ens.paths[:, j, :]
        b = model.drift_block(t, x)
        s = model.dispersion_block(t, x)
        dual = np.sqrt(np.sum(b * b / w, axis=1))
        if s.ndim == 2:
            hs = float(np.sum(s * s))
            vals[:, j] = dual + hs
        else:
            vals[:, j] = dual + np.sum(s * s, axis=(1, 2))
    return trapezoid(vals, x=ens.times, axis=1)
