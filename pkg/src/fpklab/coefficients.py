"""Coefficient models and sampling-based assumption checkers.

A coefficient model packages the drift ``b(t, y)`` and dispersion
``sigma(t, y)`` of a finite-dimensional diffusion together with its
noise dimension and time horizon.  The checkers in this module certify
structural hypotheses (symmetry and positive semidefiniteness of the
second-order matrix, drift coercivity against a dissipation gauge,
growth envelopes, Lyapunov inequalities) by scanning deterministic
sample plans; a "pass" is a sampling certificate with a recorded worst
margin, not a proof.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionError, EvaluationError, TimeWindowError
from .spaces import DissipationGauge, SpaceTriple

__all__ = [
    "CoefficientModel",
    "LyapunovData",
    "AssumptionParams",
    "SamplePlan",
    "CheckReport",
    "diffusion_matrix",
    "check_symmetry_psd",
    "check_coercivity",
    "check_growth",
    "check_lyapunov",
    "check_gauge_class",
    "check_equicontinuity",
    "check_component_envelope",
    "check_measure_uniform",
    "demicontinuity_profile",
]

_TIME_SLACK = 1e-9


@dataclass(frozen=True)
class CoefficientModel:
    """Drift and dispersion of a finite-dimensional diffusion.

    ``b_eval(t, y)`` returns the length-n drift vector and
    ``sigma_eval(t, y)`` the n-by-m dispersion matrix at a single state.
    Optional ``b_batch`` / ``sigma_batch`` evaluate whole state blocks
    of shape (M, n); ``sigma_batch`` may return a constant (n, m) matrix
    when the noise is additive, which callers broadcast.  Evaluations
    outside [0, horizon] are rejected.
    """

    b_eval: Callable[[float, np.ndarray], np.ndarray]
    sigma_eval: Callable[[float, np.ndarray], np.ndarray]
    noise_dim: int
    horizon: float
    name: str = ""
    b_batch: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    sigma_batch: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    additive_noise: bool = False

    def __post_init__(self):
        if self.noise_dim < 1:
            raise DimensionError("noise_dim must be >= 1")
        if not (np.isfinite(self.horizon) and self.horizon > 0):
            raise ValueError("horizon must be positive and finite")

    def _check_time(self, t: float):
        if not -_TIME_SLACK <= t <= self.horizon + _TIME_SLACK:
            raise TimeWindowError(
                f"t = {t} outside [0, {self.horizon}] for model {self.name!r}"
            )

    def drift(self, t: float, y) -> np.ndarray:
        self._check_time(t)
        y = np.asarray(y, dtype=float)
        out = np.asarray(self.b_eval(t, y), dtype=float)
        if out.shape != y.shape:
            raise EvaluationError(
                f"drift shape {out.shape} does not match state shape {y.shape}"
            )
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"drift non-finite at t={t}")
        return out

    def dispersion(self, t: float, y) -> np.ndarray:
        self._check_time(t)
        y = np.asarray(y, dtype=float)
        out = np.asarray(self.sigma_eval(t, y), dtype=float)
        if out.shape != (y.size, self.noise_dim):
            raise EvaluationError(
                f"dispersion shape {out.shape}, expected {(y.size, self.noise_dim)}"
            )
        if not np.all(np.isfinite(out)):
            raise EvaluationError(f"dispersion non-finite at t={t}")
        return out

    def drift_block(self, t: float, ys: np.ndarray) -> np.ndarray:
        """Drift for a block of states, shape (M, n) -> (M, n)."""
        self._check_time(t)
        if self.b_batch is not None:
            return np.asarray(self.b_batch(t, ys), dtype=float)
        return np.stack([np.asarray(self.b_eval(t, y), dtype=float) for y in ys])

    def dispersion_block(self, t: float, ys: np.ndarray) -> np.ndarray:
        """Dispersion for a block of states: (M, n, m), or (n, m) when
        the model declares additive noise."""
        self._check_time(t)
        if self.sigma_batch is not None:
            return np.asarray(self.sigma_batch(t, ys), dtype=float)
        if self.additive_noise:
            return np.asarray(self.sigma_eval(t, ys[0]), dtype=float)
        return np.stack([np.asarray(self.sigma_eval(t, y), dtype=float) for y in ys])


def diffusion_matrix(model: CoefficientModel, t: float, y) -> np.ndarray:
    """Second-order coefficient matrix a = 0.5 * sigma sigma^T.

    Symmetrized explicitly so the result is symmetric to machine
    precision; positive semidefiniteness is automatic for any real
    dispersion matrix.
    """
    s = model.dispersion(t, y)
    a = 0.5 * (s @ s.T)
    return 0.5 * (a + a.T)


def diffusion_matrix_block(model: CoefficientModel, t: float, ys: np.ndarray):
    """Block version of :func:`diffusion_matrix`: (M, n, n) or (n, n)."""
    s = model.dispersion_block(t, ys)
    if s.ndim == 2:
        a = 0.5 * (s @ s.T)
        return 0.5 * (a + a.T)
    a = 0.5 * np.einsum("mik,mjk->mij", s, s)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


@dataclass(frozen=True)
class LyapunovData:
    """Lyapunov function with derivatives, dissipation rate, and constants.

    ``v``, ``theta`` map (..., n) -> (...); ``v_grad`` maps to (..., n)
    and ``v_hess`` to (..., n, n).  The certified inequalities are

        L V <= c0 * V - theta
        grad V . a grad V <= m0 * V^2
    """

    v: Callable[[np.ndarray], np.ndarray]
    v_grad: Callable[[np.ndarray], np.ndarray]
    v_hess: Callable[[np.ndarray], np.ndarray]
    theta: Callable[[np.ndarray], np.ndarray]
    c0: float
    m0: float
    name: str = ""

    def __post_init__(self):
        if self.c0 < 0 or self.m0 < 0:
            raise ValueError("c0 and m0 must be nonnegative")


def shifted_square_lyapunov(theta_factor: float = 2.0,
                            weights: Optional[np.ndarray] = None,
                            c0: float = 2.0, m0: float = 4.0) -> LyapunovData:
    """V(y) = 1 + |y|_H^2 with theta(y) = theta_factor * |y|^2.

    With ``weights`` given, theta uses the weighted square instead of
    the plain one.
    """

    def v(y):
        return 1.0 + np.sum(y * y, axis=-1)

    def v_grad(y):
        return 2.0 * y

    def v_hess(y):
        n = y.shape[-1]
        h = np.zeros(y.shape + (n,), dtype=float)
        idx = np.arange(n)
        h[..., idx, idx] = 2.0
        return h

    if weights is None:
        def theta(y):
            return theta_factor * np.sum(y * y, axis=-1)
    else:
        w = np.asarray(weights, dtype=float)

        def theta(y):
            k = y.shape[-1]
            return theta_factor * np.sum(w[:k] * y * y, axis=-1)

    return LyapunovData(v, v_grad, v_hess, theta, c0=c0, m0=m0,
                        name="1+|y|^2")


@dataclass(frozen=True)
class AssumptionParams:
    """Constants entering the drift and dispersion growth inequalities.

    lam1: slack constant in the coercivity bound
        <b(t,v), v> <= -N(v) + lam1 * (1 + |v|_H^2).
    lam2, lam3, gamma, gamma_prime: drift growth in the dual norm,
        |b|_Xs^gamma <= lam2 * N(y) + lam3 * (1 + |y|_H^gamma_prime).
    lam4: dispersion bound |sigma|_HS^2 <= lam4 * (1 + |y|_H^2).
    envelope: optional per-component growth data; ``envelope(i)`` returns
        (c_i, k_i, kappa_i) with kappa_i a bounded nonnegative function
        whose limit at infinity is declared to be 0, bounding
        |a_ij| + |b_i| <= c_i * V^{k_i} * (1 + kappa_i(theta) * theta).
    """

    lam1: float
    lam2: float
    lam3: float
    lam4: float
    gamma: float
    gamma_prime: float
    envelope: Optional[Callable[[int], tuple]] = None

    def __post_init__(self):
        if not (self.gamma > 1 and self.gamma_prime >= self.gamma):
            raise ValueError("need gamma_prime >= gamma > 1")
        for nm in ("lam2", "lam3", "lam4"):
            if getattr(self, nm) <= 0:
                raise ValueError(f"{nm} must be positive")
        if self.lam1 < 0:
            raise ValueError("lam1 must be nonnegative")


@dataclass(frozen=True)
class SamplePlan:
    """Deterministic (t, y) sample draws per truncation level.

    Each truncation n gets ``n_samples`` states: the origin, scaled
    coordinate directions, and Gaussian bulk draws of spread ``scale``,
    with times uniform on [0, horizon].  Identical plans yield identical
    draws, so checker reports are reproducible run to run.
    """

    seed: int
    n_samples: int = 64
    truncations: tuple = (1, 2, 4)
    scale: float = 2.0

    def draws(self, n: int, horizon: float):
        rng = np.random.default_rng([self.seed, n])
        k = self.n_samples
        ts = rng.uniform(0.0, horizon, size=k)
        ys = self.scale * rng.standard_normal((k, n))
        ys[0] = 0.0
        for i in range(1, min(n + 1, k)):
            ys[i] = 0.0
            ys[i][i - 1] = self.scale
        return ts, ys


@dataclass
class CheckReport:
    """Outcome of one sampling-based assumption check.

    ``worst_gap`` is the largest observed violation lhs - rhs across the
    scan (negative values mean the inequality held with margin).  The
    verdict is "pass" when worst_gap <= tol, so loosening the tolerance
    can only keep or improve a pass.
    """

    name: str
    verdict: str
    worst_gap: float
    tol: float
    samples_used: int
    worst_t: float = 0.0
    worst_y: list = field(default_factory=list)
    worst_n: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "verdict": self.verdict,
            "worst_gap": float(self.worst_gap),
            "tol": float(self.tol),
            "samples_used": int(self.samples_used),
            "worst_t": float(self.worst_t),
            "worst_y": [float(x) for x in self.worst_y],
            "worst_n": int(self.worst_n),
            "details": self.details,
        }


def _scan(name, model, plan, gap_fn, tol, details=None):
    """Common scan driver: track the worst gap over all (n, t, y) draws."""
    worst = -np.inf
    worst_t, worst_y, worst_n = 0.0, [], 0
    used = 0
    for n in plan.truncations:
        ts, ys = plan.draws(n, model.horizon)
        for t, y in zip(ts, ys):
            g = gap_fn(n, float(t), y)
            used += 1
            if g > worst:
                worst, worst_t, worst_y, worst_n = g, float(t), list(y), n
    verdict = "pass" if worst <= tol else "fail"
    return CheckReport(
        name=name,
        verdict=verdict,
        worst_gap=float(worst),
        tol=float(tol),
        samples_used=used,
        worst_t=worst_t,
        worst_y=worst_y,
        worst_n=worst_n,
        details=details or {},
    )


def check_symmetry_psd(model: CoefficientModel, plan: SamplePlan,
                       a_eval=None, tol: float = 1e-10) -> CheckReport:
    """Symmetry and positive semidefiniteness of the second-order matrix.

    ``a_eval(t, y)`` overrides the matrix construction, which lets tests
    inject adversarial matrices; by default the matrix is derived from
    the model's dispersion and the check can only fail through numerics.
    """
    get_a = a_eval or (lambda t, y: diffusion_matrix(model, t, y))

    def gap(n, t, y):
        a = np.asarray(get_a(t, y), dtype=float)
        asym = float(np.max(np.abs(a - a.T))) if a.size else 0.0
        mineig = float(np.linalg.eigvalsh(0.5 * (a + a.T))[0])
        return max(asym, -mineig)

    return _scan("symmetry_psd", model, plan, gap, tol)


def check_coercivity(model: CoefficientModel, gauge: DissipationGauge,
                     params: AssumptionParams, plan: SamplePlan,
                     tol: float = 1e-9) -> CheckReport:
    """Drift coercivity: <b(t,v), v> <= -N(v) + lam1 (1 + |v|^2)."""

    def gap(n, t, y):
        b = model.drift(t, y)
        lhs = float(np.dot(b, y))
        rhs = -float(gauge(y)) + params.lam1 * (1.0 + float(np.dot(y, y)))
        return lhs - rhs

    return _scan("coercivity", model, plan, gap, tol)


def check_growth(model: CoefficientModel, triple: SpaceTriple,
                 gauge: DissipationGauge, params: AssumptionParams,
                 plan: SamplePlan, tol: float = 1e-9) -> CheckReport:
    """Dual-norm drift growth and Hilbert-Schmidt dispersion bound."""

    def gap(n, t, y):
        b = model.drift(t, y)
        s = model.dispersion(t, y)
        h2 = float(np.dot(y, y))
        g1 = triple.norm(b, "X*") ** params.gamma - (
            params.lam2 * float(gauge(y))
            + params.lam3 * (1.0 + h2 ** (params.gamma_prime / 2.0))
        )
        g2 = float(np.sum(s * s)) - params.lam4 * (1.0 + h2)
        return max(g1, g2)

    return _scan("growth", model, plan, gap, tol)


def check_lyapunov(model: CoefficientModel, lyap: LyapunovData,
                   plan: SamplePlan, tol: float = 1e-9) -> CheckReport:
    """Both Lyapunov inequalities on the sample plan."""

    def gap(n, t, y):
        a = diffusion_matrix(model, t, y)
        b = model.drift(t, y)
        grad = lyap.v_grad(y)
        lv = float(np.sum(a * lyap.v_hess(y))) + float(np.dot(b, grad))
        vv = float(lyap.v(y))
        g1 = lv - (lyap.c0 * vv - float(lyap.theta(y)))
        g2 = float(grad @ a @ grad) - lyap.m0 * vv * vv
        return max(g1, g2)

    return _scan("lyapunov", model, plan, gap, tol)


def check_gauge_class(gauge: DissipationGauge, triple: SpaceTriple,
                      plan: SamplePlan, horizon: float = 1.0,
                      tol: float = 1e-9) -> CheckReport:
    """Membership checks for the dissipation gauge class.

    Scans nonnegativity, vanishing only at the origin, the homogeneity
    bound N(c v) <= c^rho N(v), and records the empirical domination
    constant sup N(v)/|v|^p per truncation.  Compactness of sublevel
    sets is declared by the class, not certified here.
    """
    scales = np.array([0.0, 0.25, 0.5, 1.0, 2.0, 4.0])
    consts: dict[str, float] = {}
    worst = -np.inf
    worst_y: list = []
    worst_n = 0
    used = 0
    for n in plan.truncations:
        _, ys = plan.draws(n, horizon)
        vals = np.asarray(gauge(ys), dtype=float)
        used += ys.shape[0]
        cmax = 0.0
        for y, val in zip(ys, vals):
            g = -val  # nonnegativity: N >= 0
            norm = float(np.sqrt(np.dot(y, y)))
            if norm == 0.0:
                g = max(g, abs(val))  # N(0) = 0
            else:
                cmax = max(cmax, float(val) / norm**gauge.p)
                if val <= 0.0:
                    g = max(g, 1.0)  # vanished away from the origin
            for c in scales:
                g = max(g, float(gauge(c * y)) - c**gauge.homogeneity * float(val))
            if g > worst:
                worst, worst_y, worst_n = g, list(y), n
        consts[str(n)] = cmax
    if not np.all(np.isfinite(list(consts.values()))):
        verdict = "fail"
    else:
        verdict = "pass" if worst <= tol else "fail"
    return CheckReport(
        name="gauge_class",
        verdict=verdict,
        worst_gap=float(worst),
        tol=float(tol),
        samples_used=used,
        worst_y=worst_y,
        worst_n=worst_n,
        details={"domination_constants": consts,
                 "sublevel_compactness": "declared"},
    )


def check_equicontinuity(model: CoefficientModel, plan: SamplePlan,
                         deltas=(1.0, 0.5, 0.25, 0.125, 0.0625),
                         time_points: int = 9, slack: float = 1.1) -> CheckReport:
    """Finite modulus-of-continuity scan of the second-order matrix.

    For sampled base states and directions, records the worst change of
    the matrix entries over a fixed time grid as the state perturbation
    shrinks through ``deltas``.  Pass means the modulus is non-increasing
    within ``slack`` at each halving; a flat zero modulus also passes.
    This is a smoke test on a finite scan, not a proof of continuity.
    """
    deltas = np.asarray(sorted(deltas, reverse=True), dtype=float)
    tgrid = np.linspace(0.0, model.horizon, time_points)
    moduli = np.zeros(deltas.size)
    used = 0
    for n in plan.truncations:
        _, ys = plan.draws(n, model.horizon)
        rng = np.random.default_rng([plan.seed, n, 7])
        dirs = rng.standard_normal(ys.shape)
        dirs /= np.maximum(np.linalg.norm(dirs, axis=1, keepdims=True), 1e-12)
        for y, w in zip(ys[: max(4, len(ys) // 8)], dirs):
            used += 1
            for t in tgrid:
                a0 = diffusion_matrix(model, float(t), y)
                for i, d in enumerate(deltas):
                    a1 = diffusion_matrix(model, float(t), y + d * w)
                    moduli[i] = max(moduli[i], float(np.max(np.abs(a1 - a0))))
    ok = all(
        moduli[i + 1] <= slack * moduli[i] + 1e-12 for i in range(deltas.size - 1)
    )
    worst = 0.0
    for i in range(deltas.size - 1):
        worst = max(worst, moduli[i + 1] - slack * moduli[i])
    return CheckReport(
        name="equicontinuity",
        verdict="pass" if ok else "indeterminate",
        worst_gap=float(worst),
        tol=1e-12,
        samples_used=used,
        details={"deltas": [float(d) for d in deltas],
                 "moduli": [float(m) for m in moduli]},
    )


def check_component_envelope(model: CoefficientModel, lyap: LyapunovData,
                             params: AssumptionParams, plan: SamplePlan,
                             tol: float = 1e-9) -> CheckReport:
    """Per-component growth envelope |a_ij| + |b_i| against V and theta."""
    if params.envelope is None:
        raise ValueError("AssumptionParams.envelope is not set")

    def gap(n, t, y):
        a = diffusion_matrix(model, t, y)
        b = model.drift(t, y)
        vv = float(lyap.v(y))
        th = float(lyap.theta(y))
        g = -np.inf
        for i in range(n):
            ci, ki, kappa = params.envelope(i + 1)
            lhs = float(np.max(np.abs(a[i]))) + abs(float(b[i]))
            rhs = ci * vv**ki * (1.0 + float(kappa(th)) * th)
            g = max(g, lhs - rhs)
        return g

    return _scan("component_envelope", model, plan, gap, tol)


def demicontinuity_profile(model: CoefficientModel, t: float, y, direction,
                           v, levels: int = 10) -> np.ndarray:
    """Pairing gaps |<b(t, y + 2^-k w) - b(t, y), v>| for k = 0..levels-1.

    A drift continuous along rays produces a decreasing tail; the test
    suite asserts the finest gap is a small fraction of the coarsest.
    """
    y = np.asarray(y, dtype=float)
    w = np.asarray(direction, dtype=float)
    v = np.asarray(v, dtype=float)
    base = model.drift(t, y)
    gaps = np.zeros(levels)
    for k in range(levels):
        bk = model.drift(t, y + w / 2.0**k)
        gaps[k] = abs(float(np.dot(bk - base, v)))
    return gaps


def check_measure_uniform(model_nl, measures: Sequence, triple: SpaceTriple,
                          gauge: DissipationGauge, params: AssumptionParams,
                          plan: SamplePlan,
                          checks=("symmetry_psd", "coercivity", "growth"),
                          tol: float = 1e-9) -> CheckReport:
    """Uniformity of the structural checks over a set of frozen measures.

    Freezes the measure argument of a measure-dependent model at each
    supplied measure and reruns the requested checkers with the same
    constants.  Passing means one set of constants works for every
    sampled measure, which is the uniform-in-measure reading of the
    assumptions.
    """
    from .mckean import freeze_at_measure  # local import to avoid a cycle

    worst = -np.inf
    worst_y: list = []
    worst_n = 0
    used = 0
    per_measure = []
    for idx, rho in enumerate(measures):
        frozen = freeze_at_measure(model_nl, rho)
        sub = {}
        for c in checks:
            if c == "symmetry_psd":
                rep = check_symmetry_psd(frozen, plan)
            elif c == "coercivity":
                rep = check_coercivity(frozen, gauge, params, plan, tol=tol)
            elif c == "growth":
                rep = check_growth(frozen, triple, gauge, params, plan, tol=tol)
            else:
                raise ValueError(f"unknown check {c!r}")
            sub[c] = rep.verdict
            used += rep.samples_used
            if rep.worst_gap > worst:
                worst, worst_y, worst_n = rep.worst_gap, rep.worst_y, rep.worst_n
        per_measure.append(sub)
    ok = all(v == "pass" for sub in per_measure for v in sub.values())
    return CheckReport(
        name="measure_uniform",
        verdict="pass" if ok else "fail",
        worst_gap=float(worst),
        tol=float(tol),
        samples_used=used,
        worst_y=worst_y,
        worst_n=worst_n,
        details={"measures": len(list(measures)), "per_measure": per_measure},
    )
