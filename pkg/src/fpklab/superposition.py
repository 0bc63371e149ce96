"""Comparing marginal flows and checking a-priori ledgers.

The central object is the pseudometric

    d_F(mu, nu) = max_{f in F} | int f dmu - int f dnu |

over a finite family F of test functions.  Two flows produced by
different routes (grid solver vs. path ensemble, coarse vs. fine
truncation, frozen vs. interacting) are compared node by node under
this pseudometric.  The module also evaluates the moment ledger

    int V^k dmu_t + k int_0^t int V^(k-1) Theta dmu_s ds
        <= bound_factor(k) * initial_level(k)

and the integrability functional whose finiteness the superposition
route needs.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .coefficients import CoefficientModel, LyapunovData
from .errors import DimensionError
from .measures import MarginalFlow
from .spaces import FinitelyBasedFunction

__all__ = [
    "marginal_distance",
    "SuperpositionReport",
    "verify_superposition",
    "lyapunov_constants",
    "LyapunovLedger",
    "lyapunov_bound_check",
    "superposition_integrability",
    "galerkin_convergence",
    "ks_statistic",
    "ks_band",
]


def marginal_distance(mu, nu, family: Sequence[FinitelyBasedFunction]) -> float:
    """Family pseudometric between two measures.

    The measures may live in different ambient dimensions as long as
    every family member only reads coordinates both of them have.
    """
    if not family:
        raise ValueError("family must be nonempty")
    low = min(mu.dim, nu.dim)
    for f in family:
        if f.base_dim > low:
            raise DimensionError(
                f"member {f.name!r} reads {f.base_dim} coordinates, "
                f"measures have {mu.dim} and {nu.dim}"
            )
    worst = 0.0
    for f in family:
        gap = abs(mu.integrate(f) - nu.integrate(f))
        if gap > worst:
            worst = gap
    return worst


@dataclass(frozen=True)
class SuperpositionReport:
    """Node-by-node family distances between two marginal flows."""

    times: np.ndarray
    distances: np.ndarray
    max_distance: float
    tol: float
    passed: bool
    family_size: int

    def to_dict(self) -> dict:
        return {
            "times": [float(t) for t in self.times],
            "distances": [float(d) for d in self.distances],
            "max_distance": float(self.max_distance),
            "tol": float(self.tol),
            "passed": bool(self.passed),
            "family_size": int(self.family_size),
        }


def verify_superposition(flow_a: MarginalFlow, other,
                         family: Sequence[FinitelyBasedFunction],
                         tol: float,
                         times: Optional[Sequence[float]] = None
                         ) -> SuperpositionReport:
    """Compare a flow against an ensemble's marginals (or a second flow).

    ``other`` is a :class:`PathEnsemble` (compared through its empirical
    marginals) or another :class:`MarginalFlow`.  Without ``times`` the
    two must share their node grid and every node is compared; with
    ``times`` only those nodes are, which keeps statistical comparisons
    out of the multiple-testing regime.
    """
    if isinstance(other, MarginalFlow):
        flow_b = other
    else:
        from .martingale import ensemble_flow

        flow_b = ensemble_flow(other)
    if times is None:
        flow_a.share_grid(flow_b)
        idx_a = list(range(flow_a.times.size))
        idx_b = idx_a
        used = flow_a.times.copy()
    else:
        idx_a = [flow_a.node_index(t) for t in times]
        idx_b = [flow_b.node_index(t) for t in times]
        used = np.asarray([float(t) for t in times])
    dists = np.empty(len(idx_a))
    for j, (ia, ib) in enumerate(zip(idx_a, idx_b)):
        dists[j] = marginal_distance(
            flow_a.measures[ia], flow_b.measures[ib], family
        )
    worst = float(dists.max())
    return SuperpositionReport(
        times=used,
        distances=dists,
        max_distance=worst,
        tol=float(tol),
        passed=bool(worst <= tol),
        family_size=len(family),
    )


# ---------------------------------------------------------------------------
# moment ledger
# ---------------------------------------------------------------------------


def lyapunov_constants(k: int, c0: float, m0: float) -> tuple[float, float]:
    """Growth exponent and bound factor of the order-k moment ledger.

    Returns (growth_exponent, bound_factor) with

        growth_exponent = k * (c0 + (k - 1) * m0)
        bound_factor    = growth_exponent * exp(growth_exponent) + 1.
    """
    if k < 1:
        raise ValueError("k must be a positive integer")
    mk = k * (c0 + (k - 1) * m0)
    nk = mk * np.exp(mk) + 1.0
    return float(mk), float(nk)


@dataclass(frozen=True)
class LyapunovLedger:
    """Evaluated order-k moment ledger along a flow.

    Unpacks as ``lhs, rhs, verdict = ledger`` for callers that only
    need the headline comparison.
    """

    k: int
    times: np.ndarray
    lhs: np.ndarray
    bound: float
    initial_level: float
    growth_exponent: float
    bound_factor: float
    finite_fraction: float
    passed: bool

    def __iter__(self):
        yield self.lhs
        yield self.bound
        yield self.passed

    def to_dict(self) -> dict:
        return {
            "k": int(self.k),
            "times": [float(t) for t in self.times],
            "lhs": [float(v) for v in self.lhs],
            "bound": float(self.bound),
            "initial_level": float(self.initial_level),
            "growth_exponent": float(self.growth_exponent),
            "bound_factor": float(self.bound_factor),
            "finite_fraction": float(self.finite_fraction),
            "passed": bool(self.passed),
        }


def lyapunov_bound_check(flow: MarginalFlow, lyap: LyapunovData, k: int,
                         x0, n_max: Optional[int] = None,
                         rel_slack: float = 1e-6) -> LyapunovLedger:
    """Check the order-k moment ledger along ``flow``.

    The left side at node t is int V^k dmu_t plus k times the running
    trapezoid integral of int V^(k-1) Theta dmu_s; the right side is
    bound_factor(k) times the worst initial level sup_n V^k over
    truncations of the starting state (n up to ``n_max``, default all
    of x0).  Pass needs lhs <= rhs*(1 + rel_slack) at every node and a
    finite V integral everywhere; ``finite_fraction`` reports the
    latter's share.
    """
    x0 = np.asarray(x0, dtype=float)
    if n_max is None:
        n_max = x0.size
    mk, nk = lyapunov_constants(k, lyap.c0, lyap.m0)
    levels = [
        abs(float(lyap.v(x0[:n]))) ** k
        for n in range(1, min(n_max, x0.size) + 1)
    ]
    w_k = max(levels)

    vk = np.empty(flow.times.size)
    diss = np.empty(flow.times.size)
    for j, measure in enumerate(flow.measures):
        def vk_fn(pts, _k=k):
            return np.asarray(lyap.v(pts), dtype=float) ** _k

        def diss_fn(pts, _k=k):
            v = np.asarray(lyap.v(pts), dtype=float)
            return v ** (_k - 1) * np.asarray(lyap.theta(pts), dtype=float)

        vk[j] = measure.integrate(vk_fn)
        diss[j] = measure.integrate(diss_fn)

    running = np.concatenate(
        ([0.0], np.cumsum(np.diff(flow.times) * 0.5 * (diss[1:] + diss[:-1])))
    )
    lhs = vk + k * running
    finite = np.isfinite(vk)
    bound = nk * w_k
    passed = bool(finite.all() and np.all(lhs <= bound * (1.0 + rel_slack)))
    return LyapunovLedger(
        k=k,
        times=flow.times.copy(),
        lhs=lhs,
        bound=float(bound),
        initial_level=float(w_k),
        growth_exponent=mk,
        bound_factor=nk,
        finite_fraction=float(np.mean(finite)),
        passed=passed,
    )


# ---------------------------------------------------------------------------
# integrability functional
# ---------------------------------------------------------------------------


def _batch_opnorm(mats: np.ndarray, tol: float = 1e-10,
                  max_iter: int = 500) -> np.ndarray:
    """Largest eigenvalue of a batch of symmetric PSD matrices.

    Power iteration on the whole batch at once; for PSD inputs the
    iterate converges to the top eigenvalue from any start vector not
    orthogonal to the leading eigenspace, so the deterministic start is
    perturbed once if it stalls at zero.
    """
    m, n, _ = mats.shape
    v = np.full((m, n), 1.0 / np.sqrt(n))
    lam = np.zeros(m)
    for it in range(max_iter):
        w = np.einsum("mij,mj->mi", mats, v)
        norms = np.linalg.norm(w, axis=1)
        dead = norms == 0.0
        if dead.any():
            if it == 0:
                v[dead] = 0.0
                v[dead, 0] = 1.0
                continue
            norms = np.where(dead, 1.0, norms)
            w[dead] = v[dead]
        v = w / norms[:, None]
        new = np.einsum("mi,mij,mj->m", v, mats, v)
        if np.all(np.abs(new - lam) <= tol * np.maximum(1.0, np.abs(new))):
            return new
        lam = new
    return lam


def superposition_integrability(flow: MarginalFlow, model: CoefficientModel,
                                norm: str = "op") -> float:
    """Time integral of int (|A| + |<b, y>|) / (1 + |y|)^2 dmu_t.

    Finiteness of this quantity is what lets a flow of marginals be
    lifted to a path measure.  ``norm`` selects the operator norm of
    the diffusion matrix ("op", the sharp choice) or the Frobenius norm
    ("fro", a cheap upper bound).
    """
    if norm not in ("op", "fro"):
        raise ValueError("norm must be 'op' or 'fro'")
    vals = np.empty(flow.times.size)
    for j, measure in enumerate(flow.measures):
        t = float(flow.times[j])

        def integrand(pts):
            pts = np.atleast_2d(np.asarray(pts, dtype=float))
            b = model.drift_block(t, pts)
            s = model.dispersion_block(t, pts)
            if s.ndim == 2:
                a = 0.5 * (s @ s.T)
                if norm == "op":
                    a_size = float(np.linalg.eigvalsh(a)[-1])
                else:
                    a_size = float(np.linalg.norm(a))
                a_part = np.full(pts.shape[0], a_size)
            else:
                a = 0.5 * np.einsum("mik,mjk->mij", s, s)
                if norm == "op":
                    a_part = _batch_opnorm(a)
                else:
                    a_part = np.sqrt(np.einsum("mij,mij->m", a, a))
            pair = np.abs(np.einsum("mi,mi->m", b, pts))
            weight = (1.0 + np.linalg.norm(pts, axis=1)) ** 2
            return (a_part + pair) / weight

        vals[j] = measure.integrate(integrand)
    return float(trapezoid(vals, x=flow.times))


# ---------------------------------------------------------------------------
# Galerkin comparison and distribution checks
# ---------------------------------------------------------------------------


def galerkin_convergence(flows: dict[int, MarginalFlow],
                         family: Sequence[FinitelyBasedFunction],
                         times: Sequence[float]) -> dict:
    """Cross-truncation family distances and a stabilization diagnostic.

    ``flows`` maps truncation dimension to its marginal flow.  Family
    members are restricted to coordinates available at every level so
    all cells are comparable.  Returns ``pairs`` (one row per time and
    level pair), ``to_finest`` (per level, the max-over-times distance
    to the finest level), and ``stabilizing`` (whether that distance is
    non-increasing in the level).
    """
    if len(flows) < 2:
        raise ValueError("need at least two truncation levels")
    dims = sorted(flows)
    low = dims[0]
    usable = [f for f in family if f.base_dim <= low]
    if not usable:
        raise ValueError("no family member fits the coarsest level")
    pairs = []
    cache: dict[tuple, float] = {}
    for t in times:
        for i, n in enumerate(dims):
            mu = flows[n].measures[flows[n].node_index(t)]
            for n2 in dims[i + 1:]:
                nu = flows[n2].measures[flows[n2].node_index(t)]
                d = marginal_distance(mu, nu, usable)
                pairs.append(
                    {"t": float(t), "n": n, "n2": n2, "distance": d}
                )
                cache[(float(t), n, n2)] = d
    finest = dims[-1]
    to_finest = [
        {
            "n": n,
            "distance_to_finest": max(
                cache[(float(t), n, finest)] for t in times
            ),
        }
        for n in dims[:-1]
    ]
    gaps = [row["distance_to_finest"] for row in to_finest]
    stabilizing = all(b <= a for a, b in zip(gaps, gaps[1:]))
    return {
        "levels": dims,
        "family_size": len(usable),
        "pairs": pairs,
        "to_finest": to_finest,
        "stabilizing": bool(stabilizing),
    }


def ks_statistic(sample: np.ndarray, cdf) -> float:
    """Kolmogorov-Smirnov distance of a 1-D sample to a reference cdf."""
    xs = np.sort(np.asarray(sample, dtype=float).ravel())
    m = xs.size
    if m == 0:
        raise ValueError("empty sample")
    ref = np.asarray(cdf(xs), dtype=float)
    hi = np.arange(1, m + 1) / m - ref
    lo = ref - np.arange(0, m) / m
    return float(max(hi.max(), lo.max()))


def ks_band(m: int, alpha: float = 0.05) -> float:
    """Asymptotic KS acceptance threshold for sample size ``m``."""
    from scipy.stats import kstwobign

    return float(kstwobign.isf(alpha) / np.sqrt(m))
