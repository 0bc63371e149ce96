"""2-D incompressible stochastic Navier-Stokes on the torus, in spectral
Galerkin coordinates.

States are real coordinate vectors over a divergence-free Fourier basis
on [0, 2pi)^2: for every retained wavevector k (half plane, 0 < |k| <=
k_max) there are two coordinates, the cosine and sine amplitudes along
the unit vector perpendicular to k.  In these coordinates:

    drift      b(y) = -nu * diag(|k|^2) y - B(y, y)
    dispersion sigma = diag(sqrt(2 q_k))      (additive noise)

where B is the Galerkin truncation of the convective term (u . grad) u,
computed exactly as a dense interaction tensor by convolving the basis
modes in complex arithmetic.  The tensor inherits the structural
identity <B(u,u), u> = 0, which is what makes the drift coercive with
gauge nu * |y|_X^2 (the enstrophy norm).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .coefficients import (AssumptionParams, CoefficientModel, LyapunovData,
                           SamplePlan, shifted_square_lyapunov)
from .errors import DimensionError
from .martingale import PathEnsemble
from .spaces import DissipationGauge, SpaceTriple, weighted_square_gauge

__all__ = [
    "SNSEConfig",
    "wavevectors",
    "interaction_tensor",
    "build_snse_coefficients",
    "snse_triple",
    "snse_gauge",
    "snse_energy_check",
    "snse_assumption_bundle",
]


def wavevectors(k_max: int) -> np.ndarray:
    """Retained wavevectors: half plane, 0 < |k| <= k_max.

    One representative per +-k pair (k1 > 0, or k1 = 0 and k2 > 0),
    sorted by (|k|^2, k1, k2) so the induced coordinate weights are
    non-decreasing.
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1; the mode set is empty")
    ks = []
    for k1 in range(0, k_max + 1):
        for k2 in range(-k_max, k_max + 1):
            if k1 == 0 and k2 <= 0:
                continue
            if k1 * k1 + k2 * k2 <= k_max * k_max:
                ks.append((k1, k2))
    ks.sort(key=lambda k: (k[0] ** 2 + k[1] ** 2, k[0], k[1]))
    return np.asarray(ks, dtype=int)


@dataclass(frozen=True)
class SNSEConfig:
    """Viscosity, mode cutoff, per-mode noise amplitudes, horizon.

    ``amplitudes`` has one entry per retained wavevector (cosine and
    sine coordinates of a mode share it); the retained set never
    contains the zero mode.
    """

    k_max: int
    viscosity: float
    amplitudes: np.ndarray
    horizon: float = 1.0

    def __post_init__(self):
        if self.viscosity <= 0.0:
            raise ValueError("viscosity must be positive")
        if self.horizon <= 0.0:
            raise ValueError("horizon must be positive")
        modes = wavevectors(self.k_max)
        q = np.asarray(self.amplitudes, dtype=float)
        if q.ndim == 0:
            q = np.full(modes.shape[0], float(q))
        if q.shape != (modes.shape[0],):
            raise DimensionError(
                f"need {modes.shape[0]} amplitudes for k_max={self.k_max}, "
                f"got {q.shape}"
            )
        if np.any(q < 0.0) or not np.all(np.isfinite(q)):
            raise ValueError("amplitudes must be finite and nonnegative")
        object.__setattr__(self, "amplitudes", q)

    @classmethod
    def with_decay(cls, k_max: int, viscosity: float, q0: float,
                   decay: float = 2.0, horizon: float = 1.0) -> "SNSEConfig":
        """Amplitudes q_k = q0 * |k|^(-decay)."""
        modes = wavevectors(k_max)
        k2 = np.sum(modes * modes, axis=1).astype(float)
        return cls(k_max=k_max, viscosity=viscosity,
                   amplitudes=q0 * k2 ** (-decay / 2.0), horizon=horizon)

    @property
    def modes(self) -> np.ndarray:
        return wavevectors(self.k_max)

    @property
    def dim(self) -> int:
        return 2 * wavevectors(self.k_max).shape[0]

    def coordinate_weights(self) -> np.ndarray:
        """|k|^2 per coordinate (cosine and sine share the value)."""
        k2 = np.sum(self.modes ** 2, axis=1).astype(float)
        return np.repeat(k2, 2)

    def coordinate_amplitudes(self) -> np.ndarray:
        """q_k per coordinate."""
        return np.repeat(self.amplitudes, 2)

    def to_dict(self) -> dict:
        return {
            "k_max": int(self.k_max),
            "viscosity": float(self.viscosity),
            "amplitudes": [float(q) for q in self.amplitudes],
            "horizon": float(self.horizon),
        }


def _basis_modes(cfg: SNSEConfig):
    """Complex-exponential decomposition of every real basis field.

    Coordinate 2r is the cosine field of wavevector k_r, coordinate
    2r+1 the sine field; each is a sum of two complex modes at +-k_r
    with 2-vector amplitudes along the unit perpendicular of k_r.  The
    L2 normalization on [0, 2pi)^2 is 1/(sqrt(2) pi) per field.
    """
    modes = cfg.modes
    norm = 1.0 / (np.sqrt(2.0) * np.pi)
    fields = []
    for k in modes:
        k = np.asarray(k, dtype=float)
        perp = np.array([-k[1], k[0]]) / np.linalg.norm(k)
        amp = 0.5 * norm * perp.astype(complex)
        kk = (int(k[0]), int(k[1]))
        nk = (-kk[0], -kk[1])
        fields.append({kk: amp, nk: amp})
        fields.append({kk: -1j * amp, nk: 1j * amp})
    return fields


def interaction_tensor(cfg: SNSEConfig) -> np.ndarray:
    """Dense tensor T with <(u_j . grad) u_l, u_i> = T[i, j, l].

    Assembled by exact convolution of the complex basis modes and then
    antisymmetrized in (i, l), which the continuous form satisfies and
    which carries the energy cancellation <B(y,y), y> = 0 down to the
    floating-point sum.
    """
    fields = _basis_modes(cfg)
    n = len(fields)
    lookup: dict = {}
    for i, fld in enumerate(fields):
        for p, amp in fld.items():
            lookup.setdefault(p, []).append((i, np.conj(amp)))
    area = 4.0 * np.pi ** 2
    t = np.zeros((n, n, n), dtype=complex)
    for j, fj in enumerate(fields):
        for l, fl in enumerate(fields):
            for q, a in fj.items():
                for r, c in fl.items():
                    factor = 1j * (a[0] * r[0] + a[1] * r[1])
                    target = (q[0] + r[0], q[1] + r[1])
                    for i, conj_amp in lookup.get(target, ()):
                        t[i, j, l] += area * factor * (
                            c[0] * conj_amp[0] + c[1] * conj_amp[1]
                        )
    worst_imag = float(np.max(np.abs(t.imag)))
    if worst_imag > 1e-10:
        raise AssertionError(
            f"interaction tensor has imaginary residue {worst_imag}"
        )
    real = t.real
    return 0.5 * (real - real.transpose(2, 1, 0))


def snse_triple(cfg: SNSEConfig) -> SpaceTriple:
    """Coordinate weights |k|^2: X is the enstrophy-normed space."""
    return SpaceTriple(cfg.coordinate_weights())


def snse_gauge(cfg: SNSEConfig) -> DissipationGauge:
    """Dissipation gauge nu * |y|_X^2."""
    return weighted_square_gauge(snse_triple(cfg), factor=cfg.viscosity)


def build_snse_coefficients(cfg: SNSEConfig, with_viscosity: bool = True,
                            with_convection: bool = True) -> CoefficientModel:
    """Coefficient model for the truncated system.

    The toggles disable drift terms for diagnostics: without convection
    the model is a decoupled mode-wise OU system; without both it is
    pure additive noise.  Evaluators accept states of any length up to
    the full dimension (shorter states are the coarser Galerkin levels)
    and return vectors of matching length.
    """
    n = cfg.dim
    lam = cfg.coordinate_weights()
    nu = cfg.viscosity
    tensor = interaction_tensor(cfg) if with_convection else None
    flat = tensor.reshape(n, n * n).T.copy() if with_convection else None
    sig_full = np.diag(np.sqrt(2.0 * cfg.coordinate_amplitudes()))

    def b_batch(t, ys):
        ys = np.asarray(ys, dtype=float)
        m, k = ys.shape
        if k > n:
            raise DimensionError(f"state has {k} coordinates, basis has {n}")
        if k < n:
            pad = np.zeros((m, n))
            pad[:, :k] = ys
        else:
            pad = ys
        out = np.zeros((m, n))
        if with_viscosity:
            out -= nu * lam * pad
        if with_convection:
            outer = np.einsum("mj,ml->mjl", pad, pad).reshape(m, n * n)
            out -= outer @ flat
        return out[:, :k]

    def b_eval(t, y):
        return b_batch(t, np.asarray(y, dtype=float)[None, :])[0]

    def sigma_eval(t, y):
        k = np.asarray(y).shape[-1]
        return sig_full[:k, :]

    parts = []
    if with_viscosity:
        parts.append("stokes")
    if with_convection:
        parts.append("convection")
    label = "snse2d[" + "+".join(parts or ["noise-only"]) + f"]k{cfg.k_max}"
    return CoefficientModel(
        b_eval=b_eval,
        sigma_eval=sigma_eval,
        noise_dim=n,
        horizon=cfg.horizon,
        name=label,
        b_batch=b_batch,
        additive_noise=True,
    )


def snse_energy_check(ens: PathEnsemble, cfg: SNSEConfig,
                      noise_only: bool = False, check_times=None) -> dict:
    """Discrete energy balance of a simulated ensemble.

    Verifies  E|x(t)|_H^2 + 2 nu E int_0^t |x|_X^2 ds  <=  |x0|_H^2 +
    t * sum(2 q_k) + slack + 3 SE, where the slack is the explicit-step
    quadrature bias dt * int E|b|^2 ds estimated from the ensemble
    itself and reported separately.  With ``noise_only`` the drift-free
    equality E|x(t)|^2 = |x0|^2 + t * sum(2 q_k) is required two-sided
    within 3 SE at ``check_times`` (default: the quarter points).
    """
    lam = cfg.coordinate_weights()
    nu = 0.0 if noise_only else cfg.viscosity
    n = ens.dim
    if lam.size != n:
        raise DimensionError("ensemble dimension does not match config")
    x0 = ens.paths[0, 0, :]
    qsum = float(np.sum(2.0 * cfg.coordinate_amplitudes()))
    times = ens.times

    sq = np.einsum("pki,pki->pk", ens.paths, ens.paths)
    ens_x = np.einsum("pki,i,pki->pk", ens.paths, lam, ens.paths)
    cum = np.concatenate(
        (
            np.zeros((ens.n_paths, 1)),
            np.cumsum(np.diff(times) * 0.5 * (ens_x[:, 1:] + ens_x[:, :-1]),
                      axis=1),
        ),
        axis=1,
    )
    per_path = sq + 2.0 * nu * cum
    lhs = per_path.mean(axis=0)
    se = per_path.std(axis=0, ddof=1) / np.sqrt(ens.n_paths)

    dt = float(times[1] - times[0]) if times.size > 1 else 0.0
    model = build_snse_coefficients(cfg, with_viscosity=not noise_only,
                                    with_convection=not noise_only)
    b2 = np.empty(times.size)
    for k in range(times.size):
        b = model.drift_block(float(min(times[k], cfg.horizon)),
                              ens.paths[:, k, :])
        b2[k] = float(np.mean(np.einsum("pi,pi->p", b, b)))
    slack = dt * np.concatenate(
        ([0.0], np.cumsum(np.diff(times) * 0.5 * (b2[1:] + b2[:-1])))
    )

    rhs = float(np.dot(x0, x0)) + times * qsum
    margin = lhs - (rhs + slack + 3.0 * se)
    # at t = 0 both se and slack vanish and the two sides are the same
    # quantity summed in different orders; allow accumulation roundoff
    fp_slack = 1e-9 * (1.0 + np.abs(rhs))
    passed = bool(np.all(margin <= fp_slack))
    report = {
        "times": times.copy(),
        "lhs": lhs,
        "rhs": rhs,
        "slack": slack,
        "se": se,
        "max_margin": float(margin.max()),
        "passed": passed,
        "noise_budget": qsum,
    }
    if noise_only:
        if check_times is None:
            tt = times[-1]
            check_times = [0.25 * tt, 0.5 * tt, 0.75 * tt, float(tt)]
        gaps = []
        eq_pass = True
        for t in check_times:
            k = ens.node_index(float(t))
            sq_se = float(sq[:, k].std(ddof=1)) / np.sqrt(ens.n_paths)
            gap = float(sq[:, k].mean() - (np.dot(x0, x0) + times[k] * qsum))
            gaps.append(gap)
            if abs(gap) > 3.0 * sq_se + 1e-12:
                eq_pass = False
        report["noise_only_gaps"] = gaps
        report["noise_only_pass"] = eq_pass
        report["passed"] = bool(passed and eq_pass)
    return report


def snse_assumption_bundle(cfg: SNSEConfig, seed: int = 20240211) -> dict:
    """Model, spaces, gauge, and constants wired for the checkers.

    The constants are derived from the structure of the coefficients:
    with N(y) = nu |y|_X^2 and C_B the Frobenius-over-weight bound on
    the convective form,

        <b, y>        = -N(y)                   (coercivity, lam1 free)
        |b|_Xs^2     <= 2 nu N(y) + 2 C_B^2 (1 + |y|^4)
        |sigma|_HS^2  = sum 2 q_k
        LV            = sum 2 q_k - Theta,  Theta = 2 nu |y|_X^2
        grad V A grad V <= 4 max(q) V^2.
    """
    model = build_snse_coefficients(cfg)
    triple = snse_triple(cfg)
    gauge = snse_gauge(cfg)
    tensor = interaction_tensor(cfg)
    lam = cfg.coordinate_weights()
    cb2 = float(np.sum(np.einsum("ijl,ijl->i", tensor, tensor) / lam))
    qsum = float(np.sum(2.0 * cfg.coordinate_amplitudes()))
    qmax = float(np.max(cfg.coordinate_amplitudes()))
    params = AssumptionParams(
        lam1=1.0,
        lam2=2.0 * cfg.viscosity,
        lam3=2.0 * cb2 + 1.0,
        lam4=max(qsum, 1e-12),
        gamma=2.0,
        gamma_prime=4.0,
    )
    lyap = shifted_square_lyapunov(
        theta_factor=2.0 * cfg.viscosity,
        weights=lam,
        c0=max(qsum, 1e-12),
        m0=max(4.0 * qmax, 1e-12),
    )
    n = cfg.dim
    plan = SamplePlan(seed=seed, n_samples=48,
                      truncations=(max(2, n // 4), max(4, n // 2), n),
                      scale=1.0)
    return {
        "model": model,
        "triple": triple,
        "gauge": gauge,
        "params": params,
        "lyapunov": lyap,
        "plan": plan,
        "convection_bound_sq": cb2,
        "noise_budget": qsum,
    }
