"""Shipped coefficient models used by tests, fixtures, and the CLI.

Every factory returns a fully wired :class:`CoefficientModel` (or a
:class:`MeasureDependentCoefficients` for the measure-coupled ones) with
batch evaluators, so simulations stay vectorized.  The registry maps
config-file names to factories; all parameters are plain keyword
arguments so configs can set them directly.
"""

from __future__ import annotations

import numpy as np

from .coefficients import CoefficientModel
from .mckean import MeasureDependentCoefficients

__all__ = [
    "ou_model",
    "shifted_ou_model",
    "brownian_model",
    "zero_model",
    "pure_drift_model",
    "diagonal_ou_model",
    "cascade_model",
    "cubic_model",
    "mean_field_ou_model",
    "variance_noise_model",
    "REGISTRY",
    "get_model",
]


def ou_model(n: int = 1, rate: float = 1.0, noise: float = np.sqrt(2.0),
             horizon: float = 1.0) -> CoefficientModel:
    """dX = -rate * X dt + noise dW, coordinatewise."""
    sig = noise * np.eye(n)

    return CoefficientModel(
        b_eval=lambda t, y: -rate * np.asarray(y, dtype=float),
        sigma_eval=lambda t, y: sig,
        noise_dim=n,
        horizon=horizon,
        name=f"ou{n}d",
        b_batch=lambda t, ys: -rate * np.asarray(ys, dtype=float),
        additive_noise=True,
    )


def shifted_ou_model(n: int = 1, rate: float = 1.0, shift: float = 0.5,
                     noise: float = np.sqrt(2.0),
                     horizon: float = 1.0) -> CoefficientModel:
    """Drift-corrupted control: dX = (-rate * X + shift) dt + noise dW."""
    sig = noise * np.eye(n)

    return CoefficientModel(
        b_eval=lambda t, y: -rate * np.asarray(y, dtype=float) + shift,
        sigma_eval=lambda t, y: sig,
        noise_dim=n,
        horizon=horizon,
        name=f"shifted-ou{n}d",
        b_batch=lambda t, ys: -rate * np.asarray(ys, dtype=float) + shift,
        additive_noise=True,
    )


def brownian_model(n: int = 1, noise: float = 1.0,
                   horizon: float = 1.0) -> CoefficientModel:
    """Driftless diffusion dX = noise dW."""
    sig = noise * np.eye(n)
    return CoefficientModel(
        b_eval=lambda t, y: np.zeros_like(np.asarray(y, dtype=float)),
        sigma_eval=lambda t, y: sig,
        noise_dim=n,
        horizon=horizon,
        name=f"brownian{n}d",
        b_batch=lambda t, ys: np.zeros_like(np.asarray(ys, dtype=float)),
        additive_noise=True,
    )


def zero_model(n: int = 1, horizon: float = 1.0) -> CoefficientModel:
    """Frozen dynamics: b = 0, sigma = 0."""
    sig = np.zeros((n, n))
    return CoefficientModel(
        b_eval=lambda t, y: np.zeros_like(np.asarray(y, dtype=float)),
        sigma_eval=lambda t, y: sig,
        noise_dim=n,
        horizon=horizon,
        name=f"zero{n}d",
        b_batch=lambda t, ys: np.zeros_like(np.asarray(ys, dtype=float)),
        additive_noise=True,
    )


def pure_drift_model(n: int = 1, rate: float = 1.0,
                     horizon: float = 1.0) -> CoefficientModel:
    """Deterministic contraction dX = -rate * X dt (no noise)."""
    sig = np.zeros((n, n))
    return CoefficientModel(
        b_eval=lambda t, y: -rate * np.asarray(y, dtype=float),
        sigma_eval=lambda t, y: sig,
        noise_dim=n,
        horizon=horizon,
        name=f"pure-drift{n}d",
        b_batch=lambda t, ys: -rate * np.asarray(ys, dtype=float),
        additive_noise=True,
    )


def diagonal_ou_model(n: int, rates=None, noise: float = 1.0,
                      horizon: float = 1.0) -> CoefficientModel:
    """Decoupled modes: dX_i = -rates[i] X_i dt + noise dW_i.

    Default rates are 1, 2, ..., n.  Because the coordinates never
    interact, the law of the first d coordinates is the same at every
    truncation level n >= d.
    """
    if rates is None:
        rates = np.arange(1, n + 1, dtype=float)
    rates = np.asarray(rates, dtype=float)[:n]
    sig = noise * np.eye(n)
    return CoefficientModel(
        b_eval=lambda t, y: -rates * np.asarray(y, dtype=float),
        sigma_eval=lambda t, y: sig,
        noise_dim=n,
        horizon=horizon,
        name=f"diagonal-ou{n}d",
        b_batch=lambda t, ys: -rates * np.asarray(ys, dtype=float),
        additive_noise=True,
    )


def cascade_model(n: int, coupling: float = 2.0, noise: float = 1.0,
                  horizon: float = 1.0) -> CoefficientModel:
    """One-way quadratic coupling with 1/j^2 decay into coordinate 1.

    dX_1 = (-X_1 + coupling * sum_{j>=2} X_j^2 / j^2) dt + noise dW_1,
    dX_j = -X_j dt + noise dW_j for j >= 2.  Adding coordinates shifts
    the first marginal by an amount that shrinks like the tail of
    sum 1/j^2, which makes truncation level visible to the family
    pseudometric.
    """
    decay = 1.0 / np.arange(1, n + 1, dtype=float) ** 2
    decay[0] = 0.0
    sig = noise * np.eye(n)

    def b_batch(t, ys):
        ys = np.asarray(ys, dtype=float)
        out = -ys.copy()
        out[..., 0] += coupling * np.sum(ys * ys * decay[: ys.shape[-1]],
                                         axis=-1)
        return out

    return CoefficientModel(
        b_eval=lambda t, y: b_batch(t, np.asarray(y, dtype=float)[None, :])[0],
        sigma_eval=lambda t, y: sig,
        noise_dim=n,
        horizon=horizon,
        name=f"cascade{n}d",
        b_batch=b_batch,
        additive_noise=True,
    )


def cubic_model(n: int = 1, noise: float = 0.1,
                horizon: float = 1.0) -> CoefficientModel:
    """Super-linear blow-up fixture: dX = X^3 dt + noise dW."""
    sig = noise * np.eye(n)
    return CoefficientModel(
        b_eval=lambda t, y: np.asarray(y, dtype=float) ** 3,
        sigma_eval=lambda t, y: sig,
        noise_dim=n,
        horizon=horizon,
        name=f"cubic{n}d",
        b_batch=lambda t, ys: np.asarray(ys, dtype=float) ** 3,
        additive_noise=True,
    )


def mean_field_ou_model(a: float = 0.5, noise: float = 1.0,
                        horizon: float = 1.0) -> MeasureDependentCoefficients:
    """dX = -(X - a * E X) dt + noise dW in one dimension.

    The mean m(t) of any solution satisfies m' = (a - 1) m, so the
    closed-form mean curve is m(0) * exp((a - 1) t).
    """
    sig = noise * np.eye(1)

    def b_batch(t, ys, mu):
        m = mu.mean()[0]
        return -np.asarray(ys, dtype=float) + a * m

    return MeasureDependentCoefficients(
        b_eval=lambda t, y, mu: b_batch(t, np.asarray(y)[None, :], mu)[0],
        sigma_eval=lambda t, y, mu: sig,
        noise_dim=1,
        horizon=horizon,
        name=f"mean-field-ou[a={a:g}]",
        b_batch=b_batch,
        additive_noise=True,
    )


def variance_noise_model(rate: float = 1.0, gain: float = 1.0,
                         horizon: float = 1.0) -> MeasureDependentCoefficients:
    """dX = -rate X dt + sqrt(1 + gain * Var X) dW in one dimension.

    The dispersion reads the first-coordinate variance of the measure
    argument, which exercises freezing of state-independent but
    measure-dependent noise.
    """

    def var1(mu):
        m = mu.mean()[0]
        second = mu.integrate(lambda pts: pts[:, 0] ** 2)
        return max(second - m * m, 0.0)

    def sigma_eval(t, y, mu):
        return np.sqrt(1.0 + gain * var1(mu)) * np.eye(1)

    return MeasureDependentCoefficients(
        b_eval=lambda t, y, mu: -rate * np.asarray(y, dtype=float),
        sigma_eval=sigma_eval,
        noise_dim=1,
        horizon=horizon,
        name=f"variance-noise[gain={gain:g}]",
        b_batch=lambda t, ys, mu: -rate * np.asarray(ys, dtype=float),
        additive_noise=True,
    )


REGISTRY = {
    "ou": ou_model,
    "shifted-ou": shifted_ou_model,
    "brownian": brownian_model,
    "zero": zero_model,
    "pure-drift": pure_drift_model,
    "diagonal-ou": diagonal_ou_model,
    "cascade": cascade_model,
    "cubic": cubic_model,
    "mean-field-ou": mean_field_ou_model,
    "variance-noise": variance_noise_model,
}


def get_model(name: str, **params):
    """Instantiate a registry model by name with keyword parameters."""
    try:
        factory = REGISTRY[name]
    except KeyError:
        raise KeyError(
            f"unknown model {name!r}; known: {sorted(REGISTRY)}"
        ) from None
    return factory(**params)
