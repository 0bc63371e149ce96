"""Weighted sequence spaces, finite projections, and test functions.

The state space is a nested triple of sequence spaces determined by a
weight vector (lam_1, ..., lam_nmax):

    norm_X(z)^2  = sum_i lam_i * z_i^2      (smooth side)
    norm_H(z)^2  = sum_i z_i^2              (pivot)
    norm_Xs(z)^2 = sum_i z_i^2 / lam_i      (dual side)

Vectors are plain numpy arrays holding the first n coordinates; the
projection onto the first n coordinates is truncation.  Test functions
are "finitely based": they read only the first ``base_dim`` coordinates
and carry explicit gradient and Hessian evaluators so that the diffusion
generator

    (L f)(y) = sum_ij a_ij d_i d_j f(y) + sum_i b_i d_i f(y)

can be formed exactly from supplied coefficient values.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, SingularWeightError

__all__ = [
    "SpaceTriple",
    "FinitelyBasedFunction",
    "DissipationGauge",
    "apply_generator",
    "generator_profile",
    "separating_family",
    "coordinate_bump",
    "bump_profile",
    "bump_profile_d1",
    "bump_profile_d2",
    "quadratic_function",
    "coordinate_function",
    "constant_function",
    "product_function",
    "h_power_gauge",
    "weighted_square_gauge",
]


# ---------------------------------------------------------------------------
# space triple
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpaceTriple:
    """Weight data for a nested triple of coordinate spaces.

    Parameters
    ----------
    weights : array of nonnegative floats, one per retained coordinate.
        The number of retained coordinates ``n_max`` is ``len(weights)``.
    monotone_from : index from which the weights must be non-decreasing.
        The divergence of the weights is certified only through this
        finite monotone-tail check; it is a declared, not verified,
        property of the infinite sequence.
    """

    weights: np.ndarray
    monotone_from: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size < 1:
            raise DimensionError("weights must be a nonempty 1-D array")
        if not np.all(np.isfinite(w)):
            raise ValueError("weights must be finite")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        k = self.monotone_from
        if not 0 <= k < w.size:
            raise ValueError("monotone_from out of range")
        tail = w[k:]
        if tail.size > 1 and np.any(np.diff(tail) < 0):
            raise ValueError(
                f"weights must be non-decreasing from index {k} on"
            )
        object.__setattr__(self, "weights", w)

    @property
    def n_max(self) -> int:
        return int(self.weights.size)

    @classmethod
    def linear(cls, n_max: int) -> "SpaceTriple":
        """Triple with weights 1, 2, ..., n_max."""
        return cls(np.arange(1, n_max + 1, dtype=float))

    def project(self, z, n: int) -> np.ndarray:
        """Truncate ``z`` to its first ``n`` coordinates.

        Requires ``1 <= n <= n_max`` and ``len(z) >= n``.  Projection is
        a contraction for all three norms and idempotent.
        """
        if not 1 <= n <= self.n_max:
            raise DimensionError(f"n = {n} outside [1, {self.n_max}]")
        z = np.asarray(z, dtype=float)
        if z.ndim != 1 or z.size < n:
            raise DimensionError(f"vector of length {z.size} cannot project to {n}")
        return z[:n].copy()

    def norm(self, z, space: str = "H") -> float:
        """Norm of a coordinate vector in "X", "H", or "X*".

        The dual norm raises :class:`SingularWeightError` when a zero
        weight meets a nonzero coordinate; zero-weight coordinates with
        zero value contribute nothing.
        """
        z = np.asarray(z, dtype=float)
        if z.ndim != 1 or z.size > self.n_max:
            raise DimensionError(
                f"vector of length {z.size} does not fit below n_max = {self.n_max}"
            )
        w = self.weights[: z.size]
        # fsum keeps the projection contraction an exact float inequality:
        # dropping nonnegative tail terms cannot raise a correctly rounded sum.
        if space == "H":
            return math.sqrt(math.fsum(z * z))
        if space == "X":
            return math.sqrt(math.fsum(w * z * z))
        if space in ("X*", "Xstar"):
            sing = (w == 0.0) & (z != 0.0)
            if np.any(sing):
                i = int(np.argmax(sing))
                raise SingularWeightError(
                    f"coordinate {i} has zero weight but nonzero value"
                )
            safe = np.where(w > 0.0, w, 1.0)
            return math.sqrt(math.fsum(np.where(w > 0.0, z * z / safe, 0.0)))
        raise ValueError(f"unknown space {space!r}")

    @staticmethod
    def pair(z, v) -> float:
        """Duality pairing; in coordinates it is the plain dot product."""
        z = np.asarray(z, dtype=float)
        v = np.asarray(v, dtype=float)
        if z.shape != v.shape:
            raise DimensionError("pairing requires equal-length vectors")
        return float(np.dot(z, v))

    def to_json(self) -> str:
        return json.dumps(
            {"lambda": [float(x) for x in self.weights], "n_max": self.n_max},
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, text: str) -> "SpaceTriple":
        data = json.loads(text)
        w = np.asarray(data["lambda"], dtype=float)
        if int(data["n_max"]) != w.size:
            raise ValueError("n_max inconsistent with weight list")
        return cls(w)


# ---------------------------------------------------------------------------
# finitely based test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FinitelyBasedFunction:
    """Function of the first ``base_dim`` coordinates with derivatives.

    ``value``, ``gradient`` and ``hessian`` act on arrays whose last axis
    has length ``base_dim`` and are vectorized over all leading axes:
    value maps (..., d) -> (...), gradient to (..., d), hessian to
    (..., d, d).  ``support_radius`` is the radius of a ball (in the
    base coordinates) outside of which the function vanishes;
    ``math.inf`` means unbounded support.
    """

    base_dim: int
    value: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]
    support_radius: float = math.inf
    name: str = ""

    def __post_init__(self):
        if self.base_dim < 1:
            raise DimensionError("base_dim must be >= 1")

    def _base(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if y.shape[-1] < self.base_dim:
            raise DimensionError(
                f"{self.name or 'function'} needs {self.base_dim} coordinates, "
                f"got {y.shape[-1]}"
            )
        return y[..., : self.base_dim]

    def __call__(self, y):
        return self.value(self._base(y))

    def grad(self, y):
        return self.gradient(self._base(y))

    def hess(self, y):
        return self.hessian(self._base(y))


def apply_generator(f: FinitelyBasedFunction, y, a, b) -> float:
    """Diffusion generator of ``f`` at a single state.

    ``a`` is the n-by-n second-order coefficient matrix and ``b`` the
    length-n drift vector, both already evaluated at the state ``y``;
    only their leading ``f.base_dim`` block enters because ``f`` reads
    only those coordinates.
    """
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = y.size
    if a.shape != (n, n) or b.shape != (n,):
        raise DimensionError(
            f"coefficients of shape {a.shape}, {b.shape} do not match state of length {n}"
        )
    d = f.base_dim
    if d > n:
        raise DimensionError(f"state of length {n} below base_dim {d}")
    u = y[:d]
    second = float(np.sum(a[:d, :d] * f.hessian(u)))
    first = float(np.dot(b[:d], f.gradient(u)))
    return second + first


def generator_profile(f: FinitelyBasedFunction, y, a, b) -> np.ndarray:
    """Vectorized generator: ``y`` (..., n), ``a`` (..., d, d) or (d, d),
    ``b`` (..., d) with d >= f.base_dim. Returns shape (...)."""
    d = f.base_dim
    u = np.asarray(y, dtype=float)[..., :d]
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    second = np.einsum("...ij,...ij->...", a[..., :d, :d], f.hessian(u))
    first = np.einsum("...i,...i->...", b[..., :d], f.gradient(u))
    return second + first


# ---------------------------------------------------------------------------
# bump profile and derived test functions
# ---------------------------------------------------------------------------


def bump_profile(u):
    """Smooth compactly supported profile exp(1/(u^2-1)) on (-1, 1)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    if np.any(m):
        um = u[m]
        out[m] = np.exp(1.0 / (um * um - 1.0))
    return out


def bump_profile_d1(u):
    """First derivative of :func:`bump_profile`."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    if np.any(m):
        um = u[m]
        q = um * um - 1.0
        out[m] = np.exp(1.0 / q) * (-2.0 * um) / (q * q)
    return out


def bump_profile_d2(u):
    """Second derivative of :func:`bump_profile`."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    m = np.abs(u) < 1.0
    if np.any(m):
        um = u[m]
        q = um * um - 1.0
        u2 = um * um
        out[m] = np.exp(1.0 / q) * (
            4.0 * u2 / q**4 - 2.0 / (q * q) + 8.0 * u2 / q**3
        )
    return out


def coordinate_bump(coord: int, center: float, scale: float) -> FinitelyBasedFunction:
    """Bump in a single coordinate: psi((y[coord] - center) / scale).

    ``coord`` is 1-based; the function is finitely based on the first
    ``coord`` coordinates and vanishes unless |y[coord] - center| < scale.
    """
    if coord < 1:
        raise DimensionError("coord is 1-based and must be >= 1")
    if scale <= 0:
        raise ValueError("scale must be positive")
    j = coord - 1
    inv = 1.0 / scale

    def value(u):
        return bump_profile((u[..., j] - center) * inv)

    def gradient(u):
        g = np.zeros_like(u)
        g[..., j] = bump_profile_d1((u[..., j] - center) * inv) * inv
        return g

    def hessian(u):
        h = np.zeros(u.shape + (coord,), dtype=float)
        h[..., j, j] = bump_profile_d2((u[..., j] - center) * inv) * inv * inv
        return h

    return FinitelyBasedFunction(
        base_dim=coord,
        value=value,
        gradient=gradient,
        hessian=hessian,
        support_radius=abs(center) + scale,
        name=f"bump(j={coord},c={center:g},s={scale:g})",
    )


def separating_family(
    d_max: int, per_dim: int, box: float = 4.0
) -> list[FinitelyBasedFunction]:
    """Graded family of single-coordinate bumps on [-box, box].

    For each coordinate j <= d_max the family contains bumps at dyadic
    scales box, box/2, ..., down to roughly 2*box/per_dim, with centers
    spaced one scale apart.  Two distinct point masses inside the box
    whose j-th coordinates differ for some j <= d_max are separated by
    at least one member: the member centered at the first atom's j-th
    coordinate at the finest scale takes its maximum there and a
    strictly smaller value at the second atom.  On the lattice of
    finest-scale centers this separation is exact and is checked
    exhaustively in the test suite for small d_max.
    """
    if d_max < 1 or per_dim < 2:
        raise ValueError("need d_max >= 1 and per_dim >= 2")
    if box <= 0:
        raise ValueError("box must be positive")
    levels = max(1, math.ceil(math.log2(per_dim)))
    fam: list[FinitelyBasedFunction] = []
    for j in range(1, d_max + 1):
        for lev in range(levels):
            scale = box / (2.0**lev)
            k = int(round(2.0 * box / scale))
            centers = [-box + i * scale for i in range(k + 1)]
            for c in centers:
                fam.append(coordinate_bump(j, c, scale))
    return fam


def family_finest_lattice(per_dim: int, box: float = 4.0) -> np.ndarray:
    """Centers of the finest level used by :func:`separating_family`."""
    levels = max(1, math.ceil(math.log2(per_dim)))
    scale = box / (2.0 ** (levels - 1))
    k = int(round(2.0 * box / scale))
    return np.array([-box + i * scale for i in range(k + 1)])


# small analytic test functions, mostly for unit tests and diagnostics


def constant_function(c: float = 1.0) -> FinitelyBasedFunction:
    def value(u):
        return np.full(u.shape[:-1], c, dtype=float)

    def gradient(u):
        return np.zeros_like(u)

    def hessian(u):
        return np.zeros(u.shape + (1,), dtype=float)

    return FinitelyBasedFunction(1, value, gradient, hessian, name=f"const({c:g})")


def coordinate_function(coord: int) -> FinitelyBasedFunction:
    """f(y) = y[coord] (1-based)."""
    j = coord - 1

    def value(u):
        return u[..., j].copy()

    def gradient(u):
        g = np.zeros_like(u)
        g[..., j] = 1.0
        return g

    def hessian(u):
        return np.zeros(u.shape + (coord,), dtype=float)

    return FinitelyBasedFunction(coord, value, gradient, hessian, name=f"y{coord}")


def quadratic_function(coord: int) -> FinitelyBasedFunction:
    """f(y) = y[coord]^2 (1-based)."""
    j = coord - 1

    def value(u):
        return u[..., j] ** 2

    def gradient(u):
        g = np.zeros_like(u)
        g[..., j] = 2.0 * u[..., j]
        return g

    def hessian(u):
        h = np.zeros(u.shape + (coord,), dtype=float)
        h[..., j, j] = 2.0
        return h

    return FinitelyBasedFunction(coord, value, gradient, hessian, name=f"y{coord}^2")


def product_function() -> FinitelyBasedFunction:
    """f(y) = y1 * y2."""

    def value(u):
        return u[..., 0] * u[..., 1]

    def gradient(u):
        g = np.zeros_like(u)
        g[..., 0] = u[..., 1]
        g[..., 1] = u[..., 0]
        return g

    def hessian(u):
        h = np.zeros(u.shape + (2,), dtype=float)
        h[..., 0, 1] = 1.0
        h[..., 1, 0] = 1.0
        return h

    return FinitelyBasedFunction(2, value, gradient, hessian, name="y1*y2")


# ---------------------------------------------------------------------------
# dissipation gauges
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DissipationGauge:
    """Nonnegative gauge measuring the drift's dissipative strength.

    ``fn`` maps (..., n) -> (...) and must satisfy fn(0) = 0, vanish only
    at zero, and be dominated by ``c * norm_H(v)**p`` on every truncation
    with a finite constant.  ``homogeneity`` is the order rho in the
    scaling bound fn(c v) <= c**rho * fn(v) for c >= 0.  Compactness of
    sublevel sets is part of the declared class but is not certified at
    runtime; the sampling checker records it as declared.
    """

    p: float
    homogeneity: float
    fn: Callable[[np.ndarray], np.ndarray]
    name: str = ""

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("p must be >= 2")
        if self.homogeneity < 1:
            raise ValueError("homogeneity must be >= 1")

    def __call__(self, v):
        return self.fn(np.asarray(v, dtype=float))


def h_power_gauge(p: float = 2.0) -> DissipationGauge:
    """Gauge norm_H(v)**p."""

    def fn(v):
        return np.sum(v * v, axis=-1) ** (p / 2.0)

    return DissipationGauge(p=max(p, 2.0), homogeneity=p, fn=fn, name=f"|v|_H^{p:g}")


def weighted_square_gauge(triple: SpaceTriple, factor: float = 1.0) -> DissipationGauge:
    """Gauge factor * norm_X(v)^2 built from the triple's weights."""

    w = triple.weights

    def fn(v):
        k = v.shape[-1]
        return factor * np.sum(w[:k] * v * v, axis=-1)

    return DissipationGauge(p=2.0, homogeneity=2.0, fn=fn, name=f"{factor:g}*|v|_X^2")
