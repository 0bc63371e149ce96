"""Probability measure containers and time-indexed marginal flows.

Two concrete measure representations are used throughout: weighted
point clouds (:class:`EmpiricalMeasure`) and nonnegative densities on
axis-aligned uniform grids in one or two dimensions
(:class:`GridDensity`).  Both expose ``integrate`` for finitely based
test functions, which is all downstream verification needs.  A
:class:`MarginalFlow` is a list of measures on a shared time grid.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.integrate import trapezoid

from .errors import DimensionError, GridMismatchError, TimeWindowError

__all__ = ["EmpiricalMeasure", "GridDensity", "MarginalFlow"]

_MASS_TOL = 1e-6
_WEIGHT_TOL = 1e-12


class EmpiricalMeasure:
    """Weighted point cloud sum_i w_i * delta(points_i).

    ``points`` has shape (M, n) and ``weights`` shape (M,), nonnegative
    and summing to one within 1e-12.  With ``validate=False`` the
    (finite, normalized) invariants are trusted, which lets flows built
    from large path arrays share views without re-scanning them.
    """

    __slots__ = ("points", "weights")

    def __init__(self, points, weights=None, validate: bool = True):
        points = np.asarray(points, dtype=float)
        if points.ndim != 2:
            raise DimensionError("points must have shape (M, n)")
        m = points.shape[0]
        if weights is None:
            weights = np.full(m, 1.0 / m)
        else:
            weights = np.asarray(weights, dtype=float)
        if validate:
            if m < 1:
                raise DimensionError("need at least one point")
            if weights.shape != (m,):
                raise DimensionError("weights must have shape (M,)")
            if not np.all(np.isfinite(points)):
                raise ValueError("points must be finite")
            if np.any(weights < 0):
                raise ValueError("weights must be nonnegative")
            if abs(float(weights.sum()) - 1.0) > _WEIGHT_TOL:
                raise ValueError("weights must sum to 1 within 1e-12")
        self.points = points
        self.weights = weights

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def integrate(self, f) -> float:
        """Integral of ``f`` (finitely based or plain callable on points)."""
        vals = np.asarray(f(self.points), dtype=float)
        return float(np.dot(self.weights, vals))

    def mean(self) -> np.ndarray:
        return self.weights @ self.points

    @classmethod
    def point_mass(cls, x) -> "EmpiricalMeasure":
        x = np.asarray(x, dtype=float).reshape(1, -1)
        return cls(x, np.array([1.0]))


class GridDensity:
    """Nonnegative density on a uniform cell-centered grid, dim <= 2.

    ``axes`` holds the cell-center coordinates per axis; ``density`` has
    matching shape.  Total mass under the trapezoid rule must be 1
    within 1e-6.  Integration of test functions uses the trapezoid rule
    on the cell centers.
    """

    __slots__ = ("axes", "density", "steps")

    def __init__(self, axes, density, validate: bool = True):
        axes = tuple(np.asarray(ax, dtype=float) for ax in axes)
        density = np.asarray(density, dtype=float)
        if len(axes) not in (1, 2):
            raise DimensionError("grid densities support 1 or 2 dimensions")
        if density.shape != tuple(ax.size for ax in axes):
            raise DimensionError("density shape does not match axes")
        steps = []
        for ax in axes:
            if ax.size < 4:
                raise DimensionError("each axis needs at least 4 cells")
            d = np.diff(ax)
            if not np.allclose(d, d[0], rtol=1e-9, atol=0.0):
                raise ValueError("axes must be uniformly spaced")
            steps.append(float(d[0]))
        if validate:
            if not np.all(np.isfinite(density)):
                raise ValueError("density must be finite")
            if np.any(density < 0):
                raise ValueError("density must be nonnegative")
            mass = _trapz_nd(density, steps)
            if abs(mass - 1.0) > _MASS_TOL:
                raise ValueError(f"trapezoid mass {mass} differs from 1 beyond 1e-6")
        self.axes = axes
        self.density = density
        self.steps = tuple(steps)

    @property
    def dim(self) -> int:
        return len(self.axes)

    def mass(self) -> float:
        return _trapz_nd(self.density, self.steps)

    def cell_sum_mass(self) -> float:
        """Mass under the midpoint (finite-volume) rule, conserved exactly."""
        vol = 1.0
        for h in self.steps:
            vol *= h
        return float(self.density.sum()) * vol

    def mesh_points(self) -> np.ndarray:
        """Cell centers flattened to shape (cells, dim)."""
        if self.dim == 1:
            return self.axes[0][:, None]
        xx, yy = np.meshgrid(self.axes[0], self.axes[1], indexing="ij")
        return np.stack([xx.ravel(), yy.ravel()], axis=1)

    def integrate(self, f) -> float:
        vals = np.asarray(f(self.mesh_points()), dtype=float)
        return _trapz_nd(vals.reshape(self.density.shape) * self.density, self.steps)

    def mean(self) -> np.ndarray:
        pts = self.mesh_points()
        out = np.empty(self.dim)
        for j in range(self.dim):
            vals = pts[:, j].reshape(self.density.shape) * self.density
            out[j] = _trapz_nd(vals, self.steps)
        return out

    def cdf_1d(self):
        """Right-face cumulative mass on a 1-D grid (faces, values)."""
        if self.dim != 1:
            raise DimensionError("cdf_1d needs a 1-D density")
        h = self.steps[0]
        faces = np.concatenate(
            [[self.axes[0][0] - 0.5 * h], self.axes[0] + 0.5 * h]
        )
        cum = np.concatenate([[0.0], np.cumsum(self.density) * h])
        return faces, cum


def _trapz_nd(values: np.ndarray, steps) -> float:
    out = values
    for ax in range(len(steps) - 1, -1, -1):
        out = trapezoid(out, dx=steps[ax], axis=ax)
    return float(out)


class MarginalFlow:
    """Measures indexed by a shared uniform time grid.

    ``kind`` is "grid" or "empirical".  Empirical flows built from path
    ensembles share the underlying path storage; ``measure_at`` returns
    lightweight views.
    """

    def __init__(self, times, measures: Sequence, kind: str, dim: int):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1 or times.size != len(measures):
            raise DimensionError("one measure per time node required")
        if times.size < 2 or np.any(np.diff(times) <= 0):
            raise ValueError("times must be strictly increasing, length >= 2")
        if kind not in ("grid", "empirical"):
            raise ValueError("kind must be 'grid' or 'empirical'")
        self.times = times
        self.measures = list(measures)
        self.kind = kind
        self.dim = int(dim)

    def __len__(self) -> int:
        return self.times.size

    def node_index(self, t: float, atol: float = 1e-9) -> int:
        """Index of the grid node equal to ``t`` (no interpolation)."""
        i = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[i] - t) > atol:
            raise GridMismatchError(f"t = {t} is not a node of this flow")
        return i

    def nearest_index(self, t: float, slack: float = 1e-9) -> int:
        """Nearest node for lookups; rejects t outside the flow range."""
        if t < self.times[0] - slack or t > self.times[-1] + slack:
            raise TimeWindowError(
                f"t = {t} outside flow range [{self.times[0]}, {self.times[-1]}]"
            )
        return int(np.argmin(np.abs(self.times - t)))

    def measure_at(self, t: float):
        return self.measures[self.node_index(t)]

    def integrate_series(self, f) -> np.ndarray:
        """Integrals of ``f`` against every node measure."""
        return np.array([m.integrate(f) for m in self.measures])

    @classmethod
    def constant(cls, times, measure, dim: int, kind: str = "empirical"):
        """Flow that repeats one measure at every node."""
        times = np.asarray(times, dtype=float)
        return cls(times, [measure] * times.size, kind, dim)

    def share_grid(self, other: "MarginalFlow", atol: float = 1e-9) -> None:
        """Raise unless both flows live on the same time grid and dim."""
        if self.dim != other.dim:
            raise GridMismatchError(
                f"flows on different truncations: {self.dim} vs {other.dim}"
            )
        if self.times.size != other.times.size or not np.allclose(
            self.times, other.times, rtol=0.0, atol=atol
        ):
            raise GridMismatchError("flows on different time grids")
