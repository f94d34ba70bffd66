"""Grids, functional datasets and the covariance estimator chain.

Curves are stored as dense ``float64`` matrices, one row per subject and one
column per grid point.  All functions here are pure.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ValidationError

__all__ = [
    "Grid",
    "FunctionalGroup",
    "FunctionalDataset",
    "trapezoid_weights",
    "group_mean",
    "group_cov",
    "subject_effects",
    "pooled_cov",
    "pooled_effects",
]


def trapezoid_weights(points: np.ndarray) -> np.ndarray:
    """Composite trapezoidal weights for (possibly non-uniform) ordered points."""
    points = np.asarray(points, dtype=float)
    h = np.diff(points)
    w = np.zeros_like(points)
    w[:-1] += h / 2
    w[1:] += h / 2
    return w


@dataclass(frozen=True)
class Grid:
    """Ordered evaluation points on ``[a, b]`` with quadrature weights.

    Use :meth:`uniform` or :meth:`from_points` rather than the raw
    constructor; both fill in trapezoidal weights.
    """

    a: float
    b: float
    points: np.ndarray
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        points = np.asarray(self.points, dtype=float)
        weights = np.asarray(self.weights, dtype=float)
        if points.ndim != 1 or points.size < 2:
            raise ValidationError("a grid needs at least 2 points")
        if not self.a < self.b:
            raise ValidationError(f"need a < b, got a={self.a}, b={self.b}")
        if np.any(np.diff(points) <= 0):
            raise ValidationError("grid points must be strictly increasing")
        if points[0] < self.a or points[-1] > self.b:
            raise ValidationError("grid points must lie inside [a, b]")
        if weights.shape != points.shape or np.any(weights < 0):
            raise ValidationError("weights must be nonnegative, one per point")
        if abs(weights.sum() - (self.b - self.a)) > 1e-12 * (self.b - self.a):
            raise ValidationError("weights must sum to b - a")
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, J: int, a: float = 0.0, b: float = 1.0) -> "Grid":
        """``J`` equispaced points ``a + (b - a)(j - 1)/(J - 1)``."""
        if J < 2:
            raise ValidationError("J must be at least 2")
        points = np.linspace(a, b, J)
        return cls(a, b, points, trapezoid_weights(points))

    @classmethod
    def from_points(cls, points: Sequence[float]) -> "Grid":
        """Grid spanning exactly the first to last point."""
        points = np.asarray(points, dtype=float)
        if points.ndim != 1 or points.size < 2:
            raise ValidationError("a grid needs at least 2 points")
        return cls(float(points[0]), float(points[-1]), points, trapezoid_weights(points))

    @property
    def J(self) -> int:
        return self.points.size

    @property
    def length(self) -> float:
        return self.b - self.a

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.a == other.a
            and self.b == other.b
            and np.array_equal(self.points, other.points)
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self):
        return hash((self.a, self.b, self.points.tobytes()))


@dataclass(frozen=True)
class FunctionalGroup:
    """One sample of ``n_i`` curves observed on a common grid."""

    curves: np.ndarray
    label: str = ""

    def __post_init__(self):
        curves = np.array(self.curves, dtype=float)
        if curves.ndim != 2:
            raise ValidationError(f"group {self.label!r}: curves must be a 2-D array")
        if curves.shape[0] < 2:
            raise ValidationError(
                f"group {self.label!r}: need at least 2 curves, got {curves.shape[0]}"
            )
        if not np.all(np.isfinite(curves)):
            raise ValidationError(f"group {self.label!r}: curves contain non-finite values")
        curves.setflags(write=False)
        object.__setattr__(self, "curves", curves)

    @property
    def n(self) -> int:
        return self.curves.shape[0]

    @property
    def J(self) -> int:
        return self.curves.shape[1]


@dataclass(frozen=True)
class FunctionalDataset:
    """``k >= 2`` functional groups sharing one grid."""

    grid: Grid
    groups: tuple

    def __post_init__(self):
        groups = tuple(self.groups)
        if len(groups) < 2:
            raise ValidationError(f"need at least 2 groups, got {len(groups)}")
        for g in groups:
            if g.J != self.grid.J:
                raise ValidationError(
                    f"group {g.label!r} has {g.J} columns but the grid has {self.grid.J} points"
                )
        object.__setattr__(self, "groups", groups)
        if self.n - self.k < 1:
            raise ValidationError("need n - k >= 1")

    @classmethod
    def from_arrays(cls, arrays, grid: Grid | None = None, labels=None) -> "FunctionalDataset":
        arrays = [np.asarray(a, dtype=float) for a in arrays]
        if grid is None:
            grid = Grid.uniform(arrays[0].shape[1])
        if labels is None:
            labels = [f"group{i + 1}" for i in range(len(arrays))]
        return cls(grid, tuple(FunctionalGroup(a, str(lab)) for a, lab in zip(arrays, labels)))

    @property
    def k(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple:
        return tuple(g.n for g in self.groups)

    @property
    def n(self) -> int:
        return sum(self.sizes)

    def map_curves(self, fn) -> "FunctionalDataset":
        """New dataset with ``fn`` applied to every group's curve matrix."""
        return FunctionalDataset(
            self.grid, tuple(FunctionalGroup(fn(g.curves), g.label) for g in self.groups)
        )

    def subset(self, indices: Sequence[int]) -> "FunctionalDataset":
        return FunctionalDataset(self.grid, tuple(self.groups[i] for i in indices))


def group_mean(group: FunctionalGroup) -> np.ndarray:
    return group.curves.mean(axis=0)


def subject_effects(group: FunctionalGroup) -> np.ndarray:
    """Curves minus the group mean curve; columns sum to zero."""
    return group.curves - group_mean(group)


def group_cov(group: FunctionalGroup) -> np.ndarray:
    """Unbiased sample covariance surface (divisor ``n_i - 1``)."""
    if group.n < 2:
        raise ValidationError("group_cov needs at least 2 curves")
    v = subject_effects(group)
    g = v.T @ v / (group.n - 1)
    return (g + g.T) / 2


def pooled_cov(dataset: FunctionalDataset) -> np.ndarray:
    """Pooled covariance ``sum (n_i - 1) gamma_i / (n - k)``."""
    n, k = dataset.n, dataset.k
    if n - k < 1:
        raise ValidationError("pooled_cov needs n > k")
    total = sum((g.n - 1) * group_cov(g) for g in dataset.groups)
    return total / (n - k)


def pooled_effects(dataset: FunctionalDataset) -> np.ndarray:
    """All groups' subject effects stacked in group order, shape ``(n, J)``."""
    return np.vstack([subject_effects(g) for g in dataset.groups])
