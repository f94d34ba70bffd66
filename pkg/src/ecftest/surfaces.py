"""Pointwise between/within dispersion surfaces and the quasi-F surface.

``SSB(s, t)`` measures how far the group covariance surfaces are from the
pooled one; ``SSE(s, t)`` measures the spread of the subject-level products
``v(s) v(t)`` around their group covariance.  Their ratio, scaled like a
one-way ANOVA F ratio, is globalised by integration (``T_n``) or by taking
the maximum over grid cells (``F_max``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import FunctionalDataset, Grid, group_cov, pooled_cov, subject_effects
from .errors import DegenerateDataError

__all__ = [
    "DEFAULT_EPS",
    "FSurface",
    "GlobalStats",
    "ssb_surface",
    "sse_surface",
    "quasi_f_surface",
    "f_ratio",
    "globalize",
    "integrate2",
]

DEFAULT_EPS = 1e-12

# rows of products materialised at once in sse_surface
_SSE_CHUNK = 256


@dataclass(frozen=True)
class FSurface:
    values: np.ndarray
    eps_hits: int = 0


@dataclass(frozen=True)
class GlobalStats:
    t_n: float
    f_max: float
    argmax: tuple


def ssb_surface(dataset: FunctionalDataset) -> np.ndarray:
    pooled = pooled_cov(dataset)
    out = np.zeros_like(pooled)
    for g in dataset.groups:
        out += (g.n - 1) * (group_cov(g) - pooled) ** 2
    return out


def sse_surface(dataset: FunctionalDataset) -> np.ndarray:
    J = dataset.grid.J
    out = np.zeros((J, J))
    for g in dataset.groups:
        v = subject_effects(g)
        gam = group_cov(g)
        for start in range(0, g.n, _SSE_CHUNK):
            block = v[start:start + _SSE_CHUNK]
            prods = block[:, :, None] * block[:, None, :]
            out += ((prods - gam) ** 2).sum(axis=0)
    return out


def f_ratio(ssb, sse, k: int, n: int, eps: float = DEFAULT_EPS):
    """Cellwise ``(SSB/(k-1)) / (SSE/(n-k))`` with a relative SSE floor.

    Works on a single ``(J, J)`` surface or a stack ``(B, J, J)``; the floor is
    ``eps`` times the largest SSE cell of each surface.  Returns the ratio and
    the number of floored cells per surface.
    """
    sse = np.asarray(sse)
    top = sse.max(axis=(-2, -1), keepdims=True)
    if np.any(top <= 0):
        raise DegenerateDataError(
            "SSE surface is identically zero: every subject effect vanishes"
        )
    floor = eps * top
    hits = (sse < floor).sum(axis=(-2, -1))
    denom = np.maximum(sse, floor)
    return (ssb / (k - 1)) / (denom / (n - k)), hits


def quasi_f_surface(dataset: FunctionalDataset, eps: float = DEFAULT_EPS) -> FSurface:
    ratio, hits = f_ratio(ssb_surface(dataset), sse_surface(dataset), dataset.k, dataset.n, eps)
    ratio = (ratio + ratio.T) / 2
    return FSurface(ratio, int(hits))


def integrate2(surface, grid: Grid):
    """Tensor-product quadrature of a ``(..., J, J)`` surface over the grid square."""
    w = grid.weights
    return np.einsum("...jl,j,l->...", surface, w, w)


def globalize(surface, grid: Grid) -> GlobalStats:
    """Integrated value and maximum of a surface.

    Ties in the maximum resolve to the smallest row, then smallest column.
    """
    values = surface.values if isinstance(surface, FSurface) else np.asarray(surface)
    if values.shape != (grid.J, grid.J):
        raise ValueError(f"surface shape {values.shape} does not match grid J={grid.J}")
    flat = int(np.argmax(values))
    return GlobalStats(
        t_n=float(integrate2(values, grid)),
        f_max=float(values.flat[flat]),
        argmax=divmod(flat, grid.J),
    )
