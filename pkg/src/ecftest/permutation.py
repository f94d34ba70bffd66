"""Random-permutation calibration of the quasi-F and raw-SSB statistics.

The pooled subject-effect curves of all groups are shuffled and cut back into
groups of the original sizes.  Permuted group covariances are formed from raw
products of the permuted effects with divisor ``n_i - 1`` and *no*
re-centering, so the identity permutation reproduces the observed statistics
exactly.  Permuted groups then carry ``n_i`` rather than ``n_i - 1`` degrees of
freedom, which shrinks the permutation null of the quasi-F statistics by
roughly a factor ``1 - 1/n_i``; this is visible when the null is concentrated
(slowly decaying variance components).  ``recenter=True`` subtracts each
permuted group's mean first and removes that bias.

Permutation tables come from NumPy's ``PCG64`` generator (128-bit state)
seeded with the plan seed; each table is an independent in-place
Fisher-Yates shuffle of ``0..n-1`` (``Generator.permuted`` along rows), drawn
sequentially.  Tables are generated up front, so statistics are identical for
any number of workers.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import FunctionalDataset, Grid, pooled_effects
from .errors import ValidationError
from .report import TestReport, grid_summary
from .surfaces import DEFAULT_EPS, f_ratio, globalize, integrate2, quasi_f_surface, ssb_surface

__all__ = [
    "STATISTICS",
    "TEST_NAMES",
    "PermutationPlan",
    "NullSample",
    "make_plan",
    "permuted_statistics",
    "permuted_batch",
    "observed_statistics",
    "perm_p_value",
    "perm_critical_value",
    "perm_test",
    "perm_tests",
]

STATISTICS = ("gpf", "fmax", "l2", "tmax")
TEST_NAMES = {"gpf": "gpf-rp", "fmax": "fmax-rp", "l2": "l2-rp", "tmax": "tmax-rp"}

DEFAULT_B = 500

# upper bound on doubles held per batch of permuted surfaces
_BATCH_BUDGET = 4_000_000


@dataclass(frozen=True)
class PermutationPlan:
    seed: int
    B: int
    group_sizes: tuple
    index_tables: np.ndarray

    @property
    def n(self) -> int:
        return sum(self.group_sizes)


@dataclass(frozen=True)
class NullSample:
    statistic_name: str
    values: np.ndarray
    observed: float

    def to_csv(self) -> str:
        lines = ["statistic"] + [repr(float(v)) for v in self.values]
        return "\n".join(lines) + "\n"


def make_plan(seed: int, B: int, group_sizes: Sequence[int]) -> PermutationPlan:
    group_sizes = tuple(int(s) for s in group_sizes)
    n, k = sum(group_sizes), len(group_sizes)
    if B < 1:
        raise ValidationError(f"need B >= 1, got {B}")
    if k < 2 or min(group_sizes) < 2:
        raise ValidationError(f"invalid group sizes {group_sizes}")
    rng = np.random.Generator(np.random.PCG64(seed))
    tables = rng.permuted(np.tile(np.arange(n), (B, 1)), axis=1)
    tables.setflags(write=False)
    return PermutationPlan(int(seed), int(B), group_sizes, tables)


def permuted_batch(pool: np.ndarray, tables: np.ndarray, sizes, weights, eps: float = DEFAULT_EPS,
                   recenter: bool = False):
    """All four permuted statistics for a stack of index tables.

    Returns a dict of arrays of length ``len(tables)`` keyed by
    :data:`STATISTICS`, plus ``"eps_hits"`` (floored cells per replicate).
    """
    tables = np.atleast_2d(tables)
    k, n = len(sizes), sum(sizes)
    V = pool[tables]
    covs = []
    sse = 0.0
    start = 0
    for ni in sizes:
        Vi = V[:, start:start + ni]
        start += ni
        if recenter:
            Vi = Vi - Vi.mean(axis=1, keepdims=True)
        G = Vi.transpose(0, 2, 1) @ Vi / (ni - 1)
        sq = Vi * Vi
        # sum_j (v v' - G)^2 expanded with sum_j v v' = (n_i - 1) G
        sse = sse + (sq.transpose(0, 2, 1) @ sq - (ni - 2) * G * G)
        covs.append(G)
    pooled = sum((ni - 1) * G for ni, G in zip(sizes, covs)) / (n - k)
    ssb = sum((ni - 1) * (G - pooled) ** 2 for ni, G in zip(sizes, covs))
    F, hits = f_ratio(ssb, sse, k, n, eps)
    w2 = np.multiply.outer(weights, weights)
    return {
        "gpf": np.einsum("bjl,jl->b", F, w2),
        "fmax": F.max(axis=(1, 2)),
        "l2": np.einsum("bjl,jl->b", ssb, w2),
        "tmax": ssb.max(axis=(1, 2)),
        "eps_hits": np.asarray(hits),
    }


def permuted_statistics(pool: np.ndarray, table: np.ndarray, sizes, grid: Grid, eps: float = DEFAULT_EPS,
                        recenter: bool = False):
    """``(T*_n, F*_max, L2*, Tmax*)`` for a single index table."""
    out = permuted_batch(pool, np.asarray(table)[None, :], sizes, grid.weights, eps, recenter)
    return tuple(float(out[s][0]) for s in STATISTICS)


def observed_statistics(dataset: FunctionalDataset, eps: float = DEFAULT_EPS) -> dict:
    surface = quasi_f_surface(dataset, eps)
    g = globalize(surface, dataset.grid)
    ssb = ssb_surface(dataset)
    return {
        "gpf": g.t_n,
        "fmax": g.f_max,
        "l2": float(integrate2(ssb, dataset.grid)),
        "tmax": float(ssb.max()),
        "eps_hits": surface.eps_hits,
    }


def _null_distribution(pool, plan: PermutationPlan, weights, eps, workers: int = 1,
                       recenter: bool = False) -> dict:
    J = pool.shape[1]
    k = len(plan.group_sizes)
    per_table = max(plan.n * J, (k + 4) * J * J)
    chunk = max(1, _BATCH_BUDGET // per_table)
    starts = list(range(0, plan.B, chunk))

    def run(start):
        return permuted_batch(pool, plan.index_tables[start:start + chunk], plan.group_sizes, weights, eps, recenter)

    if workers > 1 and len(starts) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, starts))
    else:
        parts = [run(s) for s in starts]
    return {key: np.concatenate([p[key] for p in parts]) for key in parts[0]}


def perm_p_value(null: np.ndarray, observed: float) -> float:
    """Add-one permutation p-value ``(1 + #{null >= observed}) / (B + 1)``.

    Replicates within a relative ``1e-12`` of the observed value count as
    ties, so floating reassociation cannot flip an exact tie.
    """
    null = np.asarray(null)
    tol = 1e-12 * abs(observed)
    count = int(np.count_nonzero(null >= observed - tol))
    return (1 + count) / (null.size + 1)


def perm_critical_value(null: np.ndarray, alpha: float) -> float:
    """Order statistic ``ceil((1 - alpha)(B + 1))`` of the null sample, clamped to ``B``."""
    srt = np.sort(np.asarray(null))
    B = srt.size
    idx = math.ceil((1 - alpha) * (B + 1) - 1e-9)
    idx = min(max(idx, 1), B)
    return float(srt[idx - 1])


def perm_tests(
    dataset: FunctionalDataset,
    statistics: Sequence[str] = STATISTICS,
    B: int = DEFAULT_B,
    seed: int = 0,
    alpha: float = 0.05,
    eps: float = DEFAULT_EPS,
    workers: int = 1,
    plan: PermutationPlan | None = None,
    recenter: bool = False,
) -> dict:
    """Run several permutation tests sharing one permutation plan.

    Returns ``{statistic: (TestReport, NullSample)}``.
    """
    for s in statistics:
        if s not in STATISTICS:
            raise ValidationError(f"unknown statistic {s!r}; choose from {STATISTICS}")
    if plan is None:
        plan = make_plan(seed, B, dataset.sizes)
    elif plan.group_sizes != dataset.sizes:
        raise ValidationError("plan group sizes do not match the dataset")
    observed = observed_statistics(dataset, eps)
    null = _null_distribution(pooled_effects(dataset), plan, dataset.grid.weights, eps, workers, recenter)
    perm_hits = int(np.count_nonzero(null["eps_hits"]))
    out = {}
    for s in statistics:
        p = perm_p_value(null[s], observed[s])
        quasi_f = s in ("gpf", "fmax")
        report = TestReport(
            test=TEST_NAMES[s],
            statistic=observed[s],
            p_value=p,
            method="rp",
            alpha=alpha,
            reject=p <= alpha,
            critical_value=perm_critical_value(null[s], alpha),
            B=plan.B,
            seed=plan.seed,
            eps_hits=observed["eps_hits"] if quasi_f else 0,
            perm_eps_hits=perm_hits if quasi_f else None,
            recenter=bool(recenter),
            grid=grid_summary(dataset.grid),
            sizes=list(dataset.sizes),
            labels=[g.label for g in dataset.groups],
        )
        out[s] = (report, NullSample(s, null[s], observed[s]))
    return out


def perm_test(
    dataset: FunctionalDataset,
    statistic: str = "gpf",
    B: int = DEFAULT_B,
    seed: int = 0,
    alpha: float = 0.05,
    eps: float = DEFAULT_EPS,
    workers: int = 1,
    recenter: bool = False,
):
    """Single permutation test; returns ``(TestReport, NullSample)``."""
    return perm_tests(dataset, (statistic,), B, seed, alpha, eps, workers, recenter=recenter)[statistic]
