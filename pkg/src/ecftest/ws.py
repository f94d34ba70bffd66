"""Scaled chi-square calibration of the integrated quasi-F statistic.

The null law of ``T_n`` is approximated by ``beta * chi2(d)`` with
``beta = tr(G^2) / ((k-1)(b-a)^2)`` and ``d = (k-1)(b-a)^4 / tr(G^2)``, where
``G`` is the fourth-moment surface of the subject-level products normalised
to unit diagonal.  ``G`` lives on pairs of grid pairs, i.e. it is a
``J^2 x J^2`` object; it is never materialised whole.  Everything is computed
in column blocks over the *unique* pairs ``(s, t), s <= t``, which is exact
because every surface involved is symmetric under ``s <-> t``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special, stats

from .core import FunctionalDataset, Grid, pooled_cov, subject_effects
from .errors import DegenerateDataError, ValidationError
from .report import TestReport, grid_summary
from .surfaces import DEFAULT_EPS, globalize, quasi_f_surface

__all__ = [
    "DIAG_FLOOR",
    "FourthMomentSurface",
    "GammaOmega",
    "WsParams",
    "varpi_empirical",
    "varpi_gaussian",
    "gamma_omega",
    "traces",
    "ws_params",
    "chi2_sf",
    "chi2_isf",
    "gpf_nv",
]

DIAG_FLOOR = 1e-12

# columns of the pair-by-pair table evaluated per block
DEFAULT_BLOCK = 512


def _unique_pairs(J: int):
    s, t = np.triu_indices(J)
    mult = np.where(s == t, 1.0, 2.0)
    return s, t, mult


class FourthMomentSurface:
    """Covariance between products ``v(s1) v(t1)`` and ``v(s2) v(t2)``.

    Entries are addressed by grid-index pairs.  ``block(p, q)`` evaluates the
    submatrix for two index arrays (or slices) into ``self.pairs``; ``entry``
    evaluates a single ``((j1, l1), (j2, l2))`` cell.
    """

    def __init__(self, pooled: np.ndarray, variant: str, product_rows=None, n: int | None = None):
        if variant not in ("empirical", "gaussian"):
            raise ValueError(f"unknown variant {variant!r}")
        self.pooled = pooled
        self.variant = variant
        self.J = pooled.shape[0]
        self.s, self.t, self.multiplicity = _unique_pairs(self.J)
        # (n, P) products v(s) v(t) over the unique pairs, empirical variant only
        self._rows = product_rows
        self._n = n
        self._g = pooled[self.s, self.t]
        self.diag = self._diag()

    @property
    def pairs(self):
        return np.column_stack([self.s, self.t])

    def _diag(self):
        if self.variant == "empirical":
            return np.einsum("ij,ij->j", self._rows, self._rows) / self._n - self._g ** 2
        g = self.pooled
        return g[self.s, self.s] * g[self.t, self.t] + g[self.s, self.t] ** 2

    def block(self, p, q) -> np.ndarray:
        if self.variant == "empirical":
            rows = self._rows
            return rows[:, p].T @ rows[:, q] / self._n - np.outer(self._g[p], self._g[q])
        g = self.pooled
        s1, t1 = self.s[p][:, None], self.t[p][:, None]
        s2, t2 = self.s[q][None, :], self.t[q][None, :]
        return g[s1, s2] * g[t1, t2] + g[s1, t2] * g[t1, s2]

    def entry(self, pair1, pair2) -> float:
        (s1, t1), (s2, t2) = pair1, pair2
        if self.variant == "gaussian":
            g = self.pooled
            return float(g[s1, s2] * g[t1, t2] + g[s1, t2] * g[s2, t1])
        p = self.pair_index(s1, t1)
        q = self.pair_index(s2, t2)
        return float(self.block(np.array([p]), np.array([q]))[0, 0])

    def pair_index(self, s: int, t: int) -> int:
        s, t = min(s, t), max(s, t)
        # row-major upper triangle offset
        return s * self.J - s * (s - 1) // 2 + (t - s)

    def full(self) -> np.ndarray:
        """Dense ``J^2 x J^2`` table in row-major pair order; small grids only."""
        J = self.J
        jj, ll = np.divmod(np.arange(J * J), J)
        idx = np.array([self.pair_index(a, b) for a, b in zip(jj, ll)])
        return self.block(idx, idx)


def varpi_empirical(dataset: FunctionalDataset) -> FourthMomentSurface:
    """Moment estimator: mean of product-of-products minus pooled products.

    The divisor of the first term is the total sample size ``n``.
    """
    pooled = pooled_cov(dataset)
    s, t, _ = _unique_pairs(dataset.grid.J)
    v = np.vstack([subject_effects(g) for g in dataset.groups])
    rows = v[:, s] * v[:, t]
    return FourthMomentSurface(pooled, "empirical", rows, dataset.n)


def varpi_gaussian(pooled: np.ndarray) -> FourthMomentSurface:
    """Gaussian-case estimator built from the pooled covariance alone."""
    pooled = np.asarray(pooled, dtype=float)
    if not np.allclose(pooled, pooled.T, rtol=0, atol=1e-10):
        raise ValidationError("pooled covariance must be symmetric")
    return FourthMomentSurface(pooled, "gaussian")


class GammaOmega:
    """Unit-diagonal normalisation of a :class:`FourthMomentSurface`."""

    def __init__(self, varpi: FourthMomentSurface):
        self.varpi = varpi
        self.scale = np.sqrt(varpi.diag)

    def block(self, p, q) -> np.ndarray:
        return self.varpi.block(p, q) / np.outer(self.scale[p], self.scale[q])

    def entry(self, pair1, pair2) -> float:
        i = self.varpi.pair_index(*pair1)
        j = self.varpi.pair_index(*pair2)
        return self.varpi.entry(pair1, pair2) / (self.scale[i] * self.scale[j])

    def full(self) -> np.ndarray:
        J = self.varpi.J
        jj, ll = np.divmod(np.arange(J * J), J)
        idx = np.array([self.varpi.pair_index(a, b) for a, b in zip(jj, ll)])
        return self.block(idx, idx)


def gamma_omega(varpi: FourthMomentSurface) -> GammaOmega:
    diag = varpi.diag
    top = diag.max()
    bad = np.flatnonzero(diag <= DIAG_FLOOR * max(top, 0.0)) if top > 0 else np.arange(diag.size)
    if bad.size:
        cells = [(int(varpi.s[i]), int(varpi.t[i])) for i in bad[:10]]
        more = f" (+{bad.size - 10} more)" if bad.size > 10 else ""
        raise DegenerateDataError(
            f"fourth-moment diagonal is not positive at grid pairs {cells}{more}"
        )
    return GammaOmega(varpi)


def traces(gam: GammaOmega, grid: Grid, block: int = DEFAULT_BLOCK, method: str = "auto"):
    """``(tr G, tr G^2)`` on the grid.

    ``tr G`` is ``(b - a)^2`` by construction.  ``tr G^2`` is the quadruple
    quadrature sum of ``G^2``.  ``method="blockwise"`` accumulates it over
    fixed column blocks of the pair table.  ``method="gram"`` (empirical
    surface only) uses ``||X'X/n - hh'||_F^2`` with ``||X'X||_F = ||XX'||_F``,
    which needs only the ``n x n`` Gram matrix of the weighted product rows.
    ``"auto"`` picks the Gram route when ``n`` is smaller than the number of
    grid pairs.
    """
    varpi = gam.varpi
    if varpi.J != grid.J:
        raise ValueError("surface does not match the grid")
    w = grid.weights
    pw = w[varpi.s] * w[varpi.t] * varpi.multiplicity
    if method == "auto":
        use_gram = varpi.variant == "empirical" and varpi._n < pw.size
        method = "gram" if use_gram else "blockwise"
    if method == "gram":
        if varpi.variant != "empirical":
            raise ValueError("the Gram route needs the empirical surface")
        root = np.sqrt(pw) / gam.scale
        x = varpi._rows * root
        h = varpi._g * root
        n = varpi._n
        gram = x @ x.T
        xh = x @ h
        return grid.length ** 2, float(
            np.sum(gram * gram) / n ** 2 - 2.0 * (xh @ xh) / n + (h @ h) ** 2
        )
    if method != "blockwise":
        raise ValueError(f"unknown trace method {method!r}")
    total = 0.0
    for start in range(0, pw.size, block):
        cols = slice(start, start + block)
        g = gam.block(slice(None), cols)
        total += float(pw @ (g * g) @ pw[cols])
    return grid.length ** 2, total


@dataclass(frozen=True)
class WsParams:
    beta: float
    d: float
    tr_gamma: float
    tr_gamma_sq: float


def ws_params(tr_gamma: float, tr_gamma_sq: float, k: int) -> WsParams:
    if not tr_gamma_sq > 0:
        raise ValidationError(f"tr(G^2) must be positive, got {tr_gamma_sq}")
    if k < 2:
        raise ValidationError("need k >= 2")
    return WsParams(
        beta=tr_gamma_sq / ((k - 1) * tr_gamma),
        d=(k - 1) * tr_gamma ** 2 / tr_gamma_sq,
        tr_gamma=tr_gamma,
        tr_gamma_sq=tr_gamma_sq,
    )


def chi2_sf(x: float, df: float) -> float:
    """Upper tail of chi-square(df) via the regularized upper incomplete gamma."""
    if not df > 0:
        raise ValueError(f"df must be positive, got {df}")
    if x < 0:
        raise ValueError(f"x must be nonnegative, got {x}")
    return float(special.gammaincc(df / 2.0, x / 2.0))


def chi2_isf(alpha: float, df: float) -> float:
    """Upper ``alpha`` quantile of chi-square(df)."""
    return float(stats.chi2.isf(alpha, df))


def gpf_nv(
    dataset: FunctionalDataset,
    varpi_variant: str = "empirical",
    alpha: float = 0.05,
    eps: float = DEFAULT_EPS,
    block: int = DEFAULT_BLOCK,
) -> TestReport:
    """Integrated quasi-F test calibrated by the scaled chi-square approximation."""
    surface = quasi_f_surface(dataset, eps)
    gstats = globalize(surface, dataset.grid)
    if varpi_variant == "empirical":
        varpi = varpi_empirical(dataset)
    elif varpi_variant == "gaussian":
        varpi = varpi_gaussian(pooled_cov(dataset))
    else:
        raise ValidationError(f"unknown varpi variant {varpi_variant!r}")
    tr1, tr2 = traces(gamma_omega(varpi), dataset.grid, block)
    params = ws_params(tr1, tr2, dataset.k)
    p = chi2_sf(gstats.t_n / params.beta, params.d)
    return TestReport(
        test="gpf-nv",
        statistic=gstats.t_n,
        p_value=p,
        method="nv",
        alpha=alpha,
        reject=p < alpha,
        critical_value=params.beta * chi2_isf(alpha, params.d),
        beta=params.beta,
        d=params.d,
        varpi=varpi_variant,
        eps_hits=surface.eps_hits,
        grid=grid_summary(dataset.grid),
        sizes=list(dataset.sizes),
        labels=[g.label for g in dataset.groups],
    )
