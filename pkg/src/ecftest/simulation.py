"""Data generators, size/power studies and permutation-null comparisons.

Two generating models are provided.  In ``m31`` each curve is a cubic mean
plus a ``q``-term random Fourier expansion whose second basis function is
shifted by ``group * omega``.  In ``m32`` only group 1 (0-based) gets its
second basis function tilted by ``t * omega`` and every subject effect is
divided by ``t + 1/J``, which gives the covariance very different scales at
different time points.

Seeding: every replicate gets its own ``SeedSequence(seed, spawn_key=(c, r))``
for config index ``c`` and replicate index ``r``; the sequence is split into
one stream for the data and one for the permutation plan.  Results therefore
do not depend on how replicates are distributed over workers.
"""
from __future__ import annotations

import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from .core import FunctionalDataset, FunctionalGroup, Grid
from .errors import DegenerateDataError, ValidationError
from .permutation import make_plan, observed_statistics, perm_tests
from .ws import gpf_nv

__all__ = [
    "TESTS",
    "SimConfig",
    "PowerRow",
    "variance_components",
    "basis_eval",
    "true_cov",
    "gen_dataset",
    "replicate_seeds",
    "run_replicate",
    "run_power_study",
    "binomial_se",
    "silverman_bandwidth",
    "kde",
    "null_pdf_study",
    "POWER_CSV_HEADER",
]

log = logging.getLogger(__name__)

TESTS = ("l2-rp", "tmax-rp", "gpf-nv", "gpf-rp", "fmax-rp")
POWER_CSV_HEADER = "model,rho,omega,n1,n2,n3,reps,B,test,reject_pct,mc_se"

_U_DEFAULT = tuple(np.array([1.0, 2.0, 3.0, 4.0]) / math.sqrt(30.0))


@dataclass(frozen=True)
class SimConfig:
    """Full parametrisation of the generating models (defaults: small-sample design)."""

    k: int = 3
    c1: tuple = (1.0, 2.3, 3.4, 1.5)
    delta: float = 0.1
    u: tuple = _U_DEFAULT
    a_var: float = 1.5
    rho: float = 0.5
    q: int = 11
    omega: float = 0.0
    J: int = 80
    sizes: tuple = (20, 30, 30)
    score_dist: str = "gaussian"
    model: str = "m31"

    def __post_init__(self):
        object.__setattr__(self, "c1", tuple(float(x) for x in self.c1))
        object.__setattr__(self, "u", tuple(float(x) for x in self.u))
        object.__setattr__(self, "sizes", tuple(int(x) for x in self.sizes))
        if self.q < 1 or self.q % 2 == 0:
            raise ValidationError(f"q must be a positive odd integer, got {self.q}")
        if not 0 < self.rho < 1:
            raise ValidationError(f"rho must lie in (0, 1), got {self.rho}")
        if len(self.c1) != 4 or len(self.u) != 4:
            raise ValidationError("c1 and u must have 4 entries")
        if abs(math.hypot(*self.u) - 1) > 1e-12:
            raise ValidationError("u must be a unit vector")
        if self.J < 2:
            raise ValidationError("J must be at least 2")
        if self.a_var <= 0:
            raise ValidationError("a_var must be positive")
        if len(self.sizes) != self.k or min(self.sizes) < 2:
            raise ValidationError(f"sizes {self.sizes} must give k={self.k} groups of at least 2")
        if self.score_dist not in ("gaussian", "t4_scaled"):
            raise ValidationError(f"unknown score distribution {self.score_dist!r}")
        if self.model not in ("m31", "m32"):
            raise ValidationError(f"unknown model {self.model!r}")

    @property
    def grid(self) -> Grid:
        return Grid.uniform(self.J)

    @property
    def basis_variant(self) -> str:
        return "constant" if self.model == "m31" else "ramp"

    def summary(self) -> dict:
        return asdict(self)


def variance_components(config: SimConfig) -> np.ndarray:
    return config.a_var * config.rho ** np.arange(config.q)


def basis_eval(q: int, variant: str, group: int, omega: float, t) -> np.ndarray:
    """Basis functions of one group, shape ``(q, len(t))``.

    The orthonormal Fourier basis is ``1, sqrt2 sin(2 pi r t), sqrt2 cos(2 pi r t)``.
    ``variant="constant"`` adds ``group * omega`` to the second function;
    ``variant="ramp"`` adds ``t * omega`` to it for ``group == 1`` only.
    ``group`` is 0-based.
    """
    t = np.atleast_1d(np.asarray(t, dtype=float))
    out = np.empty((q, t.size))
    out[0] = 1.0
    for r in range(1, (q - 1) // 2 + 1):
        out[2 * r - 1] = math.sqrt(2) * np.sin(2 * math.pi * r * t)
        out[2 * r] = math.sqrt(2) * np.cos(2 * math.pi * r * t)
    if q > 1:
        if variant == "constant":
            out[1] += group * omega
        elif variant == "ramp":
            if group == 1:
                out[1] += t * omega
        else:
            raise ValueError(f"unknown basis variant {variant!r}")
    return out


def _effect_scale(config: SimConfig, t: np.ndarray) -> np.ndarray:
    if config.model == "m32":
        return 1.0 / (t + 1.0 / config.J)
    return np.ones_like(t)


def true_cov(config: SimConfig, group: int) -> np.ndarray:
    t = config.grid.points
    psi = basis_eval(config.q, config.basis_variant, group, config.omega, t)
    lam = variance_components(config)
    cov = psi.T @ (lam[:, None] * psi)
    scale = _effect_scale(config, t)
    return cov * np.outer(scale, scale)


def _scores(rng: np.random.Generator, shape, dist: str) -> np.ndarray:
    if dist == "gaussian":
        return rng.standard_normal(shape)
    # t4 = N(0,1) / sqrt(chi2_4 / 4); variance 2, rescaled to 1
    z = rng.standard_normal(shape)
    chi = rng.chisquare(4, shape)
    return z / np.sqrt(chi / 4.0) / math.sqrt(2.0)


def gen_dataset(config: SimConfig, seed) -> FunctionalDataset:
    """Draw one dataset; ``seed`` is anything ``numpy.random.default_rng`` accepts."""
    rng = np.random.default_rng(seed)
    grid = config.grid
    t = grid.points
    powers = np.vstack([np.ones_like(t), t, t ** 2, t ** 3])
    sd = np.sqrt(variance_components(config))
    scale = _effect_scale(config, t)
    c1, u = np.array(config.c1), np.array(config.u)
    groups = []
    for i, n_i in enumerate(config.sizes):
        mean = (c1 + i * config.delta * u) @ powers
        psi = basis_eval(config.q, config.basis_variant, i, config.omega, t)
        b = _scores(rng, (n_i, config.q), config.score_dist) * sd
        groups.append(FunctionalGroup(mean + (b @ psi) * scale, f"group{i + 1}"))
    return FunctionalDataset(grid, tuple(groups))


def replicate_seeds(seed: int, config_index: int, rep: int):
    """``(data_seed_sequence, permutation_seed)`` for one replicate."""
    ss = np.random.SeedSequence(seed, spawn_key=(config_index, rep))
    data_ss, perm_ss = ss.spawn(2)
    return data_ss, int(perm_ss.generate_state(1, np.uint64)[0])


def run_replicate(config: SimConfig, seed: int, config_index: int, rep: int,
                  B: int, alpha: float, varpi: str = "empirical"):
    """Reject flags of all five tests on one simulated dataset, or None if degenerate."""
    data_ss, perm_seed = replicate_seeds(seed, config_index, rep)
    ds = gen_dataset(config, data_ss)
    try:
        rp = perm_tests(ds, B=B, alpha=alpha, plan=make_plan(perm_seed, B, ds.sizes))
        nv = gpf_nv(ds, varpi, alpha)
    except DegenerateDataError as exc:
        log.warning("replicate %d of config %d excluded: %s", rep, config_index, exc)
        return None
    return {
        "l2-rp": rp["l2"][0].reject,
        "tmax-rp": rp["tmax"][0].reject,
        "gpf-nv": nv.reject,
        "gpf-rp": rp["gpf"][0].reject,
        "fmax-rp": rp["fmax"][0].reject,
    }


def _replicate_chunk(args):
    config, seed, config_index, reps, B, alpha, varpi = args
    return [run_replicate(config, seed, config_index, r, B, alpha, varpi) for r in reps]


def binomial_se(p: float, m: int) -> float:
    """Standard error of a rejection rate ``p`` (fraction) from ``m`` replicates."""
    return math.sqrt(p * (1 - p) / m) if m > 0 else float("nan")


@dataclass
class PowerRow:
    config: SimConfig
    reps: int
    B: int
    alpha: float
    seed: int
    reject_pct: dict
    mc_se: dict
    n_valid: int
    n_excluded: int = 0
    config_index: int = 0

    @classmethod
    def from_flags(cls, config, flags, reps, B, alpha, seed, config_index=0) -> "PowerRow":
        valid = [f for f in flags if f is not None]
        m = len(valid)
        pct, se = {}, {}
        for test in TESTS:
            rate = sum(f[test] for f in valid) / m if m else float("nan")
            pct[test] = 100.0 * rate
            se[test] = 100.0 * binomial_se(rate, m)
        return cls(config, reps, B, alpha, seed, pct, se, m, len(flags) - m, config_index)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["config"] = self.config.summary()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PowerRow":
        d = dict(d)
        d["config"] = SimConfig(**d["config"])
        return cls(**d)

    def csv_lines(self) -> list:
        sizes = list(self.config.sizes)
        if len(sizes) > 3:
            raise ValidationError("the power CSV layout holds at most 3 group sizes")
        sizes += [""] * (3 - len(sizes))
        c = self.config
        head = [c.model, repr(c.rho), repr(c.omega), *map(str, sizes), str(self.reps), str(self.B)]
        return [
            ",".join(head + [test, repr(self.reject_pct[test]), repr(self.mc_se[test])])
            for test in TESTS
        ]


def _study_key(config: SimConfig, config_index, reps, B, alpha, seed) -> str:
    return json.dumps(
        {"config": config.summary(), "i": config_index, "reps": reps, "B": B,
         "alpha": alpha, "seed": seed},
        sort_keys=True,
    )


def run_power_study(
    configs: Sequence[SimConfig],
    reps: int = 2000,
    B: int = 500,
    alpha: float = 0.05,
    seed: int = 0,
    workers: int = 1,
    varpi: str = "empirical",
    progress_path: str | os.PathLike | None = None,
    on_row: Callable[[PowerRow], None] | None = None,
) -> list:
    """Rejection percentages of the five tests for each configuration.

    With ``progress_path`` every finished configuration is appended to a
    JSON-lines file, and configurations already present there are reused,
    so an interrupted study can be resumed with the same arguments.
    """
    if reps < 1:
        raise ValidationError("reps must be at least 1")
    done = {}
    if progress_path is not None and os.path.exists(progress_path):
        with open(progress_path) as fh:
            for line in fh:
                if line.strip():
                    entry = json.loads(line)
                    done[entry["key"]] = PowerRow.from_dict(entry["row"])
    rows = []
    for ci, config in enumerate(configs):
        key = _study_key(config, ci, reps, B, alpha, seed)
        if key in done:
            row = done[key]
        else:
            flags = _run_config(config, ci, reps, B, alpha, seed, workers, varpi)
            row = PowerRow.from_flags(config, flags, reps, B, alpha, seed, ci)
            if progress_path is not None:
                with open(progress_path, "a") as fh:
                    fh.write(json.dumps({"key": key, "row": row.to_dict()}) + "\n")
        if on_row is not None:
            on_row(row)
        rows.append(row)
    return rows


def _run_config(config, ci, reps, B, alpha, seed, workers, varpi) -> list:
    if workers <= 1:
        return [run_replicate(config, seed, ci, r, B, alpha, varpi) for r in range(reps)]
    n_chunks = workers * 4
    chunks = [list(range(reps))[i::n_chunks] for i in range(n_chunks)]
    jobs = [(config, seed, ci, c, B, alpha, varpi) for c in chunks if c]
    flags = [None] * reps
    with ProcessPoolExecutor(workers) as ex:
        for job, result in zip(jobs, ex.map(_replicate_chunk, jobs)):
            for r, f in zip(job[3], result):
                flags[r] = f
    return flags


def silverman_bandwidth(sample) -> float:
    """``0.9 min(sd, IQR/1.34) m^(-1/5)``; falls back to ``sd`` when the IQR is 0."""
    x = np.asarray(sample, dtype=float)
    if x.size < 2:
        raise ValidationError("KDE needs at least 2 observations")
    sd = x.std(ddof=1)
    if not sd > 0:
        raise ValidationError("KDE sample is constant")
    q75, q25 = np.percentile(x, [75, 25])
    spread = min(sd, (q75 - q25) / 1.34) or sd
    return 0.9 * spread * x.size ** (-0.2)


def kde(sample, x, bandwidth: float | None = None) -> np.ndarray:
    """Gaussian-kernel density estimate of ``sample`` evaluated at ``x``."""
    data = np.asarray(sample, dtype=float)
    h = silverman_bandwidth(data) if bandwidth is None else float(bandwidth)
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    # chunk the sample to bound the (len(x), chunk) kernel matrix
    for start in range(0, data.size, 4096):
        z = (x[..., None] - data[start:start + 4096]) / h
        out += np.exp(-0.5 * z * z).sum(axis=-1)
    return out / (data.size * h * math.sqrt(2 * math.pi))


@dataclass
class NullPdfResult:
    permutation: dict
    monte_carlo: dict
    ks: dict = field(default_factory=dict)


def null_pdf_study(config: SimConfig, B: int = 2000, reps: int = 2000, seed: int = 0,
                   statistics: Iterable[str] = ("gpf", "fmax"), recenter: bool = False) -> NullPdfResult:
    """Permutation null of one dataset versus the Monte Carlo null of the statistic.

    ``config`` should describe a null configuration (``omega = 0``).  The
    permutation sample uses replicate 0's streams; the Monte Carlo sample
    uses replicates ``1..reps`` of the same master seed.
    """
    statistics = tuple(statistics)
    data_ss, perm_seed = replicate_seeds(seed, 0, 0)
    ds = gen_dataset(config, data_ss)
    res = perm_tests(ds, statistics, plan=make_plan(perm_seed, B, ds.sizes), recenter=recenter)
    perm = {s: res[s][1].values for s in statistics}
    mc = {s: np.empty(reps) for s in statistics}
    for r in range(reps):
        obs = observed_statistics(gen_dataset(config, replicate_seeds(seed, 0, r + 1)[0]))
        for s in statistics:
            mc[s][r] = obs[s]
    ks = {s: stats.ks_2samp(perm[s], mc[s]) for s in statistics}
    return NullPdfResult(perm, mc, ks)
