"""Command-line interface: ``ecftest test | simulate | nullpdf``."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys

import numpy as np

from .core import Grid
from .errors import ECFError
from .io import atomic_write, load_counts, load_dataset
from .permutation import DEFAULT_B, perm_tests
from .report import reports_to_json
from .simulation import POWER_CSV_HEADER, SimConfig, kde, run_power_study, silverman_bandwidth
from .surfaces import DEFAULT_EPS
from .ws import gpf_nv

log = logging.getLogger("ecftest")

ALL_TESTS = ("gpf-nv", "gpf-rp", "fmax-rp", "l2-rp", "tmax-rp")
_RP = {"gpf-rp": "gpf", "fmax-rp": "fmax", "l2-rp": "l2", "tmax-rp": "tmax"}


def _csv_list(text: str, cast=str):
    return [cast(x.strip()) for x in text.split(",") if x.strip()]


def _grid_range(text: str):
    a, b = _csv_list(text, float)
    return a, b


def _load(args):
    if args.counts:
        ds = load_counts(args.data, *args.days)
    else:
        ds = load_dataset(args.data)
        if args.grid_range is not None:
            ds = load_dataset(args.data, Grid.uniform(ds.grid.J, *args.grid_range))
    if args.groups:
        labels = [g.label for g in ds.groups]
        missing = [g for g in args.groups if g not in labels]
        if missing:
            raise ECFError(f"unknown group label(s) {missing}; file has {labels}")
        ds = ds.subset([labels.index(g) for g in args.groups])
    return ds


def _add_data_args(p):
    p.add_argument("--data", required=True, help="dataset CSV (group,subject,values...)")
    p.add_argument("--groups", type=_csv_list, help="comma-separated group labels to compare")
    p.add_argument("--grid-range", type=_grid_range, metavar="A,B",
                   help="override the grid with J uniform points on [A,B]")
    p.add_argument("--counts", action="store_true",
                   help="file holds daily alive counts; convert to survival curves")
    p.add_argument("--days", type=lambda s: tuple(_csv_list(s, int)), default=(2, 31),
                   metavar="LO,HI", help="day range kept with --counts (default 2,31)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ecftest", description="Tests for equality of covariance functions of k functional samples."
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("test", help="run tests on a dataset file")
    _add_data_args(t)
    t.add_argument("--tests", type=_csv_list, default=list(ALL_TESTS))
    t.add_argument("--alpha", type=float, default=0.05)
    t.add_argument("--permutations", type=int, default=DEFAULT_B)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--varpi", choices=("empirical", "gaussian"))
    t.add_argument("--eps", type=float, default=DEFAULT_EPS)
    t.add_argument("--workers", type=int, default=1)
    t.add_argument("--recenter", action="store_true",
                   help="center each permuted group before forming covariances")
    t.add_argument("--out", help="write the JSON report here")

    s = sub.add_parser("simulate", help="size/power study rows")
    s.add_argument("--model", choices=("m31", "m32"), default="m31")
    s.add_argument("--rho", type=float, action="append", help="repeatable")
    s.add_argument("--omega", type=float, action="append", help="repeatable")
    s.add_argument("--sizes", type=lambda x: tuple(_csv_list(x, int)), default=(20, 30, 30))
    s.add_argument("--J", type=int, default=80)
    s.add_argument("--delta", type=float, default=0.1)
    s.add_argument("--reps", type=int, default=2000)
    s.add_argument("--permutations", type=int, default=DEFAULT_B)
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--scores", choices=("gaussian", "t4"), default="gaussian")
    s.add_argument("--varpi", choices=("empirical", "gaussian"), default="empirical")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True, help="power-row CSV")
    s.add_argument("--json", help="also write the rows as JSON")

    n = sub.add_parser("nullpdf", help="permutation null sample and its KDE")
    _add_data_args(n)
    n.add_argument("--statistic", choices=("gpf", "fmax"), default="gpf")
    n.add_argument("--permutations", type=int, default=2000)
    n.add_argument("--seed", type=int, default=0)
    n.add_argument("--eps", type=float, default=DEFAULT_EPS)
    n.add_argument("--recenter", action="store_true",
                   help="center each permuted group before forming covariances")
    n.add_argument("--out", required=True, help="null-sample CSV (column 'statistic')")
    n.add_argument("--kde-out", help="KDE curve CSV (default: <out stem>.kde.csv)")
    n.add_argument("--kde-points", type=int, default=512)
    return parser


def _cmd_test(args) -> int:
    unknown = [x for x in args.tests if x not in ALL_TESTS]
    if unknown:
        raise ECFError(f"unknown test(s) {unknown}; choose from {', '.join(ALL_TESTS)}")
    if args.varpi is not None and "gpf-nv" not in args.tests:
        log.warning("--varpi only affects gpf-nv, which is not selected; ignoring it")
    ds = _load(args)
    reports = []
    if "gpf-nv" in args.tests:
        reports.append(gpf_nv(ds, args.varpi or "empirical", args.alpha, args.eps))
    rp = [_RP[x] for x in args.tests if x in _RP]
    if rp:
        res = perm_tests(ds, rp, args.permutations, args.seed, args.alpha, args.eps, args.workers,
                         recenter=args.recenter)
        reports.extend(res[s][0] for s in rp)
    order = {name: i for i, name in enumerate(args.tests)}
    reports.sort(key=lambda r: order[r.test])

    labels = ", ".join(f"{g.label} (n={g.n})" for g in ds.groups)
    print(f"groups: {labels}; J={ds.grid.J}")
    print(f"{'test':<9} {'statistic':>14} {'p-value %':>10}  reject@{args.alpha:g}")
    for r in reports:
        print(f"{r.test:<9} {r.statistic:>14.6g} {100 * r.p_value:>10.2f}  {'yes' if r.reject else 'no'}")
    hits = max((r.eps_hits for r in reports), default=0)
    if hits:
        print(f"note: SSE floor applied at {hits} grid cell(s)")
    if args.out:
        atomic_write(args.out, reports_to_json(reports) + "\n")
    return 0


def _cmd_simulate(args) -> int:
    configs = [
        SimConfig(
            k=len(args.sizes), rho=rho, omega=omega, J=args.J, sizes=args.sizes, delta=args.delta,
            score_dist="gaussian" if args.scores == "gaussian" else "t4_scaled", model=args.model,
        )
        for rho in (args.rho or [0.5])
        for omega in (args.omega or [0.0])
    ]
    progress = args.out + ".progress.jsonl"

    def echo(row):
        pct = "  ".join(f"{t}={row.reject_pct[t]:.2f}" for t in row.reject_pct)
        print(f"rho={row.config.rho:g} omega={row.config.omega:g}: {pct}", flush=True)

    rows = run_power_study(configs, args.reps, args.permutations, args.alpha, args.seed,
                           args.workers, args.varpi, progress_path=progress, on_row=echo)
    lines = [POWER_CSV_HEADER] + [line for row in rows for line in row.csv_lines()]
    atomic_write(args.out, "\n".join(lines) + "\n")
    if args.json:
        atomic_write(args.json, json.dumps([r.to_dict() for r in rows], indent=2) + "\n")
    if os.path.exists(progress):
        os.unlink(progress)
    return 0


def _cmd_nullpdf(args) -> int:
    ds = _load(args)
    res = perm_tests(ds, (args.statistic,), args.permutations, args.seed, eps=args.eps,
                         recenter=args.recenter)
    null = res[args.statistic][1]
    h = silverman_bandwidth(null.values)
    x = np.linspace(null.values.min() - 4 * h, null.values.max() + 4 * h, args.kde_points)
    pdf = kde(null.values, x, h)
    kde_out = args.kde_out or os.path.splitext(args.out)[0] + ".kde.csv"
    atomic_write(args.out, null.to_csv())
    atomic_write(kde_out, "x,pdf\n" + "".join(f"{a!r},{b!r}\n" for a, b in zip(x.tolist(), pdf.tolist())))
    print(f"observed {args.statistic} = {null.observed:.6g}; "
          f"p-value = {100 * res[args.statistic][0].p_value:.2f}%")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    handler = {"test": _cmd_test, "simulate": _cmd_simulate, "nullpdf": _cmd_nullpdf}[args.command]
    try:
        return handler(args)
    except (ECFError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
