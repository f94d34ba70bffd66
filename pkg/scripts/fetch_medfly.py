#!/usr/bin/env python3
"""Convert the medfly cohort counts into the long-format counts file read by
``ecftest test --counts``.

The data are not redistributed here.  Download the four cohort-level count
tables (one per diet/sex group) from the public medfly data page,
http://anson.ucdavis.edu/~mueller/data/data.html, and pass them in group
order:

    python scripts/fetch_medfly.py g1.txt g2.txt g3.txt g4.txt -o data/medfly_counts.csv

Each input is a whitespace- or comma-separated matrix with one row per cohort
and one column per day (day 1 first), holding the number of flies alive.  Row
``r`` of input ``i`` becomes subject ``c<r>`` of group ``Group<i>``:

    1. males, sugar diet          2. males, protein + sugar diet
    3. females, sugar diet        4. females, protein + sugar diet

The output is checked by loading it back as survival curves on days 2..31.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from ecftest.io import atomic_write, load_counts


def read_matrix(path: str) -> np.ndarray:
    with open(path) as fh:
        rows = [line.replace(",", " ").split() for line in fh if line.strip()]
    try:
        return np.array(rows, dtype=float)
    except ValueError as exc:
        raise SystemExit(f"{path}: not a numeric cohort x day matrix ({exc})")


def to_long_csv(matrices) -> str:
    days = {m.shape[1] for m in matrices}
    if len(days) != 1:
        raise SystemExit(f"inputs disagree on the number of days: {sorted(days)}")
    (D,) = days
    lines = ["group,subject," + ",".join(f"day{d}" for d in range(1, D + 1))]
    for i, m in enumerate(matrices, start=1):
        for r, row in enumerate(m, start=1):
            lines.append(f"Group{i},c{r}," + ",".join(f"{v:g}" for v in row))
    return "\n".join(lines) + "\n"


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("inputs", nargs="+", help="one counts matrix per group, in group order")
    p.add_argument("-o", "--out", default="data/medfly_counts.csv")
    args = p.parse_args(argv)
    atomic_write(args.out, to_long_csv([read_matrix(x) for x in args.inputs]))
    ds = load_counts(args.out)
    print(f"wrote {args.out}: groups {[g.label for g in ds.groups]}, sizes {list(ds.sizes)}, J={ds.grid.J}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
