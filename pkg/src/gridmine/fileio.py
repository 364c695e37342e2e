"""Readers and writers for the on-disk formats.

* points: CSV, one point per line, no header
* transactions: one transaction per line, ascending space-separated ids,
  an empty line is an empty transaction
* sub-cluster stats: CSV ``site,index,size,center_0..center_{d-1},variance``
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from gridmine.clustering import SubClusterStats
from gridmine.datagen import PointSet, TransactionDB
from gridmine.exceptions import ValidationError


def write_points(path, points) -> None:
    pts = getattr(points, "points", points)
    lines = [",".join(repr(float(v)) for v in row) for row in np.asarray(pts, dtype=float)]
    Path(path).write_text("".join(line + "\n" for line in lines))


def read_points(path) -> PointSet:
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append([float(v) for v in line.split(",")])
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: not a row of floats") from None
    if not rows:
        raise ValidationError(f"{path}: no points")
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(f"{path}: rows differ in length")
    return PointSet(np.array(rows))


def write_transactions(path, db: TransactionDB) -> None:
    Path(path).write_text("".join(" ".join(map(str, t)) + "\n" for t in db.transactions))


def read_transactions(path, n_items: int | None = None) -> TransactionDB:
    """Parse a transaction file; ``n_items`` defaults to one past the largest id."""
    txs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            try:
                txs.append(tuple(int(v) for v in line.split()))
            except ValueError:
                raise ValidationError(f"{path}:{lineno}: not a list of integer ids") from None
    if n_items is None:
        n_items = 1 + max((t[-1] for t in txs if t), default=0)
    return TransactionDB(n_items, txs)


def write_stats(path, stats) -> None:
    stats = list(stats)
    dims = stats[0].dims if stats else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site", "index", "size"] + [f"center_{d}" for d in range(dims)] + ["variance"])
        for s in stats:
            w.writerow([s.site, s.index, s.size] + [repr(c) for c in s.center] + [repr(s.variance)])


def read_stats(path) -> list[SubClusterStats]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:3] != ["site", "index", "size"] or header[-1] != "variance":
            raise ValidationError(f"{path}: bad stats header")
        return [
            SubClusterStats(int(r[0]), int(r[1]), int(r[2]), tuple(float(v) for v in r[3:-1]), float(r[-1]))
            for r in reader
            if r
        ]


def write_json(path, data) -> None:
    Path(path).write_text(json.dumps(data, indent=2) + "\n")
