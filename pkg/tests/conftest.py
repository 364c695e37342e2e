"""Shared oracles and fixtures.

The oracles here deliberately avoid the package's own algorithms: SSE is
computed from explicit points and frequent itemsets by scanning a boolean
membership matrix over every candidate combination.
"""

from __future__ import annotations

import math
from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest

from gridmine.datagen import TransactionDB


def sse(points) -> float:
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    return float(((pts - pts.mean(axis=0)) ** 2).sum())


def realize(size, center, variance):
    """Points with the given count, mean and SSE.

    Two points sit at +-a along the first axis and the rest on the center,
    so the SSE is 2a^2.
    """
    center = np.asarray(center, dtype=float)
    pts = np.repeat(center[None, :], size, axis=0)
    if size == 1:
        assert variance == 0
        return pts
    a = math.sqrt(variance / 2.0)
    pts[0, 0] += a
    pts[1, 0] -= a
    return pts


def exact_threshold(minsup: float, n: int) -> int:
    return max(1, math.ceil(Fraction(str(minsup)) * n))


def membership(dbs, n_items):
    rows = [t for db in dbs for t in db.transactions]
    mat = np.zeros((len(rows), n_items), dtype=bool)
    for r, t in enumerate(rows):
        mat[r, list(t)] = True
    return mat


def exhaustive_frequent(dbs, minsup, k):
    """{itemset: global support} over every combination of at most k items."""
    n_items = max(db.n_items for db in dbs)
    mat = membership(dbs, n_items)
    thr = exact_threshold(minsup, len(mat))
    out = {}
    for size in range(1, k + 1):
        found = False
        for combo in combinations(range(n_items), size):
            s = int(mat[:, list(combo)].all(axis=1).sum())
            if s >= thr:
                out[combo] = s
                found = True
        if not found:
            break
    return out


def flatten(levels):
    return {x: s for level in levels.values() for x, s in level.items()}


def random_mining_instance(rng):
    """Random sites with planted patterns: s in 2..5, <=500 tx/site, <=25 items, k<=4."""
    n_sites = int(rng.integers(2, 6))
    n_items = int(rng.integers(5, 26))
    k = int(rng.integers(1, 5))
    minsup = float(np.round(rng.uniform(0.05, 0.3), 3))
    patterns = []
    for _ in range(int(rng.integers(1, 5))):
        size = int(rng.integers(2, min(6, n_items) + 1))
        patterns.append((np.sort(rng.choice(n_items, size, replace=False)), rng.uniform(0.1, 0.6)))
    noise = rng.uniform(0.0, 0.15)
    dbs = []
    for _ in range(n_sites):
        n_tx = int(rng.integers(20, 501))
        member = rng.random((n_tx, n_items)) < noise
        for items, prob in patterns:
            hit = rng.random(n_tx) < prob
            member[np.ix_(hit, items)] = True
        dbs.append(TransactionDB(n_items, [tuple(np.flatnonzero(r).tolist()) for r in member]))
    return dbs, minsup, k


@pytest.fixture
def small_db():
    return TransactionDB(4, [(1, 2, 3), (1, 2), (1, 3), (2, 3), (1, 2, 3)])


# -- acceptance reporting ------------------------------------------------------

CRITERIA_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
