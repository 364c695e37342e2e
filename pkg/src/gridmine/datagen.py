"""Seeded synthetic data: Gaussian mixtures, transaction databases, site splits.

All randomness comes from numpy's ``Generator`` over the PCG64 bit generator
(``numpy.random.default_rng(seed)``), so output is a pure function of the
spec including its seed.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from gridmine.exceptions import ValidationError

STRATEGIES = ("round_robin", "contiguous", "shuffled")


@dataclass(frozen=True)
class Component:
    center: tuple[float, ...]
    stddev: float
    count: int


@dataclass(frozen=True)
class MixtureSpec:
    dims: int
    components: tuple[Component, ...]
    seed: int = 0

    def __post_init__(self):
        comps = tuple(
            c if isinstance(c, Component)
            else Component(tuple(float(x) for x in c["center"]), float(c["stddev"]), int(c["count"]))
            for c in self.components
        )
        object.__setattr__(self, "components", comps)
        if not isinstance(self.dims, (int, np.integer)) or self.dims < 1:
            raise ValidationError("dims must be a positive integer")
        if not comps:
            raise ValidationError("a mixture needs at least one component")
        for c in comps:
            if len(c.center) != self.dims:
                raise ValidationError(f"component center {c.center} does not have {self.dims} dims")
            if not c.stddev > 0:
                raise ValidationError("component stddev must be > 0")
            if c.count < 1:
                raise ValidationError("component count must be >= 1")

    @classmethod
    def from_dict(cls, data: dict) -> "MixtureSpec":
        try:
            return cls(int(data["dims"]), tuple(data["components"]), int(data.get("seed", 0)))
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad mixture spec: {exc}") from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["components"] = [
            {"center": list(c["center"]), "stddev": c["stddev"], "count": c["count"]}
            for c in d["components"]
        ]
        return d


@dataclass(frozen=True)
class Pattern:
    itemset: tuple[int, ...]
    prob: float


@dataclass(frozen=True)
class TransactionSpec:
    n_items: int
    n_transactions: int
    patterns: tuple[Pattern, ...] = ()
    noise_prob: float = 0.0
    seed: int = 0

    def __post_init__(self):
        pats = tuple(
            p if isinstance(p, Pattern)
            else Pattern(tuple(int(i) for i in p["itemset"]), float(p["prob"]))
            for p in self.patterns
        )
        object.__setattr__(self, "patterns", pats)
        if self.n_items < 1 or self.n_transactions < 1:
            raise ValidationError("n_items and n_transactions must be positive")
        if not 0.0 <= self.noise_prob <= 1.0:
            raise ValidationError("noise_prob must lie in [0, 1]")
        for p in pats:
            if not p.itemset:
                raise ValidationError("pattern itemsets must be nonempty")
            if any(b <= a for a, b in zip(p.itemset, p.itemset[1:])):
                raise ValidationError(f"pattern {p.itemset} is not strictly ascending")
            if p.itemset[0] < 0 or p.itemset[-1] >= self.n_items:
                raise ValidationError(f"pattern {p.itemset} has item ids outside [0, {self.n_items})")
            if not 0.0 <= p.prob <= 1.0:
                raise ValidationError("pattern prob must lie in [0, 1]")

    @classmethod
    def from_dict(cls, data: dict) -> "TransactionSpec":
        try:
            return cls(
                int(data["n_items"]),
                int(data["n_transactions"]),
                tuple(data.get("patterns", ())),
                float(data.get("noise_prob", 0.0)),
                int(data.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"bad transaction spec: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "n_items": self.n_items,
            "n_transactions": self.n_transactions,
            "patterns": [{"itemset": list(p.itemset), "prob": p.prob} for p in self.patterns],
            "noise_prob": self.noise_prob,
            "seed": self.seed,
        }


def load_spec(path) -> Union[MixtureSpec, TransactionSpec]:
    """Read a JSON spec file; the kind is inferred from its fields."""
    with open(path) as fh:
        data = json.load(fh)
    return spec_from_dict(data)


def spec_from_dict(data: dict) -> Union[MixtureSpec, TransactionSpec]:
    if "components" in data:
        return MixtureSpec.from_dict(data)
    if "n_items" in data:
        return TransactionSpec.from_dict(data)
    raise ValidationError("spec is neither a mixture nor a transaction spec")


@dataclass(eq=False)
class PointSet:
    """Points as an ``(n, dims)`` float array, with optional ground-truth labels."""

    points: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2:
            raise ValidationError("points must be a 2-D array")
        self.points = pts
        if self.labels is not None:
            self.labels = np.asarray(self.labels)
            if len(self.labels) != len(pts):
                raise ValidationError("labels must align with points")

    @property
    def dims(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return len(self.points)

    def take(self, idx) -> "PointSet":
        idx = np.asarray(idx, dtype=int)
        return PointSet(self.points[idx], None if self.labels is None else self.labels[idx])


@dataclass(eq=False)
class TransactionDB:
    """Transactions as strictly ascending tuples of item ids below ``n_items``."""

    n_items: int
    transactions: list[tuple[int, ...]] = field(default_factory=list)

    def __post_init__(self):
        txs = [tuple(int(i) for i in t) for t in self.transactions]
        for t in txs:
            if any(b <= a for a, b in zip(t, t[1:])):
                raise ValidationError(f"transaction {t} is not strictly ascending")
            if t and (t[0] < 0 or t[-1] >= self.n_items):
                raise ValidationError(f"transaction {t} has item ids outside [0, {self.n_items})")
        self.transactions = txs

    def __len__(self):
        return len(self.transactions)

    @cached_property
    def tidsets(self) -> dict[int, int]:
        """Item id -> bitmask of the transactions containing it."""
        tids: dict[int, list[int]] = {}
        for tid, t in enumerate(self.transactions):
            for item in t:
                tids.setdefault(item, []).append(tid)
        masks = {}
        for item, rows in tids.items():
            bits = np.zeros(len(self.transactions), dtype=bool)
            bits[rows] = True
            masks[item] = int.from_bytes(np.packbits(bits, bitorder="little").tobytes(), "little")
        return masks

    def take(self, idx) -> "TransactionDB":
        return TransactionDB(self.n_items, [self.transactions[i] for i in idx])

    @classmethod
    def concat(cls, dbs: Sequence["TransactionDB"]) -> "TransactionDB":
        if not dbs:
            raise ValidationError("nothing to concatenate")
        n_items = max(db.n_items for db in dbs)
        return cls(n_items, [t for db in dbs for t in db.transactions])


def gen_gaussian_mixture(spec: MixtureSpec) -> PointSet:
    """Draw each component's points i.i.d. from N(center, stddev^2 I), in component order."""
    rng = np.random.default_rng(spec.seed)
    blocks, labels = [], []
    for j, comp in enumerate(spec.components):
        center = np.asarray(comp.center, dtype=float)
        blocks.append(center + comp.stddev * rng.standard_normal((comp.count, spec.dims)))
        labels.append(np.full(comp.count, j, dtype=int))
    return PointSet(np.vstack(blocks), np.concatenate(labels))


def gen_transactions(spec: TransactionSpec) -> TransactionDB:
    """Each transaction = union of patterns drawn with their probs plus per-item noise.

    Empty transactions are kept.
    """
    rng = np.random.default_rng(spec.seed)
    n, m = spec.n_transactions, spec.n_items
    member = np.zeros((n, m), dtype=bool)
    if spec.patterns:
        probs = np.array([p.prob for p in spec.patterns])
        draws = rng.random((n, len(spec.patterns))) < probs
        for j, p in enumerate(spec.patterns):
            member[np.ix_(draws[:, j], list(p.itemset))] = True
    # items already present are unaffected by noise, so drawing noise for all
    # items is the same as drawing it only for the remaining ones
    member |= rng.random((n, m)) < spec.noise_prob
    return TransactionDB(m, [tuple(np.flatnonzero(row).tolist()) for row in member])


def partition_indices(
    n_records: int, n_sites: int, strategy: str = "round_robin", seed: int = 0
) -> list[np.ndarray]:
    """Record indices held by each site; a disjoint cover of ``range(n_records)``."""
    if n_sites < 1:
        raise ValidationError("n_sites must be >= 1")
    if n_sites > n_records:
        raise ValidationError(f"cannot split {n_records} records over {n_sites} sites")
    idx = np.arange(n_records)
    if strategy == "round_robin":
        return [idx[s::n_sites] for s in range(n_sites)]
    if strategy == "contiguous":
        return list(np.array_split(idx, n_sites))
    if strategy == "shuffled":
        perm = np.random.default_rng(seed).permutation(n_records)
        return [perm[s::n_sites] for s in range(n_sites)]
    raise ValidationError(f"unknown partition strategy {strategy!r}; expected one of {STRATEGIES}")


def partition(data, n_sites: int, strategy: str = "round_robin", seed: int = 0) -> list:
    """Split a PointSet or TransactionDB into per-site datasets."""
    return [data.take(ix) for ix in partition_indices(len(data), n_sites, strategy, seed)]


def two_round_instance() -> tuple[list[TransactionDB], float, int]:
    """Four sites where top-down reconciliation settles in two rounds.

    Every site holds {0,1,2,3} in 40 of 100 transactions, so all four levels
    are globally frequent at minsup 0.3. Site 0 also has {3,4} locally
    frequent and the others {4,5}; both fail globally, and their immediate
    subsets are decided in the next round. Returns ``(dbs, minsup, k)``.
    """
    site0 = [(0, 1, 2, 3)] * 40 + [(3, 4)] * 35 + [()] * 25
    other = [(0, 1, 2, 3)] * 40 + [(4, 5)] * 30 + [()] * 30
    dbs = [TransactionDB(6, site0)] + [TransactionDB(6, other) for _ in range(3)]
    return dbs, 0.3, 4
