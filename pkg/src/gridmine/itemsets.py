"""Frequent-itemset mining: local Apriori, the GFM protocol and the FDM baseline.

Itemsets are strictly ascending tuples of item ids. Supports are absolute
transaction counts. With ``minsup`` as a fraction, site ``i`` uses the local
threshold ``ceil(minsup * |X_i|)`` and the grid uses ``ceil(minsup * sum |X_i|)``.

GFM mines every site to depth ``k`` with local pruning only, then reconciles
top-down: each site asks the others for the supports of its maximal locally
frequent itemsets; survivors make all their subsets frequent, failures are
replaced by their immediate subsets. FDM instead synchronizes once per level.
Both return the same itemsets and supports as Apriori over the pooled data.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from itertools import combinations
from typing import Iterable, Mapping, Sequence

from gridmine.datagen import TransactionDB
from gridmine.exceptions import ValidationError

Itemset = tuple[int, ...]

SITE_ID_BYTES = 4
COUNT_BYTES = 4
LENGTH_BYTES = 2
ITEM_BYTES = 4
SUPPORT_BYTES = 8


def as_itemset(items: Iterable[int]) -> Itemset:
    t = tuple(sorted(int(i) for i in items))
    if not t:
        raise ValidationError("itemsets must be nonempty")
    if len(set(t)) != len(t):
        raise ValidationError(f"duplicate items in {t}")
    return t


def message_bytes(itemsets: Sequence[Itemset]) -> int:
    """Size of one wire message carrying ``itemsets``.

    Layout: site id (4), itemset count (4), then per itemset a 2-byte length,
    4 bytes per item and an 8-byte support (zero in requests).
    """
    return SITE_ID_BYTES + COUNT_BYTES + sum(
        LENGTH_BYTES + ITEM_BYTES * len(x) + SUPPORT_BYTES for x in itemsets
    )


def encode_message(site: int, entries: Sequence[tuple[Itemset, int]]) -> bytes:
    """Big-endian wire encoding; ``len(encode_message(...)) == message_bytes(...)``."""
    out = bytearray(site.to_bytes(4, "big"))
    out += len(entries).to_bytes(4, "big")
    for items, support in entries:
        out += len(items).to_bytes(2, "big")
        for i in items:
            out += int(i).to_bytes(4, "big")
        out += int(support).to_bytes(8, "big")
    return bytes(out)


def decode_message(data: bytes) -> tuple[int, list[tuple[Itemset, int]]]:
    site = int.from_bytes(data[0:4], "big")
    count = int.from_bytes(data[4:8], "big")
    pos, entries = 8, []
    for _ in range(count):
        n = int.from_bytes(data[pos:pos + 2], "big")
        pos += 2
        items = tuple(int.from_bytes(data[pos + 4 * i:pos + 4 * i + 4], "big") for i in range(n))
        pos += 4 * n
        entries.append((items, int.from_bytes(data[pos:pos + 8], "big")))
        pos += 8
    return site, entries


def support_threshold(minsup: float, n_transactions: int) -> int:
    """``ceil(minsup * n)``, robust to float noise, and never below 1."""
    return max(1, math.ceil(round(minsup * n_transactions, 9)))


@dataclass(frozen=True)
class MiningParams:
    minsup: float
    k: int

    def __post_init__(self):
        if not 0 < self.minsup <= 1:
            raise ValidationError("minsup must lie in (0, 1]")
        if not isinstance(self.k, int) or self.k < 1:
            raise ValidationError("k must be a positive integer")


Levels = dict[int, dict[Itemset, int]]


@dataclass
class MiningResult:
    """Globally frequent itemsets by size, with exact global supports."""

    frequent: Levels
    rounds: int = 0
    messages: int = 0
    bytes: int = 0
    makespan: float = 0.0
    session: object = field(default=None, repr=False)

    def itemsets(self) -> dict[Itemset, int]:
        return {x: s for level in self.frequent.values() for x, s in level.items()}

    def counts(self) -> dict[int, int]:
        return {size: len(level) for size, level in sorted(self.frequent.items())}

    def to_dict(self) -> dict:
        return {
            "frequent": {
                str(size): [{"items": list(x), "support": s} for x, s in sorted(level.items())]
                for size, level in sorted(self.frequent.items())
            },
            "rounds": self.rounds,
            "messages": self.messages,
            "bytes": self.bytes,
        }


def _normalize(levels: Mapping[int, Mapping[Itemset, int]]) -> Levels:
    return {
        size: dict(sorted(level.items()))
        for size, level in sorted(levels.items())
        if level
    }


def count_support(db: TransactionDB, itemsets: Iterable[Itemset]) -> dict[Itemset, int]:
    """Number of transactions containing each itemset."""
    masks = db.tidsets
    out = {}
    for x in itemsets:
        acc = -1
        for item in x:
            acc &= masks.get(item, 0)
            if not acc:
                break
        out[x] = 0 if acc == -1 else acc.bit_count()
    return out


def candidate_gen(frequent_prev: Iterable[Itemset]) -> set[Itemset]:
    """Apriori join on a shared (l-2)-prefix, then prune by (l-1)-subsets."""
    prev = sorted(set(frequent_prev))
    if not prev:
        return set()
    size = len(prev[0])
    if any(len(x) != size for x in prev):
        raise ValidationError("candidate generation needs itemsets of one size")
    known = set(prev)
    out = set()
    for a_idx, a in enumerate(prev):
        for b in prev[a_idx + 1:]:
            if a[:-1] != b[:-1]:
                break
            cand = a + (b[-1],)
            if all(cand[:i] + cand[i + 1:] in known for i in range(len(cand))):
                out.add(cand)
    return out


def _level_one(db: TransactionDB) -> list[Itemset]:
    return [(i,) for i in sorted(db.tidsets)]


def apriori_local(db: TransactionDB, params: MiningParams, threshold: int | None = None) -> Levels:
    """Level-wise Apriori at one site against its local threshold.

    Returns ``{size: {itemset: support}}`` for nonempty levels up to ``k``.
    """
    if threshold is None:
        threshold = support_threshold(params.minsup, len(db))
    levels: Levels = {}
    cands: Iterable[Itemset] = _level_one(db)
    for size in range(1, params.k + 1):
        counts = count_support(db, cands)
        level = {x: c for x, c in sorted(counts.items()) if c >= threshold}
        if not level:
            break
        levels[size] = level
        cands = candidate_gen(level)
        if not cands:
            break
    return levels


def apriori_centralized(site_dbs: Sequence[TransactionDB], params: MiningParams) -> MiningResult:
    """Apriori over the pooled database with the global threshold."""
    pooled = TransactionDB.concat(site_dbs)
    return MiningResult(_normalize(apriori_local(pooled, params)))


def _maximal(levels: Levels) -> set[Itemset]:
    """Itemsets with no frequent strict superset among ``levels``."""
    everything = [x for level in levels.values() for x in level]
    covered = set()
    for x in everything:
        for r in range(1, len(x)):
            covered.update(combinations(x, r))
    return {x for x in everything if x not in covered}


def _immediate_subsets(x: Itemset) -> list[Itemset]:
    return [x[:i] + x[i + 1:] for i in range(len(x))] if len(x) > 1 else []


def _all_subsets(x: Itemset) -> list[Itemset]:
    return [c for r in range(1, len(x) + 1) for c in combinations(x, r)]


def _check_sites(site_dbs):
    if not site_dbs:
        raise ValidationError("at least one site is required")


def _make_session(site_dbs, session):
    if session is None:
        from gridmine.gridsim import GridSession

        session = GridSession(len(site_dbs))
    if session.n_sites != len(site_dbs):
        raise ValidationError("session size does not match the number of sites")
    return session


def _finish(frequent, session) -> MiningResult:
    res = session.result()
    return MiningResult(
        _normalize(frequent), session.rounds, res.log.messages, res.log.bytes, res.makespan, session
    )


class _SiteState:
    def __init__(self, db: TransactionDB, local_levels: Levels):
        self.db = db
        self.local = {x: c for level in local_levels.values() for x, c in level.items()}
        self.frequent: set[Itemset] = set()
        self.failed: set[Itemset] = set()
        self.pending: list[Itemset] = sorted(_maximal(local_levels))

    def local_count(self, itemsets, checks):
        missing = [x for x in itemsets if x not in self.local]
        if missing:
            checks[0] += len(missing) * len(self.db)
            self.local.update(count_support(self.db, missing))
        return [self.local[x] for x in itemsets]


def gfm_run(
    site_dbs: Sequence[TransactionDB],
    params: MiningParams,
    session=None,
    expand: str = "all",
    collector: int = 0,
) -> MiningResult:
    """Grid-based frequent itemset mining with one top-down reconciliation phase.

    Every round has five substages: (0) each site sends its pending itemsets
    to all others, (1) they answer with local supports, (2) each site reports
    its local supports for the itemsets it newly found frequent (decided or
    implied) to ``collector``, which assembles the result, (3) the collector
    asks for counts it still lacks, and (4) gets them back.

    ``expand="local"`` restricts subset expansion after a global failure to
    subsets that are locally frequent at the requesting site. That saves
    traffic but may miss itemsets; ``"all"`` is always complete.
    """
    _check_sites(site_dbs)
    if expand not in ("all", "local"):
        raise ValidationError("expand must be 'all' or 'local'")
    session = _make_session(site_dbs, session)
    n_sites = len(site_dbs)
    if not 0 <= collector < n_sites:
        raise ValidationError("collector site out of range")
    cm = session.cost_model
    global_thr = support_threshold(params.minsup, sum(len(db) for db in site_dbs))

    states, gen_cost = [], {}
    for i, db in enumerate(site_dbs):
        t0 = time.perf_counter()
        levels = apriori_local(db, params)
        elapsed = time.perf_counter() - t0
        n_cands = len(_level_one(db)) + sum(len(candidate_gen(l)) for l in levels.values())
        gen_cost[i] = session.cost(n_cands * len(db) * cm.support_check, elapsed)
        states.append(_SiteState(db, levels))
    session.local_stage(gen_cost, label="local apriori")

    # collector's view: itemset -> {site: local support}
    table: dict[Itemset, dict[int, int]] = {}

    def count_at(site, itemsets, sub):
        checks = [0]
        t0 = time.perf_counter()
        counts = states[site].local_count(itemsets, checks)
        cost[sub][site] = cost[sub].get(site, 0.0) + session.cost(
            checks[0] * cm.support_check, time.perf_counter() - t0
        )
        return counts

    while any(st.pending for st in states):
        exchanges = []
        cost: list[dict[int, float]] = [{} for _ in range(5)]

        newly: list[list[Itemset]] = []
        for i, st in enumerate(states):
            req = st.pending
            totals = dict(zip(req, count_at(i, req, 0)))
            if req:
                for j in range(n_sites):
                    if j == i:
                        continue
                    exchanges.append((i, j, message_bytes(req), 0))
                    for x, c in zip(req, count_at(j, req, 1)):
                        totals[x] += c
                    exchanges.append((j, i, message_bytes(req), 1))

            found = set()
            for x, total in sorted(totals.items()):
                if total >= global_thr:
                    for sub in _all_subsets(x):
                        if sub not in st.frequent:
                            st.frequent.add(sub)
                            found.add(sub)
                else:
                    st.failed.add(x)
            next_pending = set()
            for x in sorted(totals):
                if x in st.failed:
                    for sub in _immediate_subsets(x):
                        if sub in st.frequent or sub in st.failed:
                            continue
                        if expand == "local" and sub not in st.local:
                            continue
                        next_pending.add(sub)
            st.pending = sorted(next_pending)
            newly.append(sorted(found))

        for i, found in enumerate(newly):
            if not found:
                continue
            for x, c in zip(found, count_at(i, found, 2)):
                table.setdefault(x, {})[i] = c
            if i != collector:
                exchanges.append((i, collector, message_bytes(found), 2))

        new_all = sorted(set().union(*newly))
        for j in range(n_sites):
            missing = [x for x in new_all if j not in table[x]]
            if not missing:
                continue
            for x, c in zip(missing, count_at(j, missing, 4 if j != collector else 2)):
                table[x][j] = c
            if j != collector:
                exchanges.append((collector, j, message_bytes(missing), 3))
                exchanges.append((j, collector, message_bytes(missing), 4))

        session.barrier_round(exchanges, cost, label="reconcile")

    frequent: Levels = {}
    for x, per_site in table.items():
        frequent.setdefault(len(x), {})[x] = sum(per_site.values())
    return _finish(frequent, session)


def fdm_run(site_dbs: Sequence[TransactionDB], params: MiningParams, session=None) -> MiningResult:
    """Level-wise distributed mining with one synchronization round per level.

    Each round has a broadcast substage (every site sends its locally frequent
    candidates with their local supports) and a poll substage (every site
    returns its counts for the candidates it did not broadcast).
    """
    _check_sites(site_dbs)
    session = _make_session(site_dbs, session)
    cm = session.cost_model
    n_sites = len(site_dbs)
    global_thr = support_threshold(params.minsup, sum(len(db) for db in site_dbs))
    local_thr = [support_threshold(params.minsup, len(db)) for db in site_dbs]
    items = sorted({i for db in site_dbs for i in db.tidsets})

    frequent: Levels = {}
    cands = [(i,) for i in items]
    for size in range(1, params.k + 1):
        if not cands:
            break
        counts, gen_cost = [], {}
        for i, db in enumerate(site_dbs):
            t0 = time.perf_counter()
            counts.append(count_support(db, cands))
            gen_cost[i] = session.cost(len(cands) * len(db) * cm.support_check,
                                       time.perf_counter() - t0)
        if size == 1:
            # initial scan; later levels count inside the broadcast substage
            session.local_stage(gen_cost, label="level-1 count")
            gen_cost = {}
        lf = [sorted(x for x, c in counts[i].items() if c >= local_thr[i]) for i in range(n_sites)]
        union = sorted(set().union(*lf))
        exchanges = []
        for i in range(n_sites):
            for j in range(n_sites):
                if i != j and lf[i]:
                    exchanges.append((i, j, message_bytes(lf[i]), 0))
        for i in range(n_sites):
            mine = set(lf[i])
            poll = [x for x in union if x not in mine]
            for j in range(n_sites):
                if i != j and poll:
                    exchanges.append((i, j, message_bytes(poll), 1))
        session.barrier_round(exchanges, [gen_cost], label=f"level {size}")
        level = {}
        for x in union:
            total = sum(counts[i][x] for i in range(n_sites))
            if total >= global_thr:
                level[x] = total
        if not level:
            break
        frequent[size] = level
        cands = sorted(candidate_gen(level))
    return _finish(frequent, session)


def superset_lemma_holds(site_dbs: Sequence[TransactionDB], params: MiningParams, frequent: Levels) -> bool:
    """Every globally frequent itemset is locally frequent at some site."""
    thrs = [support_threshold(params.minsup, len(db)) for db in site_dbs]
    for level in frequent.values():
        for x in level:
            if not any(count_support(db, [x])[x] >= t for db, t in zip(site_dbs, thrs) if len(db)):
                return False
    return True


def enumerate_frequent(site_dbs: Sequence[TransactionDB], params: MiningParams) -> Levels:
    """Brute force: test every itemset of size <= k against the pooled transactions."""
    pooled = [frozenset(t) for db in site_dbs for t in db.transactions]
    thr = support_threshold(params.minsup, len(pooled))
    items = sorted(set().union(*pooled)) if pooled else []
    out: Levels = {}
    for size in range(1, params.k + 1):
        for x in combinations(items, size):
            s = sum(1 for t in pooled if t.issuperset(x))
            if s >= thr:
                out.setdefault(size, {})[x] = s
    return _normalize(out)
