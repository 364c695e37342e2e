"""Deterministic multi-site grid simulator.

Sites exchange data only through a :class:`GridSession`; every exchange is
part of a barrier-synchronized round and every message is timed against a
:class:`LinkMatrix`. Makespan is the sum over stages of the slowest activity
in that stage, with no queuing or contention.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple, Sequence, Union

import numpy as np

from gridmine.exceptions import SessionStateError, ValidationError

INTRA_SITE_BANDWIDTH_MBPS = 941.0
INTRA_SITE_LATENCY_MS = 0.07

TABLE2_SITES = ("Orsay", "Toulouse", "Rennes", "Nancy", "Sophia")
# row = sender, column = receiver; diagonal filled with intra-site values
TABLE2_BANDWIDTH_MBPS = (
    (0.0, 16.15, 57.73, 90.77, 17.63),
    (38.97, 0.0, 26.08, 28.89, 35.74),
    (66.33, 12.71, 0.0, 44.63, 26.96),
    (106.63, 14.13, 44.54, 0.0, 30.01),
    (21.45, 17.41, 26.93, 30.14, 0.0),
)
TABLE2_LATENCY_MS = (
    (0.0, 15, 8, 5, 28),
    (15, 0.0, 19, 17, 14),
    (8, 19, 0.0, 11, 19),
    (5, 17, 11, 0.0, 17),
    (28, 14, 19, 17, 0.0),
)

SiteRef = Union[int, str]


@dataclass(frozen=True, eq=False)
class LinkMatrix:
    """Directed bandwidth (Mb/s, 10^6 bit/s) and latency (ms) between sites.

    The diagonal always carries the intra-site values. ``overhead`` scales
    payload bytes to account for framing; 1.0 means raw payload only.
    """

    sites: tuple[str, ...]
    bandwidth_mbps: np.ndarray
    latency_ms: np.ndarray
    overhead: float = 1.0

    def __post_init__(self):
        sites = tuple(str(s) for s in self.sites)
        n = len(sites)
        if n == 0:
            raise ValidationError("link matrix needs at least one site")
        if len(set(sites)) != n:
            raise ValidationError("duplicate site names in link matrix")
        bw = np.array(self.bandwidth_mbps, dtype=float)
        lat = np.array(self.latency_ms, dtype=float)
        if bw.shape != (n, n) or lat.shape != (n, n):
            raise ValidationError(
                f"link matrix must be {n}x{n}, got {bw.shape} and {lat.shape}"
            )
        np.fill_diagonal(bw, INTRA_SITE_BANDWIDTH_MBPS)
        np.fill_diagonal(lat, INTRA_SITE_LATENCY_MS)
        if not np.all(np.isfinite(bw)) or np.any(bw <= 0):
            raise ValidationError("all bandwidths must be finite and > 0")
        if not np.all(np.isfinite(lat)) or np.any(lat < 0):
            raise ValidationError("all latencies must be finite and >= 0")
        if not self.overhead > 0:
            raise ValidationError("overhead multiplier must be > 0")
        bw.setflags(write=False)
        lat.setflags(write=False)
        object.__setattr__(self, "sites", sites)
        object.__setattr__(self, "bandwidth_mbps", bw)
        object.__setattr__(self, "latency_ms", lat)

    @classmethod
    def table2(cls, overhead: float = 1.0) -> "LinkMatrix":
        """The five-site Grid'5000 averages used as the default testbed."""
        return cls(TABLE2_SITES, TABLE2_BANDWIDTH_MBPS, TABLE2_LATENCY_MS, overhead)

    @classmethod
    def single_site(cls, name: str = "local") -> "LinkMatrix":
        return cls((name,), [[0.0]], [[0.0]])

    @classmethod
    def from_dict(cls, data: Mapping) -> "LinkMatrix":
        try:
            return cls(
                tuple(data["sites"]),
                data["bandwidth_mbps"],
                data["latency_ms"],
                float(data.get("overhead", 1.0)),
            )
        except KeyError as exc:
            raise ValidationError(f"link matrix file missing field {exc}") from None

    @classmethod
    def load(cls, path) -> "LinkMatrix":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        out = {
            "sites": list(self.sites),
            "bandwidth_mbps": self.bandwidth_mbps.tolist(),
            "latency_ms": self.latency_ms.tolist(),
        }
        if self.overhead != 1.0:
            out["overhead"] = self.overhead
        return out

    def index(self, site: SiteRef) -> int:
        if isinstance(site, (int, np.integer)) and not isinstance(site, bool):
            if 0 <= site < len(self.sites):
                return int(site)
        elif site in self.sites:
            return self.sites.index(site)
        raise ValidationError(f"unknown site {site!r}")


def resolve_links(spec) -> LinkMatrix:
    """Accept a LinkMatrix, ``None``/``"table2"`` for the default, or a JSON path."""
    if isinstance(spec, LinkMatrix):
        return spec
    if spec is None or spec in ("table2", "table2-default"):
        return LinkMatrix.table2()
    return LinkMatrix.load(spec)


def comm_time(nbytes: int, src: SiteRef, dst: SiteRef, links: LinkMatrix) -> float:
    """Seconds to move ``nbytes`` from ``src`` to ``dst``: latency + size/bandwidth."""
    if nbytes < 0:
        raise ValidationError("byte count must be >= 0")
    i, j = links.index(src), links.index(dst)
    bits = nbytes * links.overhead * 8.0
    return links.latency_ms[i, j] / 1000.0 + bits / (links.bandwidth_mbps[i, j] * 1e6)


@dataclass
class Activity:
    """One site's work within a stage: compute time plus its outgoing sends."""

    site: SiteRef
    compute_cost: float = 0.0
    out_messages: list[tuple[SiteRef, int]] = field(default_factory=list)


@dataclass
class Stage:
    activities: list[Activity] = field(default_factory=list)
    round: int | None = None
    label: str = ""


@dataclass
class StagePlan:
    stages: list[Stage] = field(default_factory=list)

    def validate(self):
        if not self.stages:
            raise ValidationError("stage plan is empty")
        for stage in self.stages:
            for act in stage.activities:
                if act.compute_cost < 0:
                    raise ValidationError("compute costs must be >= 0")
                for _, nbytes in act.out_messages:
                    if nbytes < 0:
                        raise ValidationError("message sizes must be >= 0")

    @classmethod
    def from_stage_maxima(cls, maxima: Sequence[float]) -> "StagePlan":
        """A message-free plan with one single-activity stage per value."""
        return cls([Stage([Activity(0, float(m))]) for m in maxima])

    @classmethod
    def from_dict(cls, data: Mapping) -> "StagePlan":
        stages = []
        for st in data["stages"]:
            acts = [
                Activity(
                    a["site"],
                    float(a.get("compute_cost", 0.0)),
                    [(m[0], int(m[1])) for m in a.get("out_messages", [])],
                )
                for a in st["activities"]
            ]
            stages.append(Stage(acts, st.get("round"), st.get("label", "")))
        return cls(stages)


class MessageRecord(NamedTuple):
    round: int | None
    stage: int
    src: SiteRef
    dst: SiteRef
    nbytes: int
    seconds: float


@dataclass
class AccountingLog:
    """Every message sent, in canonical (stage, from, to) order."""

    records: list[MessageRecord] = field(default_factory=list)
    rounds: int = 0

    @property
    def messages(self) -> int:
        return len(self.records)

    @property
    def bytes(self) -> int:
        return sum(r.nbytes for r in self.records)

    def per_round(self) -> dict[int, dict[str, int]]:
        out: dict[int, dict[str, int]] = {}
        for r in self.records:
            if r.round is None:
                continue
            entry = out.setdefault(r.round, {"messages": 0, "bytes": 0})
            entry["messages"] += 1
            entry["bytes"] += r.nbytes
        return out

    def per_link_bytes(self) -> dict[tuple, int]:
        out: dict[tuple, int] = {}
        for r in self.records:
            out[(r.src, r.dst)] = out.get((r.src, r.dst), 0) + r.nbytes
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["round", "stage", "from", "to", "bytes", "seconds"])
        for r in self.records:
            writer.writerow(
                ["" if r.round is None else r.round, r.stage, r.src, r.dst,
                 r.nbytes, repr(float(r.seconds))]
            )
        return buf.getvalue()

    def dump(self, path):
        Path(path).write_text(self.to_csv())


@dataclass
class StageResult:
    makespan: float
    log: AccountingLog
    stage_times: list[float]


def _site_key(site):
    if isinstance(site, (int, np.integer)):
        return (0, int(site), "")
    return (1, 0, str(site))


def run_stages(
    plan: StagePlan,
    links: LinkMatrix,
    placement: Sequence[str] | None = None,
) -> StageResult:
    """Sum over stages of the slowest activity (compute + its own sends).

    ``placement`` maps integer process ids to link-matrix site names; without
    it, activity sites must themselves be link-matrix names or indices.
    """
    plan.validate()

    def where(site):
        if placement is None:
            return site
        return placement[site]

    records = []
    stage_times = []
    for s_idx, stage in enumerate(plan.stages):
        worst = 0.0
        stage_records = []
        for act in stage.activities:
            t = act.compute_cost
            for dst, nbytes in act.out_messages:
                secs = comm_time(nbytes, where(act.site), where(dst), links)
                t += secs
                stage_records.append(
                    MessageRecord(stage.round, s_idx, act.site, dst, int(nbytes), secs)
                )
            worst = max(worst, t)
        stage_records.sort(key=lambda r: (_site_key(r.src), _site_key(r.dst)))
        records.extend(stage_records)
        stage_times.append(worst)
    rounds = len({s.round for s in plan.stages if s.round is not None})
    return StageResult(float(sum(stage_times)), AccountingLog(records, rounds), stage_times)


@dataclass(frozen=True)
class CostModel:
    """Modeled compute costs in seconds per elementary operation."""

    support_check: float = 1e-8  # one (itemset, transaction) containment test
    distance: float = 1e-9  # one point-center coordinate in a k-means pass
    pair_eval: float = 1e-9  # one Ward increment evaluated during merging


class Message(NamedTuple):
    src: int
    dst: int
    nbytes: int
    substage: int = 0


@dataclass
class RoundRecord:
    index: int
    messages: int
    bytes: int


class GridSession:
    """Only channel for cross-site data; counts rounds, messages and bytes.

    Sites are integer process ids ``0..n_sites-1`` placed onto link-matrix
    sites round-robin unless ``placement`` is given. With ``timing="measured"``
    protocols report wall-clock compute instead of modeled costs.
    """

    def __init__(
        self,
        n_sites: int,
        links: LinkMatrix | None = None,
        placement: Sequence[str] | None = None,
        timing: str = "modeled",
        cost_model: CostModel | None = None,
    ):
        if n_sites < 1:
            raise ValidationError("a session needs at least one site")
        if timing not in ("modeled", "measured"):
            raise ValidationError(f"timing must be 'modeled' or 'measured', got {timing!r}")
        self.n_sites = n_sites
        self.links = links if links is not None else LinkMatrix.table2()
        if placement is None:
            placement = [self.links.sites[i % len(self.links.sites)] for i in range(n_sites)]
        if len(placement) != n_sites:
            raise ValidationError("placement must name one link site per process")
        for name in placement:
            self.links.index(name)
        self.placement = list(placement)
        self.timing = timing
        self.cost_model = cost_model or CostModel()
        self.plan = StagePlan()
        self.rounds = 0
        self.closed = False

    def _check_open(self):
        if self.closed:
            raise SessionStateError("session is closed")

    def _check_site(self, site):
        if not (isinstance(site, (int, np.integer)) and 0 <= site < self.n_sites):
            raise ValidationError(f"unknown site {site!r}")

    def cost(self, modeled: float, measured: float) -> float:
        return measured if self.timing == "measured" else modeled

    def local_stage(self, compute: Mapping[int, float], label: str = "") -> None:
        """A compute-only stage outside any synchronization round."""
        self._check_open()
        acts = []
        for site in sorted(compute):
            self._check_site(site)
            acts.append(Activity(site, float(compute[site])))
        self.plan.stages.append(Stage(acts, None, label))

    def barrier_round(
        self,
        exchanges: Sequence[tuple] = (),
        compute: Mapping[int, float] | Sequence[Mapping[int, float]] | None = None,
        label: str = "",
    ) -> RoundRecord:
        """Run one synchronization round.

        ``exchanges`` are ``(from, to, bytes)`` or ``(from, to, bytes, substage)``;
        each substage becomes one stage of the timeline. ``compute`` is a
        ``{site: seconds}`` mapping for substage 0 or a list indexed by substage.
        """
        self._check_open()
        msgs = [Message(*e) for e in exchanges]
        for m in msgs:
            self._check_site(m.src)
            self._check_site(m.dst)
            if m.src == m.dst:
                raise ValidationError("a site cannot message itself")
            if m.nbytes < 0 or m.substage < 0:
                raise ValidationError("byte counts and substages must be >= 0")
        if compute is None:
            compute = []
        elif isinstance(compute, Mapping):
            compute = [compute]
        n_sub = max([len(compute)] + [m.substage + 1 for m in msgs] + [1])
        self.rounds += 1
        index = self.rounds
        for sub in range(n_sub):
            costs = compute[sub] if sub < len(compute) else {}
            outgoing: dict[int, list] = {}
            for m in sorted(msgs, key=lambda m: (m.src, m.dst)):
                if m.substage == sub:
                    outgoing.setdefault(m.src, []).append((m.dst, int(m.nbytes)))
            acts = []
            for site in sorted(set(costs) | set(outgoing)):
                self._check_site(site)
                acts.append(Activity(site, float(costs.get(site, 0.0)), outgoing.get(site, [])))
            self.plan.stages.append(Stage(acts, index, label))
        return RoundRecord(index, len(msgs), sum(int(m.nbytes) for m in msgs))

    def close(self) -> None:
        self.closed = True

    def result(self) -> StageResult:
        if not self.plan.stages:
            return StageResult(0.0, AccountingLog([], self.rounds), [])
        res = run_stages(self.plan, self.links, self.placement)
        res.log.rounds = self.rounds
        return res

    @property
    def log(self) -> AccountingLog:
        return self.result().log

    @property
    def makespan(self) -> float:
        return self.result().makespan

    @property
    def messages(self) -> int:
        return self.log.messages

    @property
    def bytes(self) -> int:
        return self.log.bytes
