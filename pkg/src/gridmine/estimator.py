"""Analytical run-time estimates and grid overhead percentages.

An ideal run time is the sum over stages of the slowest parallel activity.
Overhead is the share of a measured run time that the estimate does not
explain: ``100 * (measured - estimated) / measured``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence, Union

from gridmine.exceptions import ValidationError
from gridmine.gridsim import LinkMatrix, StagePlan, comm_time, run_stages

UNITS = ("s", "min", "h")

# (task, measured, estimated, unit) as published in the results summary
PUBLISHED_ROWS = (
    ("V-Clustering", 1050.0, 19.52, "s"),
    ("GFM", 521.0, 424.0, "min"),
    ("FDM", 687.0, 518.0, "min"),
)


class UnitMismatchError(ValidationError):
    pass


@dataclass(frozen=True)
class Duration:
    value: float
    unit: str = "s"

    def __post_init__(self):
        if self.unit not in UNITS:
            raise ValidationError(f"unknown time unit {self.unit!r}; use one of {UNITS}")

    @classmethod
    def parse(cls, text: str, default_unit: str | None = None) -> "Duration":
        """``"1050s"``, ``"521min"``, ``"2.5 h"``; bare numbers need ``default_unit``."""
        m = re.fullmatch(r"\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-z]*)\s*", str(text))
        if not m:
            raise ValidationError(f"cannot parse duration {text!r}")
        unit = m.group(2) or default_unit
        if unit is None:
            raise ValidationError(f"duration {text!r} has no unit")
        return cls(float(m.group(1)), unit)


DurationLike = Union[Duration, float, int, str]


def _as_duration(d: DurationLike, unit: str | None) -> Duration:
    if isinstance(d, Duration):
        return d
    if isinstance(d, str):
        return Duration.parse(d, unit)
    return Duration(float(d), unit or "s")


@dataclass(frozen=True)
class OverheadReport:
    task: str
    measured: float
    estimated: float
    unit: str
    overhead_pct: float  # unrounded

    @property
    def rounded_pct(self) -> float:
        return round(self.overhead_pct, 1)

    @property
    def estimator_exceeds_measurement(self) -> bool:
        return self.estimated > self.measured

    def to_dict(self) -> dict:
        out = {
            "task": self.task,
            "measured": self.measured,
            "estimated": self.estimated,
            "unit": self.unit,
            "overhead_pct": self.rounded_pct,
        }
        if self.estimator_exceeds_measurement:
            out["diagnostic"] = "estimator exceeds measurement"
        return out


def overhead(
    measured: DurationLike, estimated: DurationLike, unit: str | None = None, task: str = ""
) -> OverheadReport:
    """Share of ``measured`` not accounted for by ``estimated``, in percent.

    Both durations must carry the same unit; a negative result (estimate above
    the measurement) is reported, with a diagnostic flag, rather than raised.
    """
    m, e = _as_duration(measured, unit), _as_duration(estimated, unit)
    if m.unit != e.unit:
        raise UnitMismatchError(f"measured is in {m.unit} but estimated is in {e.unit}")
    if not m.value > 0:
        raise ValidationError("measured duration must be > 0")
    if e.value < 0:
        raise ValidationError("estimated duration must be >= 0")
    pct = 100.0 * (m.value - e.value) / m.value
    return OverheadReport(task, m.value, e.value, m.unit, pct)


def relative_gain(a: float, b: float) -> float:
    """How much faster ``b`` is than ``a``, as a percentage of ``a``."""
    if not a > 0:
        raise ValidationError("reference duration must be > 0")
    return 100.0 * (a - b) / a


def estimate_clustering(
    local_times: Sequence[float],
    merge_time: float,
    stats_payloads: Sequence[int],
    links: LinkMatrix,
    aggregation_site: int = 0,
    placement: Sequence[str] | None = None,
) -> float:
    """Slowest local clustering + slowest statistics transfer + merging.

    Sites are process ids placed onto link-matrix sites round-robin unless
    ``placement`` is given. A site with an empty payload sends nothing.
    """
    n = len(local_times)
    if n == 0:
        raise ValidationError("at least one site is required")
    if len(stats_payloads) != n:
        raise ValidationError("one payload per site is required")
    if not 0 <= aggregation_site < n:
        raise ValidationError("aggregation site out of range")
    if placement is None:
        placement = [links.sites[i % len(links.sites)] for i in range(n)]
    worst_comm = max(
        (
            comm_time(int(p), placement[i], placement[aggregation_site], links)
            for i, p in enumerate(stats_payloads)
            if i != aggregation_site and p > 0
        ),
        default=0.0,
    )
    return max(local_times) + worst_comm + merge_time


def estimate_itemsets(plan: StagePlan, links: LinkMatrix, placement: Sequence[str] | None = None) -> float:
    return run_stages(plan, links, placement).makespan


def paper_preset() -> list[OverheadReport]:
    return [overhead(m, e, unit, task) for task, m, e, unit in PUBLISHED_ROWS]
