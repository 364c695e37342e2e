"""Variance-based distributed clustering over sub-cluster statistics.

Each site runs k-means into ``k_i`` sub-clusters and ships only
``(size, center, variance)`` per sub-cluster. One aggregation site merges
sub-clusters greedily by smallest Ward increment while that increment stays
under a threshold, then relocates border sub-clusters between global clusters
when doing so lowers the summed variance.

Throughout, "variance" is the un-normalized sum of squared deviations (SSE),
which is what makes the merge formula additive.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Iterable, Sequence, Union

import numpy as np

from gridmine.exceptions import InconsistencyError, ValidationError

ID_BYTES = 8  # 4-byte site id + 4-byte sub-cluster index
FLOAT_BYTES = 8

# relative slack for "variance is zero" checks on subtracted SSEs
_NEG_VARIANCE_RTOL = 1e-9


@dataclass(frozen=True)
class SubClusterStats:
    """Sufficient statistics for one sub-cluster (or an aggregate of several)."""

    site: int
    index: int
    size: int
    center: tuple[float, ...]
    variance: float

    def __post_init__(self):
        object.__setattr__(self, "center", tuple(float(x) for x in self.center))
        if self.size < 1:
            raise ValidationError("sub-cluster size must be >= 1")
        if not self.variance >= 0:
            raise ValidationError(f"sub-cluster variance must be >= 0, got {self.variance}")
        if self.size == 1 and self.variance != 0:
            raise ValidationError("a singleton sub-cluster has zero variance")

    @property
    def id(self) -> tuple[int, int]:
        return (self.site, self.index)

    @property
    def dims(self) -> int:
        return len(self.center)

    @classmethod
    def from_points(cls, points, site: int = 0, index: int = 0) -> "SubClusterStats":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if len(pts) == 0:
            raise ValidationError("cannot summarize an empty point set")
        center = pts.mean(axis=0)
        var = float(((pts - center) ** 2).sum()) if len(pts) > 1 else 0.0
        return cls(site, index, len(pts), tuple(center), var)


def _check_dims(a: SubClusterStats, b: SubClusterStats):
    if a.dims != b.dims:
        raise ValidationError(f"dimension mismatch: {a.dims} vs {b.dims}")


def ward_increment(a: SubClusterStats, b: SubClusterStats) -> float:
    """SSE increase caused by merging ``a`` and ``b``: N_a N_b/(N_a+N_b) * |c_a - c_b|^2."""
    _check_dims(a, b)
    diff = np.subtract(a.center, b.center)
    return a.size * b.size / (a.size + b.size) * float(diff @ diff)


def merge_stats(a: SubClusterStats, b: SubClusterStats) -> SubClusterStats:
    """Exact statistics of the union of two disjoint clusters; keeps ``a``'s id."""
    n = a.size + b.size
    inc = ward_increment(a, b)
    center = (a.size / n) * np.asarray(a.center) + (b.size / n) * np.asarray(b.center)
    return SubClusterStats(a.site, a.index, n, tuple(center), a.variance + b.variance + inc)


def remove_stats(whole: SubClusterStats, part: SubClusterStats) -> SubClusterStats:
    """Inverse of :func:`merge_stats`: the statistics of ``whole`` minus ``part``."""
    _check_dims(whole, part)
    if part.size >= whole.size:
        raise ValidationError("part must be strictly smaller than whole")
    n = whole.size - part.size
    center = (whole.size * np.asarray(whole.center) - part.size * np.asarray(part.center)) / n
    diff = center - np.asarray(part.center)
    inc = part.size * n / whole.size * float(diff @ diff)
    var = whole.variance - part.variance - inc
    slack = _NEG_VARIANCE_RTOL * max(1.0, whole.variance)
    if var < -slack:
        raise InconsistencyError(
            f"removing {part.id} leaves variance {var:.3g}; it is not part of {whole.id}"
        )
    if n == 1:
        if var > slack:
            raise InconsistencyError("a single remaining point must have zero variance")
        var = 0.0
    return SubClusterStats(whole.site, whole.index, n, tuple(center), max(var, 0.0))


def fold_stats(stats: Iterable[SubClusterStats]) -> SubClusterStats:
    it = iter(stats)
    try:
        acc = next(it)
    except StopIteration:
        raise ValidationError("nothing to fold") from None
    for s in it:
        acc = merge_stats(acc, s)
    return acc


def clustering_payload_bytes(stats: Sequence[SubClusterStats], dims: int) -> int:
    """Bytes a site ships: per sub-cluster, center + size + variance as 8-byte values plus an id."""
    return len(stats) * ((dims + 2) * FLOAT_BYTES + ID_BYTES)


# -- local clustering -------------------------------------------------------


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    n_iter: int


def _sq_dists(X, centers):
    return ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)


def _kmeans_pp(X, k, rng):
    n = len(X)
    chosen = [int(rng.integers(n))]
    d2 = ((X - X[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a chosen center
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
    return X[chosen].copy()


def _fill_empty(X, labels, centers, k):
    """Give each empty cluster the point farthest from its own center."""
    counts = np.bincount(labels, minlength=k)
    for c in np.flatnonzero(counts == 0):
        own = ((X - centers[labels]) ** 2).sum(axis=1)
        own[counts[labels] <= 1] = -1.0
        far = int(np.argmax(own))
        counts[labels[far]] -= 1
        labels[far] = c
        counts[c] = 1
        centers[c] = X[far]
    return labels


def kmeans(X, k: int, seed: int = 0, max_iter: int = 100, tol: float = 1e-6) -> KMeansResult:
    """Lloyd's k-means with k-means++ seeding; every returned cluster is nonempty.

    Stops when the summed squared center shift falls below ``tol`` times the
    mean per-feature variance of ``X``.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValidationError("k-means needs a nonempty 2-D point array")
    if not 1 <= k <= len(X):
        raise ValidationError(f"k={k} must lie in [1, {len(X)}]")
    rng = np.random.default_rng(seed)
    centers = _kmeans_pp(X, k, rng)
    tol_abs = tol * float(np.mean(X.var(axis=0)))
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        labels = np.argmin(_sq_dists(X, centers), axis=1)
        labels = _fill_empty(X, labels, centers, k)
        new = np.vstack([X[labels == c].mean(axis=0) for c in range(k)])
        shift = float(((new - centers) ** 2).sum())
        centers = new
        if shift <= tol_abs:
            break
    labels = np.argmin(_sq_dists(X, centers), axis=1)
    labels = _fill_empty(X, labels, centers, k)
    return KMeansResult(labels, centers, n_iter)


def stats_from_labels(X, labels, k: int, site: int = 0) -> list[SubClusterStats]:
    X = np.asarray(X, dtype=float)
    return [SubClusterStats.from_points(X[labels == c], site, c) for c in range(k)]


def local_cluster(points, k_i: int, seed: int = 0, site: int = 0) -> list[SubClusterStats]:
    """k-means the site's points into ``k_i`` sub-clusters and summarize each one exactly."""
    X = getattr(points, "points", points)
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or len(X) == 0:
        raise ValidationError("local clustering needs a nonempty point set")
    if k_i > len(X):
        raise ValidationError(f"k_i={k_i} exceeds the {len(X)} points at site {site}")
    res = kmeans(X, k_i, seed)
    return stats_from_labels(X, res.labels, k_i, site)


# -- global aggregation -----------------------------------------------------


@dataclass
class AggregationParams:
    """Merge threshold, border quota and perturbation settings.

    ``tau="auto"`` means twice the largest input sub-cluster variance.
    ``multi_factor`` adds members whose second-nearest global center is within
    that factor of the nearest to the border candidates; values <= 1 disable it.
    ``quota_by`` chooses whether the border budget is split by member count
    (``"members"``) or by point count (``"points"``).
    """

    tau: Union[float, str] = "auto"
    border: int = 4
    passes: int = 1
    multi_factor: float = 1.1
    quota_by: str = "members"

    def __post_init__(self):
        if self.tau != "auto":
            try:
                self.tau = float(self.tau)
            except (TypeError, ValueError):
                raise ValidationError(f"tau must be a positive number or 'auto', got {self.tau!r}") from None
            if not self.tau > 0:
                raise ValidationError("tau must be > 0")
        if self.border < 0:
            raise ValidationError("border count must be >= 0")
        if self.passes < 1:
            raise ValidationError("perturbation passes must be >= 1")
        if self.quota_by not in ("members", "points"):
            raise ValidationError("quota_by must be 'members' or 'points'")

    def resolve_tau(self, stats: Sequence[SubClusterStats]) -> float:
        if self.tau == "auto":
            return 2.0 * max(s.variance for s in stats)
        return float(self.tau)


@dataclass
class GlobalCluster:
    label: int
    members: tuple[SubClusterStats, ...]
    agg: SubClusterStats

    @property
    def member_ids(self) -> list[tuple[int, int]]:
        return [m.id for m in self.members]


@dataclass
class Move:
    member: tuple[int, int]
    source: int
    target: int
    before: float  # variance sum of the two clusters before the move
    after: float


@dataclass
class GlobalLabeling:
    clusters: list[GlobalCluster]
    merges: list[tuple[int, int, float]] = field(default_factory=list)
    moves: list[Move] = field(default_factory=list)
    tau: float | None = None

    @property
    def total_variance(self) -> float:
        return float(sum(c.agg.variance for c in self.clusters))

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    def label_of(self) -> dict[tuple[int, int], int]:
        return {m.id: c.label for c in self.clusters for m in c.members}

    def validate(self):
        seen = set()
        for c in self.clusters:
            if not c.members:
                raise ValidationError(f"global cluster {c.label} is empty")
            for m in c.members:
                if m.id in seen:
                    raise ValidationError(f"sub-cluster {m.id} labeled twice")
                seen.add(m.id)

    def to_dict(self) -> dict:
        return {
            "clusters": [
                {
                    "label": c.label,
                    "members": [list(i) for i in c.member_ids],
                    "size": c.agg.size,
                    "center": list(c.agg.center),
                    "variance": c.agg.variance,
                }
                for c in self.clusters
            ],
            "total_variance": self.total_variance,
        }


def make_cluster(label, members) -> GlobalCluster:
    members = tuple(sorted(members, key=lambda m: m.id))
    return GlobalCluster(label, members, fold_stats(members))


def _validate_stats(all_stats):
    if not all_stats:
        raise ValidationError("aggregation needs at least one sub-cluster")
    dims = all_stats[0].dims
    ids = set()
    for s in all_stats:
        if s.dims != dims:
            raise ValidationError("all sub-clusters must share dimensionality")
        if s.id in ids:
            raise ValidationError(f"duplicate sub-cluster id {s.id}")
        ids.add(s.id)


def merge_phase(all_stats: Sequence[SubClusterStats], tau: float) -> GlobalLabeling:
    """Greedy Ward merging while the smallest pairwise increment is below ``tau``.

    Ties go to the lexicographically smallest pair of current labels; the
    merged cluster keeps the smaller label.
    """
    stats = sorted(all_stats, key=lambda s: s.id)
    _validate_stats(stats)
    n = len(stats)
    aggs = list(stats)
    members: list[list[SubClusterStats]] = [[s] for s in stats]
    sizes = np.array([s.size for s in stats], dtype=float)
    centers = np.array([s.center for s in stats], dtype=float)
    inc = np.full((n, n), np.inf)
    for i in range(n - 1):
        d2 = ((centers[i + 1:] - centers[i]) ** 2).sum(axis=1)
        inc[i, i + 1:] = sizes[i] * sizes[i + 1:] / (sizes[i] + sizes[i + 1:]) * d2
    active = np.ones(n, dtype=bool)
    merges = []
    while n > 1:
        flat = int(np.argmin(inc))
        i, j = divmod(flat, n)
        best = inc[i, j]
        if not best < tau:
            break
        merges.append((i, j, float(best)))
        aggs[i] = merge_stats(aggs[i], aggs[j])
        members[i].extend(members[j])
        active[j] = False
        inc[j, :] = np.inf
        inc[:, j] = np.inf
        sizes[i] = aggs[i].size
        centers[i] = aggs[i].center
        others = np.flatnonzero(active)
        others = others[others != i]
        d2 = ((centers[others] - centers[i]) ** 2).sum(axis=1)
        row = sizes[i] * sizes[others] / (sizes[i] + sizes[others]) * d2
        lo, hi = others < i, others > i
        inc[others[lo], i] = row[lo]
        inc[i, others[hi]] = row[hi]
    survivors = [k for k in range(n) if active[k]]
    clusters = [
        GlobalCluster(label, tuple(sorted(members[k], key=lambda m: m.id)), aggs[k])
        for label, k in enumerate(survivors)
    ]
    return GlobalLabeling(clusters, merges=merges, tau=tau)


def find_border(cluster: GlobalCluster, quota: int) -> list[tuple[int, int]]:
    """Ids of the members farthest from the cluster center, never the last one."""
    if len(cluster.members) < 2 or quota <= 0:
        return []
    center = np.asarray(cluster.agg.center)
    ranked = sorted(
        cluster.members,
        key=lambda m: (-float(((np.asarray(m.center) - center) ** 2).sum()), m.id),
    )
    return [m.id for m in ranked[: min(quota, len(cluster.members) - 1)]]


def _multi_attributed(cluster, centers, labels, factor, exclude):
    """Members whose second-nearest global center is within ``factor`` of the nearest."""
    if factor <= 1 or len(centers) < 2:
        return []
    own = np.asarray(cluster.agg.center)
    picked = []
    for m in cluster.members:
        if m.id in exclude:
            continue
        d = np.sqrt(((centers - np.asarray(m.center)) ** 2).sum(axis=1))
        first, second = np.partition(d, 1)[:2]
        if second <= factor * first:
            picked.append((-float(((np.asarray(m.center) - own) ** 2).sum()), m.id))
    return [mid for _, mid in sorted(picked)]


def _quota(border, part, whole):
    return max(1, int(math.floor(border * part / whole + 0.5)))


def perturb(labeling: GlobalLabeling, params: AggregationParams) -> GlobalLabeling:
    """Relocate border sub-clusters to the nearest other global cluster when that lowers variance.

    Returns a new labeling; the input is left untouched. Aggregates of the two
    clusters touched by a move are refolded from their members.
    """
    labeling.validate()
    clusters = {c.label: c for c in labeling.clusters}
    moves: list[Move] = []
    if params.border == 0 or len(clusters) < 2:
        return GlobalLabeling(list(clusters.values()), list(labeling.merges), moves, labeling.tau)
    if params.quota_by == "points":
        total = sum(c.agg.size for c in clusters.values())
        quotas = {lab: _quota(params.border, c.agg.size, total) for lab, c in clusters.items()}
    else:
        total = sum(len(c.members) for c in clusters.values())
        quotas = {lab: _quota(params.border, len(c.members), total) for lab, c in clusters.items()}

    for _ in range(params.passes):
        for lab in sorted(clusters):
            labels = sorted(clusters)
            centers = np.array([clusters[x].agg.center for x in labels])
            candidates = find_border(clusters[lab], quotas[lab])
            candidates += _multi_attributed(
                clusters[lab], centers, labels, params.multi_factor, set(candidates)
            )
            for cid in candidates:
                src = clusters[lab]
                if len(src.members) < 2:
                    break
                x = next(m for m in src.members if m.id == cid)
                xc = np.asarray(x.center)
                best_lab, best_d = None, np.inf
                for other in labels:
                    if other == lab:
                        continue
                    d = float(((np.asarray(clusters[other].agg.center) - xc) ** 2).sum())
                    if d < best_d:
                        best_lab, best_d = other, d
                dst = clusters[best_lab]
                before = src.agg.variance + dst.agg.variance
                after = remove_stats(src.agg, x).variance + merge_stats(dst.agg, x).variance
                # require a gain above rounding noise so refolded sums still decrease
                if after < before - 1e-12 * max(before, 1.0):
                    new_src = make_cluster(lab, [m for m in src.members if m.id != cid])
                    new_dst = make_cluster(best_lab, list(dst.members) + [x])
                    clusters[lab], clusters[best_lab] = new_src, new_dst
                    moves.append(Move(cid, lab, best_lab, before,
                                      new_src.agg.variance + new_dst.agg.variance))
    out = GlobalLabeling([clusters[k] for k in sorted(clusters)], list(labeling.merges), moves, labeling.tau)
    out.validate()
    return out


def aggregate(all_stats: Sequence[SubClusterStats], params: AggregationParams | None = None) -> GlobalLabeling:
    """Merging phase followed by the perturbation phase."""
    params = params or AggregationParams()
    all_stats = list(all_stats)
    _validate_stats(all_stats)
    merged = merge_phase(all_stats, params.resolve_tau(all_stats))
    return perturb(merged, params)


# -- distributed driver ------------------------------------------------------


def site_seed(seed: int, site: int) -> int:
    return int(np.random.SeedSequence([seed, site]).generate_state(1, dtype=np.uint64)[0])


@dataclass
class ClusteringRun:
    site_stats: list[list[SubClusterStats]]
    site_labels: list[np.ndarray]
    labeling: GlobalLabeling
    payload_bytes: int
    aggregation_site: int


def run_distributed(
    site_points: Sequence,
    k_i: Union[int, Sequence[int]],
    params: AggregationParams | None,
    session,
    seed: int = 0,
    aggregation_site: int = 0,
) -> ClusteringRun:
    """Local k-means per site, stats shipped to one site in a single round, then aggregation."""
    params = params or AggregationParams()
    n_sites = len(site_points)
    if n_sites != session.n_sites:
        raise ValidationError("session size does not match the number of sites")
    if not 0 <= aggregation_site < n_sites:
        raise ValidationError("aggregation site out of range")
    ks = [k_i] * n_sites if isinstance(k_i, (int, np.integer)) else list(k_i)
    if len(ks) != n_sites:
        raise ValidationError("one k_i per site is required")
    cm = session.cost_model

    site_stats, site_labels, local_cost = [], [], {}
    dims = None
    for site, pts in enumerate(site_points):
        X = np.asarray(getattr(pts, "points", pts), dtype=float)
        if X.ndim != 2 or len(X) == 0:
            raise ValidationError(f"site {site} has no points")
        if dims is None:
            dims = X.shape[1]
        elif X.shape[1] != dims:
            raise ValidationError("all sites must share dimensionality")
        if ks[site] > len(X):
            raise ValidationError(f"k_i={ks[site]} exceeds the {len(X)} points at site {site}")
        t0 = time.perf_counter()
        res = kmeans(X, ks[site], site_seed(seed, site))
        stats = stats_from_labels(X, res.labels, ks[site], site)
        elapsed = time.perf_counter() - t0
        modeled = res.n_iter * len(X) * ks[site] * dims * cm.distance
        local_cost[site] = session.cost(modeled, elapsed)
        site_stats.append(stats)
        site_labels.append(res.labels)
    session.local_stage(local_cost, label="local clustering")

    exchanges = [
        (site, aggregation_site, clustering_payload_bytes(stats, dims))
        for site, stats in enumerate(site_stats)
        if site != aggregation_site
    ]
    session.barrier_round(exchanges, label="send statistics")

    flat = [s for stats in site_stats for s in stats]
    t0 = time.perf_counter()
    labeling = aggregate(flat, params)
    elapsed = time.perf_counter() - t0
    n = len(flat)
    modeled = (n * (n - 1) / 2 + n * n) * cm.pair_eval
    session.local_stage({aggregation_site: session.cost(modeled, elapsed)}, label="merging")
    payload = sum(clustering_payload_bytes(stats, dims) for stats in site_stats)
    return ClusteringRun(site_stats, site_labels, labeling, payload, aggregation_site)
