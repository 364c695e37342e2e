"""Scikit-learn style front ends for the distributed algorithms."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from gridmine import clustering, itemsets
from gridmine.datagen import TransactionDB
from gridmine.exceptions import ValidationError
from gridmine.gridsim import GridSession, resolve_links


def _split_by_site(X, sites):
    """Row indices per site, sites ordered by their sorted ids."""
    if sites is None:
        return [np.arange(len(X))], [0]
    sites = np.asarray(sites)
    if sites.shape != (len(X),):
        raise ValidationError("sites must give one site id per row")
    ids = np.unique(sites)
    return [np.flatnonzero(sites == s) for s in ids], ids.tolist()


class VarianceClustering(ClusterMixin, BaseEstimator):
    """Distributed clustering by merging per-site k-means sub-clusters.

    Parameters
    ----------
    n_subclusters : int or list of int
        Sub-clusters per site (``k_i``).
    tau : float or "auto"
        Merge while the smallest Ward increment is below this; "auto" uses
        twice the largest sub-cluster variance.
    border : int
        Border candidates examined across all global clusters per pass.
    perturbation_passes : int
    multi_factor : float
        Second-nearest/nearest center ratio under which a member also becomes a
        candidate; <= 1 disables this.
    quota_by : {"members", "points"}
    aggregation_site : int
        Position (in sorted site-id order) of the site doing the merge.
    links : LinkMatrix, path or "table2"
    random_state : int

    Attributes
    ----------
    labels_ : ndarray of shape (n_samples,)
        Global label of each training point, through its sub-cluster.
    subclusters_ : list of SubClusterStats
    labeling_ : GlobalLabeling
    n_clusters_ : int
    cluster_centers_ : ndarray of shape (n_clusters_, n_features)
    payload_bytes_ : int
        Statistics bytes produced over all sites.
    session_ : GridSession
    """

    def __init__(
        self,
        n_subclusters=20,
        tau="auto",
        border=4,
        perturbation_passes=1,
        multi_factor=1.1,
        quota_by="members",
        aggregation_site=0,
        links="table2",
        timing="modeled",
        random_state=0,
    ):
        self.n_subclusters = n_subclusters
        self.tau = tau
        self.border = border
        self.perturbation_passes = perturbation_passes
        self.multi_factor = multi_factor
        self.quota_by = quota_by
        self.aggregation_site = aggregation_site
        self.links = links
        self.timing = timing
        self.random_state = random_state

    def _params(self):
        return clustering.AggregationParams(
            tau=self.tau,
            border=self.border,
            passes=self.perturbation_passes,
            multi_factor=self.multi_factor,
            quota_by=self.quota_by,
        )

    def fit(self, X, y=None, sites=None):
        X = check_array(X, dtype=float)
        groups, site_ids = _split_by_site(X, sites)
        params = self._params()
        session = GridSession(len(groups), resolve_links(self.links), timing=self.timing)
        run = clustering.run_distributed(
            [X[g] for g in groups],
            self.n_subclusters,
            params,
            session,
            seed=int(self.random_state or 0),
            aggregation_site=self.aggregation_site,
        )
        session.close()
        label_of = run.labeling.label_of()
        labels = np.empty(len(X), dtype=int)
        for site, (g, local) in enumerate(zip(groups, run.site_labels)):
            lut = np.array([label_of[(site, c)] for c in range(len(run.site_stats[site]))])
            labels[g] = lut[local]

        self.site_ids_ = site_ids
        self.subclusters_ = [s for stats in run.site_stats for s in stats]
        self.labeling_ = run.labeling
        self.labels_ = labels
        self.n_clusters_ = run.labeling.n_clusters
        self.cluster_centers_ = np.array([c.agg.center for c in run.labeling.clusters])
        self.total_variance_ = run.labeling.total_variance
        self.payload_bytes_ = run.payload_bytes
        self.session_ = session
        self.makespan_ = session.makespan
        self._sub_centers = np.array([s.center for s in self.subclusters_])
        self._sub_labels = np.array([label_of[s.id] for s in self.subclusters_])
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        """Label of the nearest sub-cluster center, over all sites."""
        check_is_fitted(self, "labeling_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValidationError(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        d2 = ((X[:, None, :] - self._sub_centers[None, :, :]) ** 2).sum(axis=2)
        return self._sub_labels[np.argmin(d2, axis=1)]

    def fit_predict(self, X, y=None, sites=None):
        return self.fit(X, sites=sites).labels_


def _as_dbs(X):
    """Accept TransactionDBs or plain lists of transactions, one entry per site."""
    if isinstance(X, TransactionDB):
        X = [X]
    dbs = list(X)
    if not dbs:
        raise ValidationError("at least one site is required")
    if all(isinstance(db, TransactionDB) for db in dbs):
        return dbs
    n_items = 1 + max((i for db in dbs for t in db for i in t), default=0)
    return [db if isinstance(db, TransactionDB)
            else TransactionDB(n_items, [tuple(sorted(set(t))) for t in db]) for db in dbs]


class _DistributedMiner(BaseEstimator):
    def __init__(self, minsup=0.1, k=4, links="table2", timing="modeled"):
        self.minsup = minsup
        self.k = k
        self.links = links
        self.timing = timing

    def _run(self, dbs, params, session):
        raise NotImplementedError

    def fit(self, X, y=None):
        """Mine one dataset per site; ``X`` is a list of TransactionDB or of transaction lists."""
        dbs = _as_dbs(X)
        params = itemsets.MiningParams(float(self.minsup), int(self.k))
        session = GridSession(len(dbs), resolve_links(self.links), timing=self.timing)
        result = self._run(dbs, params, session)
        session.close()
        self.result_ = result
        self.frequent_itemsets_ = result.frequent
        self.rounds_ = result.rounds
        self.messages_ = result.messages
        self.bytes_ = result.bytes
        self.makespan_ = result.makespan
        self.session_ = session
        return self

    def transform(self, X):
        """Per-transaction indicator matrix over the mined itemsets (sorted by size, then items)."""
        check_is_fitted(self, "result_")
        cols = [x for _, level in sorted(self.frequent_itemsets_.items()) for x in level]
        out = np.zeros((len(X), len(cols)), dtype=bool)
        for r, t in enumerate(X):
            t = set(t)
            for c, x in enumerate(cols):
                out[r, c] = t.issuperset(x)
        return out


class GFMMiner(_DistributedMiner):
    """Local Apriori at each site followed by top-down global reconciliation.

    Attributes
    ----------
    frequent_itemsets_ : dict of int -> dict of tuple -> int
        Globally frequent itemsets by size, with global supports.
    rounds_, messages_, bytes_ : int
        Synchronization rounds and traffic recorded by the grid session.
    makespan_ : float
        Modeled (or measured) stage-max run time in seconds.
    """

    def __init__(self, minsup=0.1, k=4, links="table2", timing="modeled", expand="all"):
        super().__init__(minsup, k, links, timing)
        self.expand = expand

    def _run(self, dbs, params, session):
        return itemsets.gfm_run(dbs, params, session, expand=self.expand)


class FDMMiner(_DistributedMiner):
    """Level-wise FDM baseline: one broadcast/poll round per itemset size."""

    def _run(self, dbs, params, session):
        return itemsets.fdm_run(dbs, params, session)
