import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError
from sklearn.metrics import adjusted_rand_score

from conftest import exhaustive_frequent, flatten, sse
from gridmine import FDMMiner, GFMMiner, VarianceClustering
from gridmine.datagen import TransactionDB, two_round_instance
from gridmine.fileio import read_points, read_stats, read_transactions, write_points, write_stats, write_transactions
from gridmine.exceptions import ValidationError


def blobs(seed=0, n=200, dims=3):
    rng = np.random.default_rng(seed)
    centers = np.array([[0.0] * dims, [20.0] + [0.0] * (dims - 1), [0.0, 20.0] + [0.0] * (dims - 2)])
    y = np.repeat(np.arange(3), n)
    X = centers[y] + rng.normal(size=(3 * n, dims))
    return X, y


def test_params_roundtrip():
    est = VarianceClustering(n_subclusters=7, tau=3.5, border=2, random_state=4)
    params = est.get_params()
    assert params["n_subclusters"] == 7 and params["tau"] == 3.5
    twin = clone(est)
    assert twin.get_params() == params
    est.set_params(border=9)
    assert est.border == 9
    assert GFMMiner(minsup=0.2, expand="local").get_params()["expand"] == "local"
    assert FDMMiner(k=3).get_params()["k"] == 3


def test_clustering_fit_predict():
    X, y = blobs()
    sites = np.arange(len(X)) % 3
    est = VarianceClustering(n_subclusters=6, random_state=1)
    labels = est.fit_predict(X, sites=sites)
    assert est.n_clusters_ == 3
    assert adjusted_rand_score(y, labels) == 1.0
    assert np.array_equal(est.predict(X), labels)
    assert est.cluster_centers_.shape == (3, 3)
    assert est.payload_bytes_ == 3 * 6 * ((3 + 2) * 8 + 8)
    assert est.total_variance_ == pytest.approx(sum(sse(X[labels == c]) for c in range(3)))
    assert est.session_.rounds == 1


def test_clustering_single_site_default():
    X, y = blobs(seed=2)
    est = VarianceClustering(n_subclusters=5).fit(X)
    assert est.labels_.shape == (len(X),)
    assert est.session_.messages == 0


def test_clustering_not_fitted_and_bad_input():
    with pytest.raises(NotFittedError):
        VarianceClustering().predict(np.zeros((2, 2)))
    X, _ = blobs()
    est = VarianceClustering(n_subclusters=4).fit(X)
    with pytest.raises(ValidationError):
        est.predict(np.zeros((2, 5)))
    with pytest.raises(ValidationError):
        VarianceClustering().fit(X, sites=[0, 1])


def test_miners_match_oracle():
    dbs, minsup, k = two_round_instance()
    g = GFMMiner(minsup=minsup, k=k).fit(dbs)
    f = FDMMiner(minsup=minsup, k=k).fit(dbs)
    assert g.frequent_itemsets_ == f.frequent_itemsets_
    assert flatten(g.frequent_itemsets_) == exhaustive_frequent(dbs, minsup, k)
    assert (g.rounds_, f.rounds_) == (2, 4)
    assert g.bytes_ < f.bytes_


def test_miner_accepts_plain_lists_and_transforms():
    sites = [[[0, 1], [1, 2], [0, 1, 2]], [[0, 1], [2], [0, 1]]]
    m = GFMMiner(minsup=0.5, k=2).fit(sites)
    assert m.frequent_itemsets_ == {1: {(0,): 4, (1,): 5, (2,): 3}, 2: {(0, 1): 4}}
    out = m.transform([[0, 1], [2]])
    assert out.tolist() == [[True, True, False, True], [False, False, True, False]]
    with pytest.raises(NotFittedError):
        FDMMiner().transform([[0]])


def test_file_roundtrips(tmp_path):
    X, _ = blobs(n=5)
    write_points(tmp_path / "p.csv", X)
    assert np.array_equal(read_points(tmp_path / "p.csv").points, X)

    db = TransactionDB(6, [(0, 3), (), (1, 2, 5)])
    write_transactions(tmp_path / "t.txt", db)
    back = read_transactions(tmp_path / "t.txt")
    assert back.transactions == db.transactions and back.n_items == 6

    est = VarianceClustering(n_subclusters=3).fit(X)
    write_stats(tmp_path / "s.csv", est.subclusters_)
    assert read_stats(tmp_path / "s.csv") == est.subclusters_


def test_file_errors(tmp_path):
    (tmp_path / "bad.csv").write_text("1,2\n3,x\n")
    with pytest.raises(ValidationError):
        read_points(tmp_path / "bad.csv")
    (tmp_path / "ragged.csv").write_text("1,2\n3\n")
    with pytest.raises(ValidationError):
        read_points(tmp_path / "ragged.csv")
    (tmp_path / "bad.txt").write_text("1 2\na b\n")
    with pytest.raises(ValidationError):
        read_transactions(tmp_path / "bad.txt")
    (tmp_path / "unsorted.txt").write_text("2 1\n")
    with pytest.raises(ValidationError):
        read_transactions(tmp_path / "unsorted.txt")
    (tmp_path / "stats.csv").write_text("a,b\n")
    with pytest.raises(ValidationError):
        read_stats(tmp_path / "stats.csv")
