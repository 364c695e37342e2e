import json

import numpy as np
import pytest

from conftest import exhaustive_frequent
from gridmine import cli, itemsets
from gridmine.clustering import clustering_payload_bytes
from gridmine.datagen import TransactionDB, two_round_instance
from gridmine.exceptions import ValidationError
from gridmine.fileio import write_points, write_transactions


def run(*argv):
    return cli.main([str(a) for a in argv])


def load(path):
    report = json.loads(path.read_text())
    cli.validate_report(report)
    return report


def strip_created(text):
    report = json.loads(text)
    report.pop("created")
    return report


@pytest.fixture
def instance_files(tmp_path):
    dbs, _, _ = two_round_instance()
    paths = []
    for i, db in enumerate(dbs):
        p = tmp_path / f"site{i}.txt"
        write_transactions(p, db)
        paths.append(p)
    return paths


# -- gen ------------------------------------------------------------------------


def test_gen_splits_into_site_files(tmp_path, capsys):
    out = tmp_path / "data"
    assert run("gen", "transactions", "--sites", 4, "--n", 800, "--out", out) == 0
    files = sorted(out.glob("site_*.txt"))
    assert len(files) == 4
    assert [len(f.read_text().splitlines()) for f in files] == [200] * 4
    printed = capsys.readouterr().out.splitlines()
    assert [line.split("\t")[1] for line in printed] == ["200"] * 4


def test_gen_is_deterministic(tmp_path):
    for d in ("a", "b"):
        assert run("gen", "points", "--sites", 3, "--seed", 5, "--out", tmp_path / d) == 0
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_gen_invalid_spec(tmp_path, capsys):
    cfg = tmp_path / "spec.json"
    cfg.write_text(json.dumps({"n_items": 3, "n_transactions": 10, "patterns": [{"itemset": [0, 7], "prob": 1}]}))
    assert run("gen", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "error" in capsys.readouterr().err
    cfg.write_text(json.dumps({"dims": 2, "components": []}))
    assert run("gen", "--config", cfg, "--out", tmp_path / "o") == 2


def test_gen_unwritable(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run("gen", "--out", blocker / "sub") == 4


# -- mine -----------------------------------------------------------------------


def test_mine_constructed_instance(instance_files, tmp_path):
    out = tmp_path / "r.json"
    assert run("mine", *instance_files, "--minsup", 0.3, "--k", 4, "--algo", "both", "--check", "--out", out) == 0
    report = load(out)
    assert report["accounting"]["gfm"]["rounds"] == 2
    assert report["accounting"]["fdm"]["rounds"] == 4
    assert report["accounting"]["gfm"]["bytes"] < report["accounting"]["fdm"]["bytes"]
    assert report["results"]["equivalent"] is True
    assert report["results"]["oracle_agrees"] is True
    assert report["results"]["gfm"]["frequent"] == report["results"]["fdm"]["frequent"]
    assert report["config"]["sites"] == 4


def test_mine_single_site_matches_centralized(tmp_path):
    rng = np.random.default_rng(1)
    db = TransactionDB(10, [tuple(np.flatnonzero(rng.random(10) < 0.3).tolist()) for _ in range(150)])
    path = tmp_path / "one.txt"
    write_transactions(path, db)
    for algo in ("gfm", "centralized"):
        assert run("mine", path, "--sites", 1, "--minsup", 0.1, "--k", 3, "--algo", algo,
                   "--out", tmp_path / f"{algo}.json") == 0
    g, c = load(tmp_path / "gfm.json"), load(tmp_path / "centralized.json")
    assert g["results"]["gfm"]["counts"] == c["results"]["centralized"]["counts"]
    assert g["results"]["gfm"]["frequent"] == c["results"]["centralized"]["frequent"]


def test_mine_generated_with_oracle(tmp_path):
    out = tmp_path / "r.json"
    assert run("mine", "--algo", "centralized", "--check", "--minsup", 0.15, "--out", out) == 0
    report = load(out)
    assert report["results"]["oracle_agrees"] is True


def test_mine_check_counts_against_independent_oracle(instance_files, tmp_path):
    out = tmp_path / "r.json"
    run("mine", *instance_files, "--minsup", 0.3, "--k", 4, "--algo", "gfm", "--out", out)
    got = {tuple(e["items"]): e["support"]
           for level in load(out)["results"]["gfm"]["frequent"].values() for e in level}
    dbs, minsup, k = two_round_instance()
    assert got == exhaustive_frequent(dbs, minsup, k)


def test_mine_config_and_flag_precedence(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"minsup": 0.5, "k": 2, "algo": "fdm", "sites": 2}))
    out = tmp_path / "r.json"
    assert run("mine", "--config", cfg, "--minsup", 0.2, "--out", out) == 0
    report = load(out)
    assert report["config"]["minsup"] == 0.2
    assert report["config"]["k"] == 2
    assert list(report["accounting"]) == ["fdm"]


def test_mine_dump_log(instance_files, tmp_path):
    log = tmp_path / "log.csv"
    assert run("mine", *instance_files, "--minsup", 0.3, "--algo", "both", "--dump-log", log,
               "--out", tmp_path / "r.json") == 0
    for name in ("gfm", "fdm"):
        lines = (tmp_path / f"log.{name}.csv").read_text().splitlines()
        assert lines[0] == "round,stage,from,to,bytes,seconds"
    report = load(tmp_path / "r.json")
    gfm_lines = (tmp_path / "log.gfm.csv").read_text().splitlines()[1:]
    assert sum(int(l.split(",")[4]) for l in gfm_lines) == report["accounting"]["gfm"]["bytes"]


def test_mine_measured_adds_overhead(instance_files, tmp_path):
    out = tmp_path / "r.json"
    assert run("mine", *instance_files, "--minsup", 0.3, "--algo", "gfm", "--measured", 10, "--out", out) == 0
    (row,) = load(out)["overhead"]
    assert row["task"] == "gfm" and row["measured"] == 10


def test_mine_errors(tmp_path):
    assert run("mine", tmp_path / "missing.txt") == 4
    assert run("mine", "--minsup", 2.0, "--out", tmp_path / "r.json") == 2
    assert run("mine", "--k", 0, "--out", tmp_path / "r.json") == 2
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run("mine", "--config", bad) == 2


def test_mine_equivalence_violation(instance_files, tmp_path, monkeypatch):
    real = itemsets.fdm_run

    def broken(*args, **kwargs):
        res = real(*args, **kwargs)
        res.frequent[1].pop(next(iter(res.frequent[1])))
        return res

    monkeypatch.setattr(itemsets, "fdm_run", broken)
    out = tmp_path / "r.json"
    assert run("mine", *instance_files, "--minsup", 0.3, "--algo", "both", "--out", out) == 3
    assert load(out)["results"]["equivalent"] is False


# -- cluster ----------------------------------------------------------------------


def test_cluster_default_blobs(tmp_path):
    out = tmp_path / "c.json"
    stats = tmp_path / "s.csv"
    assert run("cluster", "--ki", 10, "--out", out, "--dump-stats", stats) == 0
    report = load(out)
    res = report["results"]
    assert res["k_g"] == 4
    assert res["n_subclusters"] == 40
    assert res["payload_bytes"] == 4 * clustering_payload_bytes([None] * 10, 2) == 1600
    # only the three non-aggregation sites send their statistics
    assert report["accounting"]["cluster"]["bytes"] == 3 * 400
    assert len(stats.read_text().splitlines()) == 41


def test_cluster_one_site_no_merges(tmp_path):
    rng = np.random.default_rng(0)
    pts = tmp_path / "p.csv"
    write_points(pts, rng.normal(size=(60, 2)) * 10)
    out = tmp_path / "c.json"
    assert run("cluster", pts, "--sites", 1, "--ki", 6, "--tau", 1e-9, "--out", out) == 0
    res = load(out)["results"]
    assert res["k_g"] == 6 and res["merges"] == 0


def test_cluster_errors(tmp_path):
    pts = tmp_path / "p.csv"
    write_points(pts, np.zeros((5, 2)))
    assert run("cluster", pts, "--sites", 1, "--ki", 6) == 2
    assert run("cluster", "--tau", "big") == 2
    assert run("cluster", tmp_path / "missing.csv") == 4


# -- estimate -----------------------------------------------------------------------


def test_estimate_preset(tmp_path):
    out = tmp_path / "e.json"
    assert run("estimate", "--paper-preset", "--out", out) == 0
    report = load(out)
    rows = [(r["measured"], r["estimated"], r["overhead_pct"]) for r in report["overhead"]]
    assert rows == [(1050, 19.52, 98.1), (521, 424, 18.6), (687, 518, 24.6)]
    assert report["results"]["relative_gain"] == {"measured_fdm_vs_gfm_pct": 24.2, "estimated_fdm_vs_gfm_pct": 18.1}


def test_estimate_single_rows(tmp_path):
    out = tmp_path / "e.json"
    assert run("estimate", "--measured", "30s", "--estimated", "30s", "--out", out) == 0
    assert load(out)["overhead"][0]["overhead_pct"] == 0.0
    assert run("estimate", "--measured", "10s", "--estimated", "12s", "--out", out) == 0
    assert load(out)["overhead"][0]["diagnostic"] == "estimator exceeds measurement"
    assert run("estimate", "--measured", "521min", "--estimated", "424s") == 2
    assert run("estimate") == 2
    assert run("estimate", "--estimated", "3s") == 2


def test_estimate_from_plan(tmp_path):
    plan = tmp_path / "plan.json"
    plan.write_text(json.dumps({"stages": [
        {"activities": [{"site": "Orsay", "compute_cost": 19.0}, {"site": "Nancy", "compute_cost": 12.0}]},
        {"activities": [{"site": "Sophia", "out_messages": [["Orsay", 1319175]]}]},
    ]}))
    out = tmp_path / "e.json"
    assert run("estimate", "--measured", 1050, "--unit", "s", "--plan", plan, "--out", out) == 0
    report = load(out)
    assert report["results"]["estimated_s"] == pytest.approx(19.52, abs=5e-4)
    assert report["overhead"][0]["overhead_pct"] == 98.1


# -- report and determinism ------------------------------------------------------------


def test_report_pretty_prints(instance_files, tmp_path, capsys):
    out = tmp_path / "r.json"
    run("mine", *instance_files, "--minsup", 0.3, "--out", out)
    capsys.readouterr()
    assert run("report", out) == 0
    text = capsys.readouterr().out
    assert "gfm: rounds=2" in text and "fdm: rounds=4" in text


def test_report_rejects_invalid(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "tool": "gridmine"}))
    assert run("report", bad) == 2
    with pytest.raises(ValidationError):
        cli.validate_report({"task": "mine"})


@pytest.mark.parametrize("argv", [
    ["mine", "--algo", "both", "--minsup", 0.12],
    ["mine", "--algo", "gfm", "--sites", 3, "--links", "table2", "--seed", 9],
    ["cluster", "--ki", 8, "--seed", 3],
    ["estimate", "--paper-preset"],
])
def test_reports_are_deterministic(argv, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    assert run(*argv, "--out", a) == 0
    assert run(*argv, "--out", b) == 0
    load(a)
    assert strip_created(a.read_text()) == strip_created(b.read_text())
    ja, jb = a.read_text().splitlines(), b.read_text().splitlines()
    assert [l for l in ja if '"created"' not in l] == [l for l in jb if '"created"' not in l]
