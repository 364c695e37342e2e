"""Command-line experiment runner.

Subcommands: ``gen``, ``mine``, ``cluster``, ``estimate``, ``report``.
Settings come from an optional JSON ``--config`` file; command-line flags
override it. Exit codes: 0 ok, 2 validation, 3 equivalence violation, 4 I/O.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

from gridmine import __version__, clustering, estimator, fileio, itemsets
from gridmine.datagen import (
    MixtureSpec,
    PointSet,
    TransactionDB,
    TransactionSpec,
    gen_gaussian_mixture,
    gen_transactions,
    partition,
    spec_from_dict,
)
from gridmine.exceptions import EquivalenceError, ValidationError
from gridmine.gridsim import GridSession, StagePlan, resolve_links

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_EQUIVALENCE = 3
EXIT_IO = 4

SCHEMA_VERSION = 1

DEFAULT_TRANSACTIONS = {
    "n_items": 20,
    "n_transactions": 2000,
    "patterns": [
        {"itemset": [0, 1, 2, 3], "prob": 0.35},
        {"itemset": [2, 5, 7], "prob": 0.25},
        {"itemset": [8, 9], "prob": 0.3},
        {"itemset": [4, 11, 12, 15], "prob": 0.15},
    ],
    "noise_prob": 0.05,
    "seed": 0,
}

DEFAULT_MIXTURE = {
    "dims": 2,
    "components": [
        {"center": [-10.0, -10.0], "stddev": 1.0, "count": 1000},
        {"center": [-10.0, 10.0], "stddev": 1.0, "count": 1000},
        {"center": [10.0, -10.0], "stddev": 1.0, "count": 1000},
        {"center": [10.0, 10.0], "stddev": 1.0, "count": 1000},
    ],
    "seed": 0,
}

MINE_DEFAULTS = {
    "sites": 4, "minsup": 0.1, "k": 4, "algo": "both", "links": "table2",
    "seed": 0, "partition": "round_robin", "timing": "modeled",
}
CLUSTER_DEFAULTS = {
    "sites": 4, "ki": 10, "tau": "auto", "border": 4, "passes": 1, "multi_factor": 1.1,
    "links": "table2", "seed": 0, "partition": "round_robin", "timing": "modeled",
    "aggregation_site": 0,
}


def _load_config(path) -> dict:
    if path is None:
        return {}
    with open(path) as fh:
        try:
            cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(cfg, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return cfg


def _resolve(args, defaults: dict, flag_names) -> dict:
    cfg = dict(defaults)
    cfg.update(_load_config(args.config))
    for name in flag_names:
        value = getattr(args, name, None)
        if value is not None and value is not False:
            cfg[name] = value
    if getattr(args, "inputs", None):
        cfg["inputs"] = list(args.inputs)
    return cfg


def _positive_int(name, value):
    try:
        value = int(value)
    except (TypeError, ValueError):
        raise ValidationError(f"{name} must be an integer") from None
    if value < 1:
        raise ValidationError(f"{name} must be >= 1")
    return value


def _new_report(task: str, seed: int, config: dict) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": "gridmine",
        "tool_version": __version__,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "task": task,
        "seed": int(seed),
        "config": config,
        "results": {},
    }


def _emit(report: dict, out) -> None:
    text = json.dumps(report, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _accounting(session) -> dict:
    res = session.result()
    return {
        "rounds": session.rounds,
        "messages": res.log.messages,
        "bytes": res.log.bytes,
        "makespan_s": res.makespan,
        "per_round": {str(k): v for k, v in res.log.per_round().items()},
    }


def _log_path(base, name, multiple):
    if not multiple:
        return base
    p = Path(base)
    return p.with_name(f"{p.stem}.{name}{p.suffix or '.csv'}")


def load_schema() -> dict:
    text = resources.files("gridmine").joinpath("schema/run_report.schema.json").read_text()
    return json.loads(text)


def validate_report(report: dict) -> None:
    import jsonschema

    try:
        jsonschema.validate(report, load_schema())
    except jsonschema.ValidationError as exc:
        raise ValidationError(f"report does not match schema: {exc.message}") from None


# -- gen ---------------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.config:
        spec = spec_from_dict(_load_config(args.config))
    elif args.kind == "points":
        spec = MixtureSpec.from_dict(DEFAULT_MIXTURE)
    else:
        spec = TransactionSpec.from_dict(DEFAULT_TRANSACTIONS)
    if args.seed is not None:
        spec = type(spec).from_dict({**spec.to_dict(), "seed": args.seed})
    if args.n is not None and isinstance(spec, TransactionSpec):
        spec = TransactionSpec.from_dict({**spec.to_dict(), "n_transactions": args.n})
    n_sites = _positive_int("--sites", args.sites if args.sites is not None else 4)
    data = gen_gaussian_mixture(spec) if isinstance(spec, MixtureSpec) else gen_transactions(spec)
    parts = partition(data, n_sites, args.strategy, spec.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i, part in enumerate(parts):
        if isinstance(part, PointSet):
            path = out / f"site_{i:03d}.csv"
            fileio.write_points(path, part)
        else:
            path = out / f"site_{i:03d}.txt"
            fileio.write_transactions(path, part)
        print(f"{path}\t{len(part)}")
    return EXIT_OK


# -- data loading ------------------------------------------------------------


def _transaction_sites(cfg) -> list[TransactionDB]:
    n_sites = _positive_int("sites", cfg["sites"])
    inputs = cfg.get("inputs")
    if inputs:
        dbs = [fileio.read_transactions(p) for p in inputs]
        n_items = max(db.n_items for db in dbs)
        dbs = [TransactionDB(n_items, db.transactions) for db in dbs]
        if len(dbs) == 1 and n_sites > 1:
            return partition(dbs[0], n_sites, cfg["partition"], int(cfg["seed"]))
        cfg["sites"] = len(dbs)
        return dbs
    spec = TransactionSpec.from_dict(cfg.get("data", DEFAULT_TRANSACTIONS))
    cfg["data"] = spec.to_dict()
    return partition(gen_transactions(spec), n_sites, cfg["partition"], int(cfg["seed"]))


def _point_sites(cfg) -> list[PointSet]:
    n_sites = _positive_int("sites", cfg["sites"])
    inputs = cfg.get("inputs")
    if inputs:
        sets = [fileio.read_points(p) for p in inputs]
        if len(sets) == 1 and n_sites > 1:
            return partition(sets[0], n_sites, cfg["partition"], int(cfg["seed"]))
        cfg["sites"] = len(sets)
        return sets
    spec = MixtureSpec.from_dict(cfg.get("data", DEFAULT_MIXTURE))
    cfg["data"] = spec.to_dict()
    return partition(gen_gaussian_mixture(spec), n_sites, cfg["partition"], int(cfg["seed"]))


# -- mine --------------------------------------------------------------------


def cmd_mine(args) -> int:
    cfg = _resolve(args, MINE_DEFAULTS, ["sites", "minsup", "k", "algo", "links", "seed", "timing"])
    if cfg["algo"] not in ("gfm", "fdm", "both", "centralized"):
        raise ValidationError(f"unknown algorithm {cfg['algo']!r}")
    params = itemsets.MiningParams(float(cfg["minsup"]), _positive_int("k", cfg["k"]))
    dbs = _transaction_sites(cfg)
    links = resolve_links(cfg["links"])
    report = _new_report("mine", cfg["seed"], cfg)
    report["accounting"] = {}

    algos = {"both": ["gfm", "fdm"]}.get(cfg["algo"], [cfg["algo"]])
    results = {}
    for name in algos:
        if name == "centralized":
            results[name] = itemsets.apriori_centralized(dbs, params)
            continue
        session = GridSession(len(dbs), links, timing=cfg["timing"])
        run = itemsets.gfm_run if name == "gfm" else itemsets.fdm_run
        results[name] = run(dbs, params, session)
        session.close()
        report["accounting"][name] = _accounting(session)
        if args.dump_log:
            session.log.dump(_log_path(args.dump_log, name, len(algos) > 1))

    for name, res in results.items():
        report["results"][name] = {
            "counts": {str(k): v for k, v in res.counts().items()},
            "frequent": res.to_dict()["frequent"],
        }

    failure = None
    if cfg["algo"] == "both":
        same = results["gfm"].frequent == results["fdm"].frequent
        report["results"]["equivalent"] = same
        if not same:
            failure = "equivalence violation: gfm and fdm disagree"
    if args.check:
        oracle = itemsets.enumerate_frequent(dbs, params)
        agrees = all(res.frequent == oracle for res in results.values())
        report["results"]["oracle_agrees"] = agrees
        if not agrees:
            failure = "equivalence violation: result differs from exhaustive enumeration"

    if args.measured is not None:
        report["overhead"] = [
            estimator.overhead(args.measured, report["accounting"][name]["makespan_s"], "s", name).to_dict()
            for name in report["accounting"]
        ]
    _emit(report, args.out)
    for name in results:
        acct = report["accounting"].get(name)
        line = f"{name}: {sum(results[name].counts().values())} frequent itemsets"
        if acct:
            line += f", rounds={acct['rounds']} messages={acct['messages']} bytes={acct['bytes']}"
        print(line, file=sys.stderr)
    if failure:
        raise EquivalenceError(failure)
    return EXIT_OK


# -- cluster -----------------------------------------------------------------


def cmd_cluster(args) -> int:
    cfg = _resolve(
        args, CLUSTER_DEFAULTS,
        ["sites", "ki", "tau", "border", "passes", "links", "seed", "timing", "aggregation_site"],
    )
    params = clustering.AggregationParams(
        tau=cfg["tau"],
        border=int(cfg["border"]),
        passes=int(cfg["passes"]),
        multi_factor=float(cfg["multi_factor"]),
    )
    sites = _point_sites(cfg)
    links = resolve_links(cfg["links"])
    session = GridSession(len(sites), links, timing=cfg["timing"])
    run = clustering.run_distributed(
        sites, _positive_int("ki", cfg["ki"]), params, session,
        seed=int(cfg["seed"]), aggregation_site=int(cfg["aggregation_site"]),
    )
    session.close()
    if args.dump_log:
        session.log.dump(args.dump_log)
    if args.dump_stats:
        fileio.write_stats(args.dump_stats, [s for st in run.site_stats for s in st])

    report = _new_report("cluster", cfg["seed"], cfg)
    report["results"] = {
        "k_g": run.labeling.n_clusters,
        "total_variance": run.labeling.total_variance,
        "tau": run.labeling.tau,
        "payload_bytes": run.payload_bytes,
        "n_subclusters": sum(len(s) for s in run.site_stats),
        "merges": len(run.labeling.merges),
        "moves": len(run.labeling.moves),
        "labeling": run.labeling.to_dict(),
    }
    report["accounting"] = {"cluster": _accounting(session)}
    if args.measured is not None:
        report["overhead"] = [
            estimator.overhead(args.measured, report["accounting"]["cluster"]["makespan_s"], "s",
                               "cluster").to_dict()
        ]
    _emit(report, args.out)
    print(f"k_g={run.labeling.n_clusters} total_variance={run.labeling.total_variance:.6g} "
          f"payload_bytes={run.payload_bytes}", file=sys.stderr)
    return EXIT_OK


# -- estimate ----------------------------------------------------------------


def cmd_estimate(args) -> int:
    report = _new_report("estimate", 0, {
        "paper_preset": bool(args.paper_preset),
        "measured": args.measured, "estimated": args.estimated,
        "unit": args.unit, "plan": args.plan, "links": args.links or "table2",
    })
    rows = []
    if args.paper_preset:
        rows.extend(estimator.paper_preset())
        report["results"]["relative_gain"] = {
            "measured_fdm_vs_gfm_pct": round(estimator.relative_gain(687, 521), 1),
            "estimated_fdm_vs_gfm_pct": round(estimator.relative_gain(518, 424), 1),
        }
    if args.measured is not None:
        if args.plan:
            plan = StagePlan.from_dict(_load_config(args.plan))
            est = estimator.Duration(estimator.estimate_itemsets(plan, resolve_links(args.links)), "s")
            report["results"]["estimated_s"] = est.value
        elif args.estimated is not None:
            est = args.estimated
        else:
            raise ValidationError("--measured needs --estimated or --plan")
        rows.append(estimator.overhead(args.measured, est, args.unit, args.task))
    elif args.estimated is not None or args.plan:
        raise ValidationError("--estimated and --plan need --measured")
    if not rows:
        raise ValidationError("nothing to estimate: give --paper-preset or --measured")
    report["overhead"] = [r.to_dict() for r in rows]
    _emit(report, args.out)
    for r in rows:
        flag = "  (estimator exceeds measurement)" if r.estimator_exceeds_measurement else ""
        print(f"{r.task or '-'}\t{r.measured:g} {r.unit}\t{r.estimated:g} {r.unit}\t"
              f"{r.rounded_pct:.1f}%{flag}", file=sys.stderr)
    return EXIT_OK


# -- report ------------------------------------------------------------------


def cmd_report(args) -> int:
    report = _load_config(args.path)
    validate_report(report)
    print(f"{report['task']} run, gridmine {report['tool_version']}, seed {report['seed']}, "
          f"created {report['created']}")
    res = report["results"]
    if report["task"] == "mine":
        for name, body in res.items():
            if isinstance(body, dict):
                counts = ", ".join(f"L{k}={v}" for k, v in body["counts"].items())
                print(f"  {name}: {counts or 'nothing frequent'}")
        if "equivalent" in res:
            print(f"  gfm == fdm: {res['equivalent']}")
    elif report["task"] == "cluster":
        print(f"  k_g={res['k_g']} total_variance={res['total_variance']:.6g} "
              f"payload_bytes={res['payload_bytes']} sub-clusters={res['n_subclusters']}")
    for name, acct in report.get("accounting", {}).items():
        print(f"  {name}: rounds={acct['rounds']} messages={acct['messages']} "
              f"bytes={acct['bytes']} makespan={acct['makespan_s']:.6g}s")
    for row in report.get("overhead", []):
        print(f"  overhead {row['task'] or '-'}: measured {row['measured']:g}{row['unit']}, "
              f"estimated {row['estimated']:g}{row['unit']}, {row['overhead_pct']:.1f}%"
              + (f" [{row['diagnostic']}]" if "diagnostic" in row else ""))
    return EXIT_OK


# -- entry point ---------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridmine", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"gridmine {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a dataset and split it into per-site files")
    g.add_argument("kind", nargs="?", choices=["points", "transactions"], default="transactions")
    g.add_argument("--config", metavar="PATH", help="MixtureSpec or TransactionSpec JSON")
    g.add_argument("--sites", type=int)
    g.add_argument("--n", type=int, help="number of transactions (overrides the generator config)")
    g.add_argument("--seed", type=int)
    g.add_argument("--strategy", choices=["round_robin", "contiguous", "shuffled"], default="round_robin")
    g.add_argument("--out", default="data", metavar="DIR")
    g.set_defaults(func=cmd_gen)

    def common(p):
        p.add_argument("inputs", nargs="*", help="per-site data files (one file is split over --sites)")
        p.add_argument("--config", metavar="PATH")
        p.add_argument("--sites", type=int)
        p.add_argument("--links", metavar="PATH|table2")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", metavar="PATH")
        p.add_argument("--dump-log", metavar="PATH")
        p.add_argument("--timing", choices=["modeled", "measured"])
        p.add_argument("--measured", type=float, metavar="SECONDS",
                       help="observed wall time; adds an overhead report")

    m = sub.add_parser("mine", help="distributed frequent itemset mining")
    common(m)
    m.add_argument("--minsup", type=float)
    m.add_argument("--k", type=int)
    m.add_argument("--algo", choices=["gfm", "fdm", "both", "centralized"])
    m.add_argument("--check", action="store_true", help="compare against exhaustive enumeration")
    m.set_defaults(func=cmd_mine)

    c = sub.add_parser("cluster", help="variance-based distributed clustering")
    common(c)
    c.add_argument("--ki", type=int)
    c.add_argument("--tau", help="merge threshold or 'auto'")
    c.add_argument("--border", type=int)
    c.add_argument("--passes", type=int)
    c.add_argument("--aggregation-site", type=int)
    c.add_argument("--dump-stats", metavar="PATH")
    c.set_defaults(func=cmd_cluster)

    e = sub.add_parser("estimate", help="overhead of measured times against estimates")
    e.add_argument("--measured", help="e.g. 1050s or 521min")
    e.add_argument("--estimated", help="e.g. 19.52s")
    e.add_argument("--unit", choices=list(estimator.UNITS), help="unit for bare numbers")
    e.add_argument("--plan", metavar="PATH", help="stage plan JSON; its makespan is the estimate")
    e.add_argument("--links", metavar="PATH|table2")
    e.add_argument("--task", default="")
    e.add_argument("--paper-preset", action="store_true", help="reproduce the published results summary")
    e.add_argument("--out", metavar="PATH")
    e.set_defaults(func=cmd_estimate)

    r = sub.add_parser("report", help="validate and pretty-print a RunReport")
    r.add_argument("path")
    r.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except EquivalenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_EQUIVALENCE
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
