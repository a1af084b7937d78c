"""Command-line harness: training runs, portfolio testing, baseline
comparison, report emission, instance generation, and one-off solves.

Exit codes: 0 success, 1 validation (bad config/input), 2 runtime
failure, 3 capacity exceeded (e.g. the exact oracle's size cap).

Environment overrides (these two only): ``COEVOTSP_OUT_DIR`` for the
default output directory, ``COEVOTSP_WORKERS`` for the evaluation worker
count. A worker count of 1 reproduces the parallel results exactly.
"""

from __future__ import annotations

import argparse
import datetime
import hashlib
import json
import os
import sys
from pathlib import Path

try:
    import tomllib  # Python >= 3.11
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from .baseline import (
    BaselineConfig,
    build_portfolio,
    compare_runs,
    write_comparison_csv,
)
from .coevo import (
    RunConfig,
    load_checkpoint,
    run_liangyi,
    runconfig_from_dict,
    runconfig_to_dict,
    write_event_log,
)
from .errors import (
    CapacityError,
    IntegrityError,
    ParseError,
    StructuralError,
    ValidationError,
)
from .instances import (
    InstanceSpace,
    gen_random_instance,
    read_instance,
    write_instance,
)
from .oracle import ExactOracle, peo
from .perf import EvalStore, MetricSpec
from .reports import (
    plot_retention,
    plot_test_curve,
    plot_training_dynamics,
    retention_ratios,
    retention_table,
    test_curve,
    write_retention_csv,
    write_retention_ratios_csv,
    write_test_curve_csv,
    write_training_dynamics_csv,
)
from .seeding import STREAM_BASELINE, STREAM_TEST_GEN, substream
from .solver import Budget, SolverConfig, solve

try:
    from importlib.metadata import version as _pkg_version
    VERSION = _pkg_version("coevotsp")
except Exception:  # pragma: no cover - metadata missing in odd installs
    VERSION = "unknown"

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_CAPACITY = 3

DEFAULT_TEST_COUNT = 500
DEFAULT_TEST_SEED = 999


# ---------------------------------------------------------------------------
# Shared helpers

def _out_dir(args) -> Path:
    out = args.out or os.environ.get("COEVOTSP_OUT_DIR") or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _workers(args) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("COEVOTSP_WORKERS")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(f"COEVOTSP_WORKERS={env!r} is not an integer")
    return 1


def _config_bytes(rc: RunConfig) -> bytes:
    return (json.dumps(runconfig_to_dict(rc), sort_keys=True) + "\n").encode()


def config_hash(rc: RunConfig) -> str:
    return hashlib.sha256(_config_bytes(rc)).hexdigest()


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


def load_run_config(path: str | Path) -> RunConfig:
    """Parse a TOML run config whose sections mirror RunConfig fields."""
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except FileNotFoundError:
        raise ParseError(f"config file not found: {path}")
    except tomllib.TOMLDecodeError as e:
        raise ParseError(f"{path}: invalid TOML: {e}")
    return runconfig_from_dict(doc)


def generate_test_set(space: InstanceSpace, count: int, seed: int) -> list:
    """The fixed held-out set: depends only on (space, count, seed)."""
    if count < 1:
        raise ValidationError("test-set count must be >= 1")
    rng = substream(seed, STREAM_TEST_GEN)
    return [gen_random_instance(space, rng, f"t{i:04d}") for i in range(count)]


def _load_test_set(args, space: InstanceSpace) -> list:
    if getattr(args, "test_dir", None):
        d = Path(args.test_dir)
        files = sorted(d.glob("*.json"))
        if not files:
            raise ValidationError(f"no instance files (*.json) in {d}")
        return [read_instance(p) for p in files]
    return generate_test_set(space, args.test_count, args.test_seed)


def _write_ap_file(path: Path, members) -> None:
    doc = [{"id": m.id, "genes": list(m.cfg.genes), "birth": m.birth}
           for m in members]
    path.write_text(json.dumps(doc, sort_keys=True) + "\n")


def _read_ap_file(path: str | Path) -> list[SolverConfig]:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ParseError(f"portfolio file not found: {path}")
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: invalid JSON at line {e.lineno}: {e.msg}")
    if not isinstance(doc, list) or not doc:
        raise ParseError(f"{path}: expected a nonempty list of members")
    try:
        return [SolverConfig.from_genes(m["genes"]) for m in doc]
    except (KeyError, TypeError):
        raise ParseError(f"{path}: each member needs a 'genes' list")


def _load_run_artifacts(run_dir: Path):
    """Checkpoint + manifest of a finished training run, hash-verified."""
    ckpt = run_dir / "checkpoint.json"
    if not ckpt.exists():
        raise ParseError(f"no checkpoint.json in {run_dir}; train first")
    (rc, done, members, ip, memory, events, *_rest) = load_checkpoint(ckpt)
    manifest_path = run_dir / "manifest.json"
    if manifest_path.exists():
        manifest = json.loads(manifest_path.read_text())
        if manifest.get("config_hash") != config_hash(rc):
            raise IntegrityError(
                f"{manifest_path}: config hash does not match the "
                f"checkpointed run config"
            )
    else:
        manifest = {}
    return rc, members, memory, events, manifest


def _oracle_for(args) -> ExactOracle:
    oracle = ExactOracle()
    if getattr(args, "optima", None):
        oracle.import_optima(args.optima)
    return oracle


# ---------------------------------------------------------------------------
# Subcommands

def cmd_train(args) -> int:
    rc = load_run_config(args.config)
    out = _out_dir(args)
    workers = _workers(args)
    manifest = {
        "run_id": f"run-{rc.master_seed}",
        "config_hash": config_hash(rc),
        "version": VERSION,
        "started": _now(),
        "artifacts": {
            "config": "config.json",
            "events": "events.jsonl",
            "checkpoint": "checkpoint.json",
            "final_ap": "final_ap.json",
        },
    }
    (out / "config.json").write_bytes(_config_bytes(rc))
    oracle = _oracle_for(args)
    result = run_liangyi(rc, workers=workers,
                         checkpoint_path=out / "checkpoint.json",
                         oracle=oracle)
    write_event_log(result.events, out / "events.jsonl")
    _write_ap_file(out / "final_ap.json", result.final_ap)
    manifest["finished"] = _now()
    manifest["evaluation_requests"] = result.store.requests
    manifest["solver_runs"] = result.store.solver_runs
    (out / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"trained {rc.cycles} cycles -> {out} "
          f"({result.store.requests} evaluation requests)")
    return EXIT_OK


def cmd_test(args) -> int:
    ap = _read_ap_file(args.ap)
    out = _out_dir(args)
    space = InstanceSpace(args.n, args.grid)
    test = _load_test_set(args, space)
    spec = MetricSpec(budget=Budget(steps=args.steps), theta=args.theta,
                      solver_seed=args.solver_seed)
    oracle = _oracle_for(args)
    store = EvalStore()
    rows = []
    for ins in test:
        results = [store.evaluate(cfg, ins, spec, oracle) for cfg in ap]
        rows.append((ins.id, max(r.perf for r in results),
                     min(r.peo for r in results)))
    per_instance = out / "test_per_instance.csv"
    with open(per_instance, "w", newline="") as f:
        f.write("instance_id,applicable,best_peo\n")
        for iid, p, e in rows:
            f.write(f"{iid},{int(p)},{e!r}\n")
    summary = {
        "instances": len(rows),
        "applicability": sum(p for _, p, _ in rows) / len(rows),
        "mean_peo": sum(e for _, _, e in rows) / len(rows),
    }
    (out / "test_summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    print(json.dumps(summary, sort_keys=True))
    return EXIT_OK


def cmd_compare(args) -> int:
    rc, members, memory, _events, manifest = _load_run_artifacts(
        Path(args.run_dir))
    out = _out_dir(args)
    workers = _workers(args)
    oracle = _oracle_for(args)
    store = EvalStore()

    rng = substream(rc.master_seed, STREAM_BASELINE)
    if args.train_source == "memory":
        train = tuple(i for c in memory.cycles()
                      for i in memory.get(c).instances)
    else:
        train = tuple(
            gen_random_instance(rc.space, rng, f"bt{i:04d}")
            for i in range(args.train_count))

    # Budget parity is in distinct solver runs: a memoized re-read costs
    # no solver time, so it is not charged against either side.
    total_budget = args.budget or manifest.get("solver_runs")
    if not total_budget:
        raise ValidationError(
            "no --budget given and the run manifest records no "
            "solver-run count")
    per_iteration = max(len(train), total_budget // rc.n_ap)
    bc = BaselineConfig(train, rc.n_ap, per_iteration, args.strategy)
    baseline = build_portfolio(bc, rc.metric, oracle, rng, store)

    test = _load_test_set(args, rc.space)
    rows = compare_runs(
        [m.cfg for m in members], baseline.portfolio, test, rc.metric,
        oracle, store, seed=rc.master_seed,
        trained_evals=manifest.get("solver_runs", 0),
        baseline_evals=baseline.evaluations,
    )
    path = out / "comparison.csv"
    write_comparison_csv(rows, path)
    for r in rows:
        print(f"{r.method}: applicability={r.applicability:.4f} "
              f"mean_peo={r.mean_peo:.4f} evaluations={r.evaluations}")
    _ = workers  # candidate evaluation is memoized; parallelism not needed
    return EXIT_OK


def cmd_report(args) -> int:
    run_dir = Path(args.run_dir)
    rc, _members, memory, events, _manifest = _load_run_artifacts(run_dir)
    events_file = run_dir / "events.jsonl"
    if events_file.exists():
        events = [json.loads(line)
                  for line in events_file.read_text().splitlines()]
    if not events:
        raise ParseError(f"{run_dir}: no event log to report from")
    out = _out_dir(args)
    workers = _workers(args)
    oracle = _oracle_for(args)
    store = EvalStore()

    write_training_dynamics_csv(events, out / "training_dynamics.csv")
    plot_training_dynamics(events, out / "training_dynamics.png")

    table = retention_table(rc, memory, oracle, store, workers)
    write_retention_csv(table, out / "retention.csv")
    ratios = retention_ratios(table)
    write_retention_ratios_csv(ratios, out / "retention_ratios.csv")
    plot_retention(table, out / "retention.png")

    test = _load_test_set(args, rc.space)
    curve = test_curve(rc, memory, test, oracle, store, workers)
    write_test_curve_csv(curve, out / "test_curve.csv")
    plot_test_curve(curve, out / "test_curve.png")

    print(f"reports -> {out} (training_dynamics, retention, "
          f"retention_ratios, test_curve; CSV + PNG)")
    return EXIT_OK


def cmd_gen_instances(args) -> int:
    out = _out_dir(args)
    space = InstanceSpace(args.n, args.grid)
    rng = substream(args.seed, STREAM_TEST_GEN)
    for i in range(args.count):
        ins = gen_random_instance(space, rng, f"g{i:04d}")
        write_instance(ins, out / f"g{i:04d}.json")
    print(f"wrote {args.count} instances to {out}")
    return EXIT_OK


def cmd_solve_one(args) -> int:
    try:
        genes = [int(g) for g in args.genes.split(",")]
    except ValueError:
        raise ValidationError(
            f"--genes must be 5 comma-separated integers, got {args.genes!r}")
    if len(genes) != 5:
        raise ValidationError(f"--genes needs 5 values, got {len(genes)}")
    cfg = SolverConfig.from_genes(genes)
    ins = read_instance(args.instance)
    tour = solve(cfg, ins, args.solver_seed, Budget(steps=args.steps))
    doc = {"tour": list(tour.order), "length": tour.length}
    oracle = _oracle_for(args)
    opt = oracle.optimum(ins)
    doc["optimum"] = opt
    doc["peo"] = peo(tour.length, opt)
    print(json.dumps(doc, sort_keys=True))
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser

def _add_out(p):
    p.add_argument("--out", help="output directory "
                   "(default: $COEVOTSP_OUT_DIR or ./out)")


def _add_workers(p):
    p.add_argument("--workers", type=int,
                   help="evaluation worker count (default: "
                   "$COEVOTSP_WORKERS or 1; 1 reproduces parallel results)")


def _add_metric_flags(p):
    p.add_argument("--steps", type=int, default=Budget().steps,
                   help="solver budget in improvement attempts")
    p.add_argument("--theta", type=float, default=MetricSpec().theta,
                   help="applicability threshold (percent over optimum)")
    p.add_argument("--solver-seed", type=int, default=0)


def _add_test_set_flags(p):
    p.add_argument("--test-dir", help="directory of instance JSON files")
    p.add_argument("--test-count", type=int, default=DEFAULT_TEST_COUNT)
    p.add_argument("--test-seed", type=int, default=DEFAULT_TEST_SEED)


def _add_optima(p):
    p.add_argument("--optima",
                   help="JSON id->length map of externally computed optima")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="coevotsp",
        description="Coevolutionary training of parallel TSP solver "
                    "portfolios against adversarial instance populations.",
    )
    ap.add_argument("--version", action="version", version=VERSION)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run the coevolutionary training loop")
    p.add_argument("config", help="TOML run config")
    _add_out(p); _add_workers(p); _add_optima(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("test", help="score a portfolio on a test set")
    p.add_argument("ap", help="portfolio JSON file (final_ap.json)")
    p.add_argument("--n", type=int, default=14)
    p.add_argument("--grid", type=int, default=10**6)
    _add_test_set_flags(p); _add_metric_flags(p); _add_out(p); _add_optima(p)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("compare",
                       help="equal-budget baseline comparison for a run")
    p.add_argument("run_dir", help="output directory of a finished train run")
    p.add_argument("--strategy", choices=("random_search",
                                          "local_search_on_genes"),
                   default="random_search")
    p.add_argument("--budget", type=int,
                   help="total baseline solver-run budget "
                        "(default: the run's own solver-run count)")
    p.add_argument("--train-source", choices=("random", "memory"),
                   default="random",
                   help="baseline training set: fresh random instances or "
                        "the union of the run's per-cycle instance sets")
    p.add_argument("--train-count", type=int, default=60,
                   help="training-set size for --train-source random")
    _add_test_set_flags(p); _add_out(p); _add_workers(p); _add_optima(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("report", help="emit figure-data CSVs and figures")
    p.add_argument("run_dir", help="output directory of a finished train run")
    _add_test_set_flags(p); _add_out(p); _add_workers(p); _add_optima(p)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("gen-instances", help="write random instance files")
    p.add_argument("--n", type=int, default=14)
    p.add_argument("--grid", type=int, default=10**6)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    _add_out(p)
    p.set_defaults(func=cmd_gen_instances)

    p = sub.add_parser("solve-one",
                       help="run one config on one instance (debug)")
    p.add_argument("instance", help="instance JSON file")
    p.add_argument("--genes", required=True,
                   help="5 comma-separated gene values")
    p.add_argument("--steps", type=int, default=Budget().steps)
    p.add_argument("--solver-seed", type=int, default=0)
    _add_optima(p)
    p.set_defaults(func=cmd_solve_one)

    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, StructuralError, ValidationError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except CapacityError as e:
        print(f"error: {e}", file=sys.stderr)
        print("hint: compute optima externally and pass them with --optima",
              file=sys.stderr)
        return EXIT_CAPACITY
    except IntegrityError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as e:  # pragma: no cover - unexpected runtime failure
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
