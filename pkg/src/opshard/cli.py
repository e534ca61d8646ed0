"""Command-line entry point: ``opshard {run,sched-bench,sim,report}``."""

from __future__ import annotations

import argparse
import csv
import io
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import engine, sim
from .cluster import Clusterer
from .core import JobConfig, KeyDist, SchedulerKind
from .errors import OpshardError
from .metrics import MetricsBundle
from .sched import brute_force_optimal, solve
from .workloads import INSTANCE_FAMILIES, WorkloadGen, cluster_dist, gen_workload, key_counts, random_instance

log = logging.getLogger("opshard")

ORACLE_MAX_N = 20
ORACLE_MAX_M = 5


def configure_logging() -> None:
    """``OPSHARD_LOG`` names a level; ``trace`` also prints pipeline phase events."""
    level = os.environ.get("OPSHARD_LOG", "").strip().lower()
    if not level:
        return
    root = logging.getLogger("opshard")
    for old in [h for h in root.handlers if getattr(h, "_opshard_cli", False)]:
        root.removeHandler(old)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(name)s %(levelname)s %(message)s"))
    handler._opshard_cli = True
    root.addHandler(handler)
    if level == "trace":
        root.setLevel(logging.DEBUG)
    else:
        root.setLevel(getattr(logging, level.upper(), logging.INFO))
        logging.getLogger("opshard.trace").setLevel(logging.INFO)


def positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}")
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}")
    if not value > 0 or value == float("inf"):
        raise argparse.ArgumentTypeError(f"must be a finite value > 0, got {text}")
    return value


def non_negative_float(text: str) -> float:
    value = float(text)
    if not 0 <= value < float("inf"):
        raise argparse.ArgumentTypeError(f"must be a finite value >= 0, got {text}")
    return value


def eta_value(text: str) -> float:
    value = float(text)
    if not 0 < value < 1:
        raise argparse.ArgumentTypeError(f"eta must lie in (0, 1), got {text}")
    return value


def int_list(text: str) -> list[int]:
    try:
        values = [positive_int(x) for x in text.split(",") if x.strip()]
    except argparse.ArgumentTypeError:
        raise
    if not values:
        raise argparse.ArgumentTypeError("expected a comma-separated list of integers")
    return values


def _write_csv(path: Path, header, rows) -> Path:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def _fmt(x: float) -> str:
    return f"{x:.6f}"


# -- run ---------------------------------------------------------------------


def cmd_run(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    g = WorkloadGen(args.workload, args.keys, args.pairs, args.seed, args.s)
    records = gen_workload(g)
    job = args.job or ("wordcount" if args.workload == "words" else "histogram")
    if job == "inverted-index":
        records = engine.number_docs(records)
    map_fn, reduce_fn = engine.JOBS[job]
    cfg = JobConfig(
        m=args.m,
        map_slots=args.map_slots,
        w=args.waves,
        n_target=args.n_target,
        eta=args.eta,
        scheduler_kind=args.scheduler,
        memory_sort_threshold=args.sort_threshold,
        trackers=args.trackers,
    )
    spec = engine.JobSpec(map_fn, reduce_fn, records, cfg, work_dir=out_dir / "work")
    result = engine.run_job(spec)
    final = out_dir / "output"
    final.mkdir(exist_ok=True)
    for stale in final.glob("part-*.osr"):
        stale.unlink()
    for path in sorted((out_dir / "work" / "output").glob("part-*.osr")):
        path.replace(final / path.name)
    result.metrics.write(out_dir / "metrics.csv")
    if args.timings:
        result.metrics.write(out_dir / "timings.csv", timings=True)
    m = result.metrics
    print(f"{job}: {m.outputs} output records, scheduler={m.scheduler} ratio={m.ratio:.4f} "
          f"load_rsd={m.load_rsd:.4f} stats+broadcast={m.measured_bytes}B bound={m.network_bound}B")
    return 0


# -- sched-bench -------------------------------------------------------------


def _bench_instances(args: argparse.Namespace) -> list[tuple[str, KeyDist, int]]:
    rng = np.random.default_rng(args.seed)
    out = []
    if args.family == "small":
        for i in range(args.instances):
            family = INSTANCE_FAMILIES[i % len(INSTANCE_FAMILIES)]
            n = int(rng.integers(4, 19))
            m = int(rng.choice([2, 3, 4]))
            out.append((f"{family}-{i + 1}", random_instance(rng, family, n), m))
    elif args.family == "zipf":
        for i in range(args.instances):
            counts = key_counts(WorkloadGen("zipf", args.keys, args.pairs, args.seed + i, args.s))
            out.append((f"zipf-{i + 1}", cluster_dist(counts, Clusterer(args.n_target)), args.m))
    else:
        for i in range(args.instances):
            out.append((f"uniform-{i + 1}", KeyDist([args.pairs // args.n_target] * args.n_target), args.m))
    return out


def cmd_sched_bench(args: argparse.Namespace) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    header = ["instance", "solver", "n", "m", "max_load", "ratio"]
    if args.timings:
        header.append("solver_time")
    worst = 0.0
    for name, dist, m in _bench_instances(args):
        kinds = [SchedulerKind(args.scheduler)] if args.scheduler else list(SchedulerKind)
        results = [solve(kind, dist, m, args.eta) for kind in kinds]
        if dist.n <= ORACLE_MAX_N and m <= ORACLE_MAX_M:
            results.append(brute_force_optimal(dist, m))
        for res in results:
            row = [name, res.solver, dist.n, m, res.max_load, _fmt(res.ratio)]
            if args.timings:
                row.append(_fmt(res.solver_time))
            rows.append(row)
        oracle = [r for r in results if r.solver == "oracle"]
        os4m = [r for r in results if r.solver == "os4m"]
        if oracle and os4m and oracle[0].max_load:
            worst = max(worst, os4m[0].max_load / oracle[0].max_load)
    _write_csv(out_dir / "sched_bench.csv", header, rows)
    print(f"{len(rows)} rows written to {out_dir / 'sched_bench.csv'}")
    if worst:
        print(f"worst os4m/oracle max-load: {worst:.6f}")
    return 0


# -- sim ---------------------------------------------------------------------


def _sim_config(args: argparse.Namespace) -> sim.SimConfig:
    if args.m is not None:
        if args.m % args.nodes:
            args.parser.error(f"--m {args.m} is not a multiple of --nodes {args.nodes}")
        args.reduce_slots_per_node = args.m // args.nodes
    cfg = sim.SimConfig(
        nodes=args.nodes,
        map_slots_per_node=args.map_slots_per_node,
        reduce_slots_per_node=args.reduce_slots_per_node,
        net_bw=args.net_bw,
        disk_read_bw=args.disk_read_bw,
        disk_write_bw=args.disk_write_bw,
        waves=args.waves,
        map_task_work=args.map_work,
        map_input_bytes=args.map_input_mb * sim.MB,
        map_output_bytes=args.map_output_mb * sim.MB,
        overlap_mode=args.overlap,
        pipeline_mode=args.pipeline,
        sort_memory_bytes=args.sort_memory_mb * sim.MB,
        fetch_latency=args.fetch_latency,
    )
    if args.keys:
        counts = key_counts(WorkloadGen("zipf", args.keys, args.pairs, args.seed, args.s))
        n = args.n_target or 8 * cfg.reduce_slots
        cfg = replace(cfg, dist=cluster_dist(counts, Clusterer(n)))
    elif args.n_target:
        cfg = replace(cfg, dist=KeyDist([1] * args.n_target))
    return cfg


def cmd_sim(args: argparse.Namespace) -> int:
    cfg = _sim_config(args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if args.sweep:
        if not args.keys:
            args.parser.error("--sweep needs --keys for the workload")
        counts = key_counts(WorkloadGen("zipf", args.keys, args.pairs, args.seed, args.s))
        points = sim.sweep_n_target(cfg, lambda n: cluster_dist(counts, Clusterer(n)), args.sweep, args.eta)
        sim.write_text(out_dir / "sweep.csv", sim.sweep_csv(points))
        for p in points:
            print(f"n_target={p.n_target}: reduce_phase={p.reduce_phase_time:.3f}s "
                  f"sort/item={p.mean_item_sort_time:.3f}s overhead={p.overhead_time:.3f}s")
        return 0
    if args.compare:
        cmp = sim.compare_modes(cfg)
        reports = [cmp.hadoop, cmp.os4m]
        for mode, trace in cmp.traces.items():
            sim.write_text(out_dir / f"progress-{mode}.csv", trace.to_csv())
    else:
        trace = sim.simulate(cfg)
        reports = [sim._report(trace)]
        sim.write_text(out_dir / f"progress-{trace.mode}.csv", trace.to_csv())
    sim.write_text(out_dir / "waves.csv", sim.wave_summary_csv(reports))
    for rep in reports:
        waves = ", ".join(f"{d:.3f}" for d in rep.wave_durations)
        print(f"{rep.mode}: waves [{waves}] map_phase={rep.map_phase_time:.3f}s job={rep.job_time:.3f}s")
    return 0


# -- report ------------------------------------------------------------------


REPORT_HEADER = ("source", "scheduler", "m", "n", "max_load", "ratio", "load_rsd",
                 "stats_broadcast_bytes", "network_bound", "within_bound")


def cmd_report(args: argparse.Namespace) -> int:
    rows = []
    for path in args.metrics:
        m = MetricsBundle.read(path)
        rows.append((str(path), m.scheduler, m.m, m.n, m.max_load, repr(m.ratio), repr(m.load_rsd),
                     m.measured_bytes, m.network_bound, "yes" if m.measured_bytes <= m.network_bound else "no"))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(REPORT_HEADER)
    w.writerows(rows)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.csv").write_text(buf.getvalue(), encoding="utf-8")
    sys.stdout.write(buf.getvalue())
    return 0


# -- parser ------------------------------------------------------------------


def _common(p: argparse.ArgumentParser, seed_required: bool = True) -> None:
    p.add_argument("--seed", type=int, required=seed_required, help="random seed (required)")
    p.add_argument("--out-dir", default="out", help="directory for CSVs and outputs (default: out)")
    p.add_argument("--eta", type=eta_value, default=0.002, help="scheduler precision (default 0.002)")


def _workload_flags(p: argparse.ArgumentParser, keys_default: int | None, pairs_default: int) -> None:
    p.add_argument("--keys", type=positive_int, default=keys_default, help="distinct keys")
    p.add_argument("--pairs", type=non_negative_int, default=pairs_default, help="total key-value pairs")
    p.add_argument("--s", type=positive_float, default=1.0, help="Zipf exponent (default 1.0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opshard", description="Operation-level Reduce scheduling toolkit.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a built-in job on a synthetic workload")
    _common(run)
    _workload_flags(run, 10_000, 200_000)
    run.add_argument("--workload", choices=["zipf", "uniform", "words"], default="zipf")
    run.add_argument("--job", choices=sorted(engine.JOBS), default=None,
                     help="default: histogram for key workloads, wordcount for words")
    run.add_argument("--scheduler", choices=[k.value for k in SchedulerKind], default="os4m")
    run.add_argument("--m", type=positive_int, default=2, help="Reduce slots")
    run.add_argument("--map-slots", type=positive_int, default=2)
    run.add_argument("--waves", type=positive_int, default=1)
    run.add_argument("--n-target", type=positive_int, default=None, help="clusters (default 8*m)")
    run.add_argument("--trackers", type=positive_int, default=1)
    run.add_argument("--sort-threshold", type=non_negative_int, default=64 * 1024 * 1024,
                     help="bytes sorted in memory before spilling (default 64 MiB)")
    run.add_argument("--timings", action="store_true", help="also write wall-clock timings.csv")
    run.set_defaults(func=cmd_run)

    bench = sub.add_parser("sched-bench", help="compare schedulers on instance families")
    _common(bench)
    _workload_flags(bench, 100_000, 2_000_000)
    bench.add_argument("--family", choices=["small", "zipf", "uniform"], default="small")
    bench.add_argument("--instances", type=positive_int, default=200)
    bench.add_argument("--m", type=positive_int, default=30)
    bench.add_argument("--n-target", type=positive_int, default=240)
    bench.add_argument("--scheduler", choices=[k.value for k in SchedulerKind], default=None,
                       help="benchmark only this solver (default: all)")
    bench.add_argument("--timings", action="store_true", help="add a solver_time column")
    bench.set_defaults(func=cmd_sched_bench)

    sm = sub.add_parser("sim", help="simulate Map/Reduce overlap and pipelining")
    _common(sm)
    _workload_flags(sm, None, 2_000_000)
    sm.add_argument("--compare", action="store_true", help="run both overlap modes")
    sm.add_argument("--overlap", choices=[m.value for m in sim.OverlapMode], default="os4m")
    sm.add_argument("--pipeline", choices=[m.value for m in sim.PipelineMode], default="pipelined")
    sm.add_argument("--nodes", type=positive_int, default=4)
    sm.add_argument("--map-slots-per-node", type=positive_int, default=2)
    sm.add_argument("--reduce-slots-per-node", type=positive_int, default=2)
    sm.add_argument("--net-bw", type=positive_float, default=37.0, help="MB/s")
    sm.add_argument("--disk-read-bw", type=positive_float, default=203.0, help="MB/s")
    sm.add_argument("--disk-write-bw", type=positive_float, default=121.0, help="MB/s")
    sm.add_argument("--waves", type=positive_int, default=3)
    sm.add_argument("--map-work", type=non_negative_float, default=10.0, help="Map compute seconds per task")
    sm.add_argument("--map-input-mb", type=non_negative_float, default=64.0)
    sm.add_argument("--map-output-mb", type=non_negative_float, default=64.0)
    sm.add_argument("--sort-memory-mb", type=positive_float, default=128.0)
    sm.add_argument("--fetch-latency", type=non_negative_float, default=0.005, help="seconds per bucket request")
    sm.add_argument("--n-target", type=positive_int, default=None)
    sm.add_argument("--m", type=positive_int, default=None,
                    help="total Reduce slots; must be a multiple of --nodes (overrides --reduce-slots-per-node)")
    sm.add_argument("--scheduler", choices=["os4m"], default="os4m")
    sm.add_argument("--sweep", type=int_list, default=None, help="comma-separated n_target values")
    sm.set_defaults(func=cmd_sim)

    rep = sub.add_parser("report", help="summarise metrics.csv files")
    rep.add_argument("metrics", nargs="+", help="metrics.csv paths")
    rep.add_argument("--out-dir", default=None)
    rep.set_defaults(func=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    args.parser = parser
    try:
        return args.func(args)
    except (OpshardError, OSError, ValueError) as exc:
        print(f"opshard {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
