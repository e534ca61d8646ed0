"""Single-machine MapReduce runtime.

A job runs in strict phases: every Map task writes one bucket file per
cluster it produced and reports a count vector; after the barrier the master
turns the summed vectors into a schedule of clusters onto Reduce slots; then each slot pulls its clusters' bucket files through the
copy/sort/run pipeline.
"""

from __future__ import annotations

import logging
import re
import struct
import tempfile
import threading
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import comm, pipeline
from .cluster import Clusterer
from .core import JobConfig, KeyDist, Schedule, slot_loads, relative_stddev
from .errors import JobFailure, OpshardError, ProtocolError, SlotFailure
from .metrics import MetricsBundle
from .sched import solve

log = logging.getLogger("opshard.engine")

Record = tuple[bytes, bytes]
MapFn = Callable[[bytes], Iterable[Record]]
ReduceFn = Callable[[bytes, list[bytes]], Iterable[Record]]

BUCKET_MAGIC = b"OSB1"
OUTPUT_MAGIC = b"OSR1"
_BUCKET_HEAD = struct.Struct(">4sIIQ")
_OUTPUT_HEAD = struct.Struct(">4sIQ")
_LEN = struct.Struct(">I")


# -- file formats ------------------------------------------------------------


def encode_records(records: Iterable[Record]) -> bytes:
    pack = _LEN.pack
    parts = []
    for k, v in records:
        parts += (pack(len(k)), k, pack(len(v)), v)
    return b"".join(parts)


def decode_records(data: bytes, offset: int, count: int, where: str = "") -> list[Record]:
    out = []
    unpack = _LEN.unpack_from
    end = len(data)
    for _ in range(count):
        if offset + 4 > end:
            raise ProtocolError(f"{where}: truncated record")
        (klen,) = unpack(data, offset)
        offset += 4
        key = data[offset : offset + klen]
        offset += klen
        if offset + 4 > end:
            raise ProtocolError(f"{where}: truncated record")
        (vlen,) = unpack(data, offset)
        offset += 4
        val = data[offset : offset + vlen]
        offset += vlen
        if len(val) != vlen:
            raise ProtocolError(f"{where}: truncated value")
        out.append((key, val))
    if offset != end:
        raise ProtocolError(f"{where}: {end - offset} trailing bytes")
    return out


@dataclass(frozen=True)
class BucketFile:
    path: Path
    map_task_id: int
    cluster: int
    records: list[Record]

    @property
    def record_count(self) -> int:
        return len(self.records)


def write_bucket(path: str | Path, map_task_id: int, cluster: int, records: Sequence[Record]) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_BUCKET_HEAD.pack(BUCKET_MAGIC, map_task_id, cluster, len(records)))
        fh.write(encode_records(records))
    return path


def read_bucket(path: str | Path) -> BucketFile:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _BUCKET_HEAD.size:
        raise ProtocolError(f"{path}: truncated bucket header")
    magic, task, cluster, count = _BUCKET_HEAD.unpack_from(data)
    if magic != BUCKET_MAGIC:
        raise ProtocolError(f"{path}: bad magic {magic!r}")
    return BucketFile(path, task, cluster, decode_records(data, _BUCKET_HEAD.size, count, str(path)))


def write_output(path: str | Path, cluster: int, records: Sequence[Record]) -> Path:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_OUTPUT_HEAD.pack(OUTPUT_MAGIC, cluster, len(records)))
        fh.write(encode_records(records))
    return path


def read_output(path: str | Path) -> tuple[int, list[Record]]:
    data = Path(path).read_bytes()
    magic, cluster, count = _OUTPUT_HEAD.unpack_from(data)
    if magic != OUTPUT_MAGIC:
        raise ProtocolError(f"{path}: bad magic {magic!r}")
    return cluster, decode_records(data, _OUTPUT_HEAD.size, count, str(path))


# -- job description ---------------------------------------------------------


@dataclass
class JobSpec:
    map_fn: MapFn
    reduce_fn: ReduceFn
    input: Sequence[bytes]
    config: JobConfig = field(default_factory=JobConfig)
    clusterer: Clusterer | None = None
    work_dir: str | Path | None = None
    # fault injection for tests: (task id, attempt id) pairs whose Map attempt raises,
    # and task ids that get a second, speculative successful attempt
    fail_attempts: frozenset[tuple[int, int]] = frozenset()
    duplicate_tasks: frozenset[int] = frozenset()

    def __post_init__(self):
        if self.clusterer is None:
            self.clusterer = Clusterer(self.config.n_target)
        elif self.clusterer.n_target != self.config.n_target:
            raise OpshardError(
                f"clusterer n_target {self.clusterer.n_target} differs from config n_target {self.config.n_target}"
            )


@dataclass
class MapTaskResult:
    task_id: int
    attempt_id: int
    buckets: dict[int, Path]
    stats: comm.StatsMessage
    duration: float


@dataclass
class JobResult:
    outputs: dict[int, list[Record]]
    metrics: MetricsBundle
    dist: KeyDist
    schedule: Schedule | None
    work_dir: Path
    trace: list[str]
    slots: dict[int, pipeline.SlotResult] = field(default_factory=dict)
    registry: comm.StatsRegistry | None = None

    def records(self) -> list[Record]:
        return sorted(r for recs in self.outputs.values() for r in recs)


def split_input(records: Sequence[bytes], map_slots: int, w: int) -> list[list[bytes]]:
    """``w * map_slots`` contiguous splits whose sizes differ by at most one."""
    if w < 1 or map_slots < 1:
        raise OpshardError("map_slots and w must be >= 1")
    tasks = w * map_slots
    q, rem = divmod(len(records), tasks)
    out, start = [], 0
    for i in range(tasks):
        size = q + (1 if i < rem else 0)
        out.append(list(records[start : start + size]))
        start += size
    return out


def run_map_task(
    task_id: int,
    records: Sequence[bytes],
    map_fn: MapFn,
    clusterer: Clusterer,
    bucket_dir: str | Path,
    attempt_id: int = 0,
) -> MapTaskResult:
    """Run one Map attempt; exceptions from ``map_fn`` propagate to the caller."""
    started = time.perf_counter()
    pairs: list[Record] = []
    for rec in records:
        pairs.extend(map_fn(rec))
    groups: dict[int, list[Record]] = defaultdict(list)
    for cid, pair in zip(clusterer.many([k for k, _ in pairs]), pairs):
        groups[cid].append(pair)
    counts = [0] * clusterer.n_target
    buckets = {}
    for cid in sorted(groups):
        recs = groups[cid]
        counts[cid - 1] = len(recs)
        name = f"map-{task_id:05d}-a{attempt_id}-c{cid:05d}.osb"
        buckets[cid] = write_bucket(Path(bucket_dir) / name, task_id, cid, recs)
    stats = comm.StatsMessage(task_id, attempt_id, tuple(counts), True)
    return MapTaskResult(task_id, attempt_id, buckets, stats, time.perf_counter() - started)


def recount_buckets(paths: Iterable[str | Path], n: int) -> KeyDist:
    """Per-cluster loads from the bucket files alone."""
    loads = [0] * n
    for p in paths:
        b = read_bucket(p)
        loads[b.cluster - 1] += b.record_count
    return KeyDist(loads)


# -- job driver --------------------------------------------------------------


class _MapPhase:
    def __init__(self, spec: JobSpec, bucket_dir: Path, trackers: list[comm.Tracker]):
        self.spec = spec
        self.bucket_dir = bucket_dir
        self.trackers = trackers
        self.lock = threading.Lock()
        self.committed: dict[int, MapTaskResult] = {}
        self.discarded: list[Path] = []

    def _report(self, task_id: int, msg: comm.StatsMessage) -> None:
        tracker = self.trackers[(task_id - 1) % len(self.trackers)]
        with self.lock:
            comm.send_stats(msg, tracker)

    def _attempt(self, task_id: int, records: Sequence[bytes], attempt: int) -> MapTaskResult:
        spec = self.spec
        if (task_id, attempt) in spec.fail_attempts:
            def fn(rec, _task=task_id, _attempt=attempt):
                raise RuntimeError(f"injected failure in task {_task} attempt {_attempt}")
        else:
            fn = spec.map_fn
        return run_map_task(task_id, records, fn, spec.clusterer, self.bucket_dir, attempt)

    def run_task(self, task_id: int, records: Sequence[bytes]) -> MapTaskResult:
        n = self.spec.clusterer.n_target
        result = None
        for attempt in (0, 1):
            try:
                result = self._attempt(task_id, records, attempt)
                break
            except Exception as exc:
                log.warning("map task %d attempt %d failed: %s", task_id, attempt, exc)
                self._report(task_id, comm.StatsMessage(task_id, attempt, (0,) * n, False))
                if attempt == 1:
                    raise JobFailure(f"map task {task_id} failed twice: {exc}") from exc
        self._report(task_id, result.stats)
        with self.lock:
            self.committed[task_id] = result
        if task_id in self.spec.duplicate_tasks:
            dup = self._attempt(task_id, records, result.attempt_id + 1)
            self._report(task_id, dup.stats)
            with self.lock:
                self.discarded.extend(dup.buckets.values())
        return result


def run_job(spec: JobSpec, tracer: pipeline.Tracer | None = None) -> JobResult:
    cfg = spec.config
    clusterer = spec.clusterer
    tracer = tracer or pipeline.Tracer()
    job_started = time.perf_counter()
    if spec.work_dir is None:
        work_dir = Path(tempfile.mkdtemp(prefix="opshard-"))
    else:
        work_dir = Path(spec.work_dir)
        work_dir.mkdir(parents=True, exist_ok=True)
    bucket_dir = work_dir / "buckets"
    out_dir = work_dir / "output"
    spill_dir = work_dir / "spill"
    for d in (bucket_dir, out_dir, spill_dir):
        d.mkdir(exist_ok=True)
        for stale in d.iterdir():
            stale.unlink()

    transport = comm.Transport()
    slots_of_node: dict[int, list[int]] = defaultdict(list)
    for slot in range(1, cfg.m + 1):
        slots_of_node[(slot - 1) % cfg.trackers + 1].append(slot)
    trackers = [comm.Tracker(t, transport, slots_of_node[t]) for t in range(1, cfg.trackers + 1)]

    # Map phase
    splits = split_input(spec.input, cfg.map_slots, cfg.w)
    phase = _MapPhase(spec, bucket_dir, trackers)
    map_started = time.perf_counter()
    with ThreadPoolExecutor(max_workers=cfg.map_slots, thread_name_prefix="map") as pool:
        futures = [pool.submit(phase.run_task, i, split) for i, split in enumerate(splits, 1)]
        results = [f.result() for f in futures]
    map_phase_time = time.perf_counter() - map_started
    map_done = tracer.map_done().t
    for p in phase.discarded:
        p.unlink()

    # statistics, scheduling, broadcast
    master = comm.Master(clusterer.n_target, len(splits), transport)
    master.collect(trackers)
    dist = master.aggregate()
    result = solve(cfg.scheduler_kind, dist, cfg.m, cfg.eta)
    delivered = comm.broadcast_schedule(result.schedule, trackers, transport)

    bucket_paths: dict[int, list[Path]] = defaultdict(list)
    for r in sorted(results, key=lambda r: r.task_id):
        for cid, path in r.buckets.items():
            bucket_paths[cid].append(path)

    def fetch(item: pipeline.PipelineItem) -> list[Record]:
        recs: list[Record] = []
        for p in bucket_paths.get(item.cluster, ()):
            recs.extend(read_bucket(p).records)
        return recs

    def reducer(cluster: int, records: Sequence[Record]) -> list[Record]:
        out: list[Record] = []
        for key, values in pipeline.group_sorted(records):
            out.extend(spec.reduce_fn(key, values))
        write_output(out_dir / f"part-{cluster:05d}.osr", cluster, out)
        return out

    # Reduce phase: one pipeline per slot, slots in parallel
    reduce_started = time.perf_counter()
    slot_results: dict[int, pipeline.SlotResult] = {}
    failures: list[BaseException] = []

    def run_slot(slot: int) -> None:
        sched = delivered[slot]
        owned = [c for c in sched.owned(slot) if dist.loads[c - 1] > 0]
        copy_bytes = {c: sum(p.stat().st_size for p in bucket_paths.get(c, ())) for c in owned}
        plan = pipeline.plan(owned, dist, cfg.memory_sort_threshold, slot, copy_bytes)
        stats: dict[int, pipeline.SortStats] = {}
        sorter = pipeline.default_sorter(cfg.memory_sort_threshold, str(spill_dir), stats)
        try:
            res = pipeline.execute(plan, fetch, sorter, reducer, tracer, map_done)
            res.sort_stats.update(stats)
            slot_results[slot] = res
        except BaseException as exc:
            failures.append(exc)

    threads = [threading.Thread(target=run_slot, args=(s,), name=f"reduce-{s}") for s in range(1, cfg.m + 1)]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    reduce_phase_time = time.perf_counter() - reduce_started
    if failures:
        exc = failures[0]
        if isinstance(exc, SlotFailure):
            raise JobFailure(f"reduce {exc}") from exc
        raise JobFailure(f"reduce slot failed: {exc}") from exc

    outputs: dict[int, list[Record]] = {}
    for res in slot_results.values():
        outputs.update(res.outputs)

    loads = slot_loads(dist, result.schedule).loads
    estimate = comm.network_cost_estimate(len(splits), clusterer.n_target, cfg.trackers, cfg.m)
    metrics = MetricsBundle(
        scheduler=result.solver,
        m=cfg.m,
        n=clusterer.n_target,
        map_tasks=len(splits),
        trackers=cfg.trackers,
        max_load=result.max_load,
        total_load=dist.total,
        ideal_load=float(result.ideal),
        ratio=result.ratio,
        load_rsd=relative_stddev(loads),
        collect_bytes=transport.total("collect"),
        broadcast_bytes=transport.total("broadcast"),
        wire_bytes=transport.total(wire=True),
        network_bound=estimate.total_upper_bound,
        outputs=sum(len(v) for v in outputs.values()),
        slot_load=list(loads),
        scheduler_time=result.solver_time,
        map_phase_time=map_phase_time,
        reduce_phase_time=reduce_phase_time,
        job_time=time.perf_counter() - job_started,
        reduce_time=[slot_results[s].duration / 1e6 for s in range(1, cfg.m + 1)],
        sort_delay=[_delay(slot_results[s], "sort") for s in range(1, cfg.m + 1)],
        run_delay=[_delay(slot_results[s], "run") for s in range(1, cfg.m + 1)],
        map_time=[r.duration for r in sorted(results, key=lambda r: r.task_id)],
    )
    return JobResult(outputs, metrics, dist, result.schedule, work_dir, tracer.lines(), slot_results, master.registry)


def _delay(res: pipeline.SlotResult, which: str) -> float:
    if res.delays is None:
        return float("nan")
    return (res.delays.sort_delay if which == "sort" else res.delays.run_delay) / 1e6


# -- built-in jobs -----------------------------------------------------------

_WORD = re.compile(rb"[A-Za-z0-9']+")


def wordcount_map(line: bytes) -> list[Record]:
    return [(w.lower(), b"1") for w in _WORD.findall(line)]


def wordcount_reduce(key: bytes, values: list[bytes]) -> list[Record]:
    return [(key, b"%d" % sum(int(v) for v in values))]


def inverted_index_map(record: bytes) -> list[Record]:
    doc, _, text = record.partition(b"\t")
    return [(w, doc) for w in sorted({w.lower() for w in _WORD.findall(text)})]


def inverted_index_reduce(key: bytes, values: list[bytes]) -> list[Record]:
    docs = sorted(set(values), key=lambda d: (len(d), d))
    return [(key, b",".join(docs))]


def histogram_map(record: bytes) -> list[Record]:
    return [(record, b"1")]


def number_docs(lines: Sequence[bytes]) -> list[bytes]:
    """Prefix each line with its 1-based index as an inverted-index document id."""
    return [b"%d\t%s" % (i, line) for i, line in enumerate(lines, 1)]


JOBS: dict[str, tuple[MapFn, ReduceFn]] = {
    "wordcount": (wordcount_map, wordcount_reduce),
    "inverted-index": (inverted_index_map, inverted_index_reduce),
    "histogram": (histogram_map, wordcount_reduce),
}


def reference_run(job: str, records: Sequence[bytes]) -> list[Record]:
    """Single-threaded in-memory evaluation of a built-in job."""
    map_fn, reduce_fn = JOBS[job]
    groups: dict[bytes, list[bytes]] = defaultdict(list)
    for rec in records:
        for k, v in map_fn(rec):
            groups[k].append(v)
    out = []
    for key in sorted(groups):
        out.extend(reduce_fn(key, sorted(groups[key])))
    return sorted(out)


def wordcount_reference(lines: Sequence[bytes]) -> dict[bytes, int]:
    counts: Counter = Counter()
    for line in lines:
        counts.update(w.lower() for w in _WORD.findall(line))
    return dict(counts)
