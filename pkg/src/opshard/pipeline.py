"""Per-slot Reduce pipeline whose stages work on different clusters at once.

Items enter in increasing load order so the first sort and first run start
as early as possible after the Map phase ends. Each stage holds one item; a
finished item waits until the next stage takes it, so a slot never has more
than three clusters in memory.
"""

from __future__ import annotations

import enum
import heapq
import logging
import os
import queue
import re
import struct
import tempfile
import threading
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

from .core import KeyDist
from .errors import IncompleteTraceError, SlotFailure

log = logging.getLogger("opshard.pipeline")

DEFAULT_SORT_THRESHOLD = 64 * 1024 * 1024
STAGES = ("copy", "sort", "run")

Record = tuple[bytes, bytes]


class ItemState(enum.IntEnum):
    PENDING = 0
    COPYING = 1
    COPIED = 2
    SORTING = 3
    SORTED = 4
    RUNNING = 5
    DONE = 6


@dataclass
class PipelineItem:
    cluster: int
    load: int
    copy_bytes: int = 0
    state: ItemState = ItemState.PENDING

    def advance(self, new: ItemState) -> None:
        if new <= self.state:
            raise ValueError(f"cluster {self.cluster}: state cannot move from {self.state.name} to {new.name}")
        self.state = new


@dataclass
class PipelinePlan:
    items: list[PipelineItem]
    slot: int
    memory_sort_threshold: int = DEFAULT_SORT_THRESHOLD

    @property
    def clusters(self) -> list[int]:
        return [it.cluster for it in self.items]


@dataclass(frozen=True)
class DelayReport:
    map_done_at: float
    first_sort_at: float
    first_run_at: float

    @property
    def sort_delay(self) -> float:
        return self.first_sort_at - self.map_done_at

    @property
    def run_delay(self) -> float:
        return self.first_run_at - self.map_done_at


def plan(
    owned_clusters: Iterable[int],
    dist: KeyDist,
    threshold: int = DEFAULT_SORT_THRESHOLD,
    slot: int = 1,
    copy_bytes: Mapping[int, int] | None = None,
) -> PipelinePlan:
    """Owned clusters ordered by load, ties by cluster id."""
    copy_bytes = copy_bytes or {}
    order = sorted(set(owned_clusters), key=lambda c: (dist.loads[c - 1], c))
    items = [PipelineItem(c, dist.loads[c - 1], copy_bytes.get(c, 0)) for c in order]
    return PipelinePlan(items, slot, threshold)


# -- tracing -----------------------------------------------------------------

_LINE = re.compile(r"^event=(\w+)(?: slot=(-?\d+) cluster=(-?\d+) stage=(\w+))? t=(-?\d+)$")


def now_micros() -> int:
    return time.monotonic_ns() // 1000


@dataclass(frozen=True)
class TraceEvent:
    event: str
    slot: int
    cluster: int
    stage: str
    t: int

    def line(self) -> str:
        if self.event == "map_done":
            return f"event=map_done t={self.t}"
        return f"event={self.event} slot={self.slot} cluster={self.cluster} stage={self.stage} t={self.t}"


class Tracer:
    """Thread-safe collector of ``phase_enter``/``phase_exit`` events.

    Lines also go to the ``opshard.trace`` logger, which is silent unless
    ``OPSHARD_LOG`` is set (see ``configure_logging``).
    """

    def __init__(self, clock: Callable[[], int] = now_micros):
        self.clock = clock
        self.events: list[TraceEvent] = []
        self._lock = threading.Lock()
        self._log = logging.getLogger("opshard.trace")

    def emit(self, event: str, slot: int = 0, cluster: int = 0, stage: str = "", t: int | None = None) -> TraceEvent:
        ev = TraceEvent(event, slot, cluster, stage, self.clock() if t is None else t)
        with self._lock:
            self.events.append(ev)
        self._log.debug(ev.line())
        return ev

    def map_done(self, t: int | None = None) -> TraceEvent:
        return self.emit("map_done", t=t)

    def lines(self) -> list[str]:
        with self._lock:
            return [e.line() for e in self.events]


def parse_trace(lines: Iterable[str]) -> list[TraceEvent]:
    out = []
    for raw in lines:
        raw = raw.strip()
        if not raw:
            continue
        m = _LINE.match(raw)
        if not m:
            raise ValueError(f"malformed trace line: {raw!r}")
        event, slot, cluster, stage, t = m.groups()
        out.append(TraceEvent(event, int(slot or 0), int(cluster or 0), stage or "", int(t)))
    return out


def measure_delays(trace: Iterable[str] | Iterable[TraceEvent], slot: int | None = None, map_done_at: float | None = None) -> DelayReport:
    """Sort and run delay for one slot (or the earliest across slots when ``slot`` is None)."""
    raw = list(trace)
    if all(isinstance(e, TraceEvent) for e in raw):
        events = raw
    else:
        events = parse_trace(raw)  # type: ignore[arg-type]
    if map_done_at is None:
        done = [e.t for e in events if e.event == "map_done"]
        if not done:
            raise IncompleteTraceError("trace has no map_done anchor")
        map_done_at = max(done)

    def first(stage: str) -> int:
        ts = [
            e.t
            for e in events
            if e.event == "phase_enter" and e.stage == stage and (slot is None or e.slot == slot)
        ]
        if not ts:
            raise IncompleteTraceError(f"no {stage} entry for slot {slot}")
        return min(ts)

    return DelayReport(map_done_at, first("sort"), first("run"))


def average_delays(reports: Sequence[DelayReport]) -> tuple[float, float]:
    if not reports:
        return 0.0, 0.0
    return (
        sum(r.sort_delay for r in reports) / len(reports),
        sum(r.run_delay for r in reports) / len(reports),
    )


# -- sorting -----------------------------------------------------------------

_LEN = struct.Struct(">I")


def record_bytes(records: Iterable[Record]) -> int:
    return sum(8 + len(k) + len(v) for k, v in records)


def _write_run(records: Sequence[Record], directory: str | None) -> str:
    fd, path = tempfile.mkstemp(prefix="spill-", suffix=".run", dir=directory)
    with os.fdopen(fd, "wb") as fh:
        for k, v in records:
            fh.write(_LEN.pack(len(k)))
            fh.write(k)
            fh.write(_LEN.pack(len(v)))
            fh.write(v)
    return path


def _read_run(path: str) -> Iterator[Record]:
    with open(path, "rb") as fh:
        while True:
            head = fh.read(4)
            if not head:
                return
            k = fh.read(_LEN.unpack(head)[0])
            v = fh.read(_LEN.unpack(fh.read(4))[0])
            yield k, v


@dataclass
class SortStats:
    external: bool = False
    runs: int = 0
    bytes: int = 0


def sort_cluster(
    records: Sequence[Record],
    threshold: int = DEFAULT_SORT_THRESHOLD,
    spill_dir: str | None = None,
    stats: SortStats | None = None,
) -> list[Record]:
    """Records ordered by (key, value).

    Inputs no larger than ``threshold`` bytes sort in memory. Larger inputs are
    cut into runs of at most ``threshold`` bytes, each sorted and spilled to a
    file, then merged; the result is identical either way.
    """
    size = record_bytes(records)
    if stats is not None:
        stats.bytes = size
    if size <= threshold:
        return sorted(records)
    paths = []
    try:
        run: list[Record] = []
        run_size = 0
        for rec in records:
            rec_size = 8 + len(rec[0]) + len(rec[1])
            if run and run_size + rec_size > threshold:
                paths.append(_write_run(sorted(run), spill_dir))
                run, run_size = [], 0
            run.append(rec)
            run_size += rec_size
        if run:
            paths.append(_write_run(sorted(run), spill_dir))
        if stats is not None:
            stats.external = True
            stats.runs = len(paths)
        return list(heapq.merge(*(_read_run(p) for p in paths)))
    finally:
        for p in paths:
            try:
                os.unlink(p)
            except OSError:
                pass


def group_sorted(records: Iterable[Record]) -> Iterator[tuple[bytes, list[bytes]]]:
    key, values = None, []
    for k, v in records:
        if k != key:
            if key is not None:
                yield key, values
            key, values = k, []
        values.append(v)
    if key is not None:
        yield key, values


# -- execution ---------------------------------------------------------------

_STOP = object()


class _Handoff:
    """Single-slot rendezvous: ``put`` returns only once the consumer has taken the item."""

    def __init__(self, abort: threading.Event):
        self._q: queue.Queue = queue.Queue(maxsize=1)
        self._taken = threading.Semaphore(0)
        self._abort = abort

    def put(self, item: Any) -> bool:
        while True:
            try:
                self._q.put(item, timeout=0.05)
                break
            except queue.Full:
                if self._abort.is_set():
                    return False
        if item is _STOP:
            return True
        while not self._taken.acquire(timeout=0.05):
            if self._abort.is_set():
                return False
        return True

    def get(self) -> Any:
        while True:
            try:
                item = self._q.get(timeout=0.05)
            except queue.Empty:
                if self._abort.is_set():
                    return _STOP
                continue
            if item is not _STOP:
                self._taken.release()
            return item


@dataclass
class SlotResult:
    slot: int
    outputs: dict[int, Any]
    delays: DelayReport | None
    started_at: int
    finished_at: int
    sort_stats: dict[int, SortStats] = field(default_factory=dict)
    stage_micros: dict[str, list[int]] = field(default_factory=lambda: {s: [] for s in STAGES})

    @property
    def duration(self) -> int:
        return self.finished_at - self.started_at


Fetcher = Callable[[PipelineItem], Sequence[Record]]
Sorter = Callable[[PipelineItem, Sequence[Record]], Sequence[Record]]
Reducer = Callable[[int, Sequence[Record]], Any]


def default_sorter(threshold: int, spill_dir: str | None = None, stats: dict[int, SortStats] | None = None) -> Sorter:
    def sorter(item: PipelineItem, records: Sequence[Record]) -> list[Record]:
        st = SortStats()
        out = sort_cluster(records, threshold, spill_dir, st)
        if stats is not None:
            stats[item.cluster] = st
        return out

    return sorter


def execute(
    plan: PipelinePlan,
    fetcher: Fetcher,
    sorter: Sorter | None,
    reducer: Reducer,
    tracer: Tracer | None = None,
    map_done_at: int | None = None,
    pipelined: bool = True,
    fetch_retries: int = 1,
) -> SlotResult:
    """Run one slot's plan and return per-cluster reducer outputs plus delays.

    With ``pipelined=False`` every item is copied, then every item sorted, then
    every item run, which is the sequential reference behaviour.
    """
    tracer = tracer or Tracer()
    sort_stats: dict[int, SortStats] = {}
    sorter = sorter or default_sorter(plan.memory_sort_threshold, stats=sort_stats)
    if map_done_at is None:
        map_done_at = tracer.map_done().t
    slot = plan.slot
    started = tracer.clock()
    result = SlotResult(slot, {}, None, started, started, sort_stats)
    failure: list[BaseException] = []
    abort = threading.Event()

    def stage(name: str, item: PipelineItem, fn: Callable[[], Any], enter: ItemState, leave: ItemState) -> Any:
        item.advance(enter)
        t0 = tracer.emit("phase_enter", slot, item.cluster, name).t
        value = fn()
        t1 = tracer.emit("phase_exit", slot, item.cluster, name).t
        result.stage_micros[name].append(t1 - t0)
        item.advance(leave)
        return value

    def do_copy(item: PipelineItem) -> Sequence[Record]:
        last: BaseException | None = None
        for _ in range(fetch_retries + 1):
            try:
                return fetcher(item)
            except Exception as exc:  # retried, then surfaced as a slot failure
                last = exc
        raise SlotFailure(slot, item.cluster, f"fetch failed: {last}") from last

    def do_run(item: PipelineItem, records: Sequence[Record]) -> Any:
        try:
            return reducer(item.cluster, records)
        except Exception as exc:
            raise SlotFailure(slot, item.cluster, f"reducer raised {type(exc).__name__}: {exc}") from exc

    def do_sort(item: PipelineItem, records: Sequence[Record]) -> Sequence[Record]:
        try:
            return sorter(item, records)
        except OSError as exc:
            raise SlotFailure(slot, item.cluster, f"spill I/O failed: {exc}") from exc

    if not pipelined:
        try:
            copied = [(it, stage("copy", it, lambda it=it: do_copy(it), ItemState.COPYING, ItemState.COPIED)) for it in plan.items]
            sorted_ = [(it, stage("sort", it, lambda it=it, r=r: do_sort(it, r), ItemState.SORTING, ItemState.SORTED)) for it, r in copied]
            for it, r in sorted_:
                result.outputs[it.cluster] = stage("run", it, lambda it=it, r=r: do_run(it, r), ItemState.RUNNING, ItemState.DONE)
        finally:
            result.finished_at = tracer.clock()
        result.delays = _delays_or_none(tracer, slot, map_done_at)
        return result

    to_sort = _Handoff(abort)
    to_run = _Handoff(abort)

    def guarded(body: Callable[[], None], downstream: _Handoff | None) -> Callable[[], None]:
        def runner() -> None:
            try:
                body()
            except BaseException as exc:
                failure.append(exc)
                abort.set()
            finally:
                if downstream is not None and not abort.is_set():
                    downstream.put(_STOP)

        return runner

    def copier() -> None:
        for it in plan.items:
            if abort.is_set():
                return
            records = stage("copy", it, lambda: do_copy(it), ItemState.COPYING, ItemState.COPIED)
            if not to_sort.put((it, records)):
                return

    def sort_worker() -> None:
        while True:
            got = to_sort.get()
            if got is _STOP:
                return
            it, records = got
            out = stage("sort", it, lambda: do_sort(it, records), ItemState.SORTING, ItemState.SORTED)
            if not to_run.put((it, out)):
                return

    def run_worker() -> None:
        while True:
            got = to_run.get()
            if got is _STOP:
                return
            it, records = got
            result.outputs[it.cluster] = stage("run", it, lambda: do_run(it, records), ItemState.RUNNING, ItemState.DONE)

    threads = [
        threading.Thread(target=guarded(copier, to_sort), name=f"slot{slot}-copy"),
        threading.Thread(target=guarded(sort_worker, to_run), name=f"slot{slot}-sort"),
        threading.Thread(target=guarded(run_worker, None), name=f"slot{slot}-run"),
    ]
    for th in threads:
        th.start()
    for th in threads:
        th.join()
    result.finished_at = tracer.clock()
    if failure:
        exc = failure[0]
        if isinstance(exc, SlotFailure):
            raise exc
        raise SlotFailure(slot, None, f"{type(exc).__name__}: {exc}") from exc
    result.delays = _delays_or_none(tracer, slot, map_done_at)
    return result


def _delays_or_none(tracer: Tracer, slot: int, map_done_at: int) -> DelayReport | None:
    try:
        return measure_delays(tracer.events, slot=slot, map_done_at=map_done_at)
    except IncompleteTraceError:
        return None


def pipelined_makespan(stage_times: Sequence[tuple[float, float, float]]) -> float:
    """Finish time of the last run for a 3-stage pipeline with rendezvous handoff.

    ``stage_times[i]`` is (copy, sort, run) for the i-th item in plan order.
    """
    n = len(stage_times)
    if n == 0:
        return 0.0
    c_end = [0.0] * n
    s_start = [0.0] * n
    s_end = [0.0] * n
    r_start = [0.0] * n
    r_end = [0.0] * n
    for i, (c, s, r) in enumerate(stage_times):
        # copy of item i starts after copy i-1 ended and item i-1 was handed to sort
        c_start = 0.0 if i == 0 else max(c_end[i - 1], s_start[i - 1])
        c_end[i] = c_start + c
        s_start[i] = max(c_end[i], s_end[i - 1] if i else 0.0, r_start[i - 1] if i else 0.0)
        s_end[i] = s_start[i] + s
        r_start[i] = max(s_end[i], r_end[i - 1] if i else 0.0)
        r_end[i] = r_start[i] + r
    return r_end[-1]


def sequential_makespan(stage_times: Sequence[tuple[float, float, float]]) -> float:
    return sum(c + s + r for c, s, r in stage_times)
