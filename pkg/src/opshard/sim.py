"""Discrete-event model of a small cluster running one MapReduce job.

Nodes own three bandwidth resources (network interface, disk read, disk
write). A transfer is a flow over one or more resources; every resource
splits its bandwidth equally among the flows on it, and a flow moves at the
smallest share it gets. CPU work (Map compute, sort, reduce) is a plain delay
on the slot's own core.

Two overlap modes are modelled. In ``HADOOP`` mode each Reduce slot fetches a
Map task's output as soon as that task finishes, so shuffle traffic competes
with later Map waves for disk bandwidth. In ``OS4M`` mode nothing is copied
until the last Map task is done; each slot then runs its clusters through the
copy/sort/run pipeline (or strictly sequentially).
"""

from __future__ import annotations

import csv
import enum
import heapq
import io
import itertools
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Generator, Iterable, Sequence

from .core import KeyDist, Schedule
from .errors import InvalidInputError

MB = 1_000_000


class OverlapMode(str, enum.Enum):
    HADOOP = "hadoop"
    OS4M = "os4m"


class PipelineMode(str, enum.Enum):
    SEQUENTIAL = "sequential"
    PIPELINED = "pipelined"


# -- event kernel ------------------------------------------------------------


class Event:
    __slots__ = ("sim", "callbacks", "triggered", "value")

    def __init__(self, sim: "Sim"):
        self.sim = sim
        self.callbacks: list[Callable[["Event"], None]] = []
        self.triggered = False
        self.value: Any = None

    def succeed(self, value: Any = None) -> "Event":
        if self.triggered:
            raise RuntimeError("event already triggered")
        self.triggered = True
        self.value = value
        for cb in self.callbacks:
            self.sim.schedule(0.0, cb, self)
        self.callbacks = []
        return self

    def on(self, cb: Callable[["Event"], None]) -> None:
        if self.triggered:
            self.sim.schedule(0.0, cb, self)
        else:
            self.callbacks.append(cb)


@dataclass
class _Flow:
    resources: tuple[str, ...]
    size: float
    remaining: float
    done: Event
    rate: float = 0.0


class Sim:
    """Time in seconds; simultaneous events run in scheduling order."""

    def __init__(self, bandwidth: dict[str, float] | None = None):
        self.now = 0.0
        self._heap: list = []
        self._seq = itertools.count()
        self.bandwidth = dict(bandwidth or {})
        self.flows: list[_Flow] = []
        self.served: dict[str, float] = {r: 0.0 for r in self.bandwidth}
        self.requested: dict[str, float] = {r: 0.0 for r in self.bandwidth}
        self._flow_clock = 0.0
        self._flow_version = 0

    def schedule(self, delay: float, fn: Callable, *args) -> None:
        heapq.heappush(self._heap, (self.now + delay, next(self._seq), fn, args))

    def event(self) -> Event:
        return Event(self)

    def timeout(self, delay: float) -> Event:
        ev = Event(self)
        self.schedule(max(0.0, delay), ev.succeed)
        return ev

    def process(self, gen: Generator[Event, Any, Any]) -> Event:
        done = Event(self)

        def step(ev: Event | None) -> None:
            try:
                nxt = gen.send(None if ev is None else ev.value)
            except StopIteration as stop:
                done.succeed(stop.value)
                return
            nxt.on(step)

        self.schedule(0.0, step, None)
        return done

    def all_of(self, events: Sequence[Event]) -> Event:
        done = Event(self)
        pending = [len(events)]
        if not events:
            self.schedule(0.0, done.succeed)
            return done

        def one(_ev: Event) -> None:
            pending[0] -= 1
            if pending[0] == 0:
                done.succeed()

        for ev in events:
            ev.on(one)
        return done

    # processor-sharing flows

    def transfer(self, resources: Iterable[str], nbytes: float) -> Event:
        ev = Event(self)
        resources = tuple(resources)
        for r in resources:
            if r not in self.bandwidth:
                raise KeyError(f"unknown resource {r}")
            self.requested[r] += nbytes
        if nbytes <= 0 or not resources:
            self.schedule(0.0, ev.succeed)
            return ev
        self._advance_flows()
        self.flows.append(_Flow(resources, float(nbytes), float(nbytes), ev))
        self._reschedule_flows()
        return ev

    def _advance_flows(self) -> None:
        dt = self.now - self._flow_clock
        if dt > 0:
            for f in self.flows:
                moved = min(f.remaining, f.rate * dt)
                f.remaining -= moved
                for r in f.resources:
                    self.served[r] += moved
        self._flow_clock = self.now

    def _reschedule_flows(self) -> None:
        counts: dict[str, int] = {}
        for f in self.flows:
            for r in f.resources:
                counts[r] = counts.get(r, 0) + 1
        soonest = math.inf
        for f in self.flows:
            f.rate = min(self.bandwidth[r] / counts[r] for r in f.resources)
            soonest = min(soonest, f.remaining / f.rate)
        self._flow_version += 1
        if self.flows:
            self.schedule(soonest, self._flow_tick, self._flow_version)

    def _flow_tick(self, version: int) -> None:
        if version != self._flow_version:
            return
        self._advance_flows()
        finished = [f for f in self.flows if f.remaining <= 1e-9 * f.size]
        self.flows = [f for f in self.flows if f.remaining > 1e-9 * f.size]
        for f in finished:
            for r in f.resources:
                self.served[r] += f.remaining
            f.remaining = 0.0
            f.done.succeed()
        self._reschedule_flows()

    def run(self, until: float = math.inf) -> float:
        while self._heap:
            t, _, fn, args = self._heap[0]
            if t > until:
                break
            heapq.heappop(self._heap)
            self.now = t
            fn(*args)
        return self.now


class Handoff:
    """Single-slot rendezvous between two simulated stages."""

    def __init__(self, sim: Sim):
        self.sim = sim
        self._item: Any = None
        self._full = False
        self._getters: list[Event] = []
        self._taken: Event | None = None

    def put(self, item: Any) -> Event:
        """Event fires once a consumer has taken ``item``."""
        if self._full:
            raise RuntimeError("handoff already occupied")
        self._item, self._full = item, True
        self._taken = self.sim.event()
        taken = self._taken
        if self._getters:
            self._deliver(self._getters.pop(0))
        return taken

    def get(self) -> Event:
        ev = self.sim.event()
        if self._full:
            self._deliver(ev)
        else:
            self._getters.append(ev)
        return ev

    def _deliver(self, ev: Event) -> None:
        item, taken = self._item, self._taken
        self._item, self._full, self._taken = None, False, None
        ev.succeed(item)
        taken.succeed()


# -- controlled stage-time pipelines ----------------------------------------


def stage_pipeline_makespan(stage_times: Sequence[tuple[float, float, float]], pipelined: bool = True) -> float:
    """Makespan of one slot whose items have fixed (copy, sort, run) times."""
    sim = Sim()
    if not pipelined:
        def seq():
            for c, _, _ in stage_times:
                yield sim.timeout(c)
            for _, s, _ in stage_times:
                yield sim.timeout(s)
            for _, _, r in stage_times:
                yield sim.timeout(r)

        sim.process(seq())
        return sim.run()
    done = _pipeline_processes(
        sim,
        list(range(len(stage_times))),
        copy=lambda i: sim.timeout(stage_times[i][0]),
        sort=lambda i: sim.timeout(stage_times[i][1]),
        run=lambda i: sim.timeout(stage_times[i][2]),
    )
    sim.run()
    assert done.triggered
    return sim.now


_END = object()


def _pipeline_processes(sim: Sim, items: Sequence[Any], copy, sort, run, on_stage=None) -> Event:
    to_sort, to_run = Handoff(sim), Handoff(sim)

    def note(stage, item, phase):
        if on_stage is not None:
            on_stage(stage, item, phase)

    def copier():
        for it in items:
            note("copy", it, "enter")
            yield copy(it)
            note("copy", it, "exit")
            yield to_sort.put(it)
        yield to_sort.put(_END)

    def sorter():
        while True:
            it = yield to_sort.get()
            if it is _END:
                yield to_run.put(_END)
                return
            note("sort", it, "enter")
            yield sort(it)
            note("sort", it, "exit")
            yield to_run.put(it)

    def runner():
        while True:
            it = yield to_run.get()
            if it is _END:
                return
            note("run", it, "enter")
            yield run(it)
            note("run", it, "exit")

    procs = [sim.process(copier()), sim.process(sorter()), sim.process(runner())]
    return sim.all_of(procs)


# -- cluster model -----------------------------------------------------------


@dataclass(frozen=True)
class SimConfig:
    nodes: int = 4
    map_slots_per_node: int = 2
    reduce_slots_per_node: int = 2
    net_bw: float = 37.0
    disk_read_bw: float = 203.0
    disk_write_bw: float = 121.0
    waves: int = 3
    map_tasks: int | None = None
    map_task_work: float = 10.0
    map_input_bytes: float = 64 * MB
    map_output_bytes: float = 64 * MB
    overlap_mode: OverlapMode = OverlapMode.OS4M
    pipeline_mode: PipelineMode = PipelineMode.PIPELINED
    dist: KeyDist | None = None
    schedule: Schedule | None = None
    sort_memory_bytes: float = 128 * MB
    sort_cpu_per_mb: float = 0.01
    reduce_cpu_per_mb: float = 0.02
    fetch_latency: float = 0.005
    merge_factor: int = 10

    def __post_init__(self):
        object.__setattr__(self, "overlap_mode", OverlapMode(self.overlap_mode))
        object.__setattr__(self, "pipeline_mode", PipelineMode(self.pipeline_mode))
        for name in ("nodes", "map_slots_per_node", "reduce_slots_per_node", "waves", "merge_factor"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise InvalidInputError(f"{name} must be an integer >= 1, got {value!r}")
        for name in ("net_bw", "disk_read_bw", "disk_write_bw", "sort_memory_bytes"):
            value = getattr(self, name)
            if not value > 0 or not math.isfinite(value):
                raise InvalidInputError(f"{name} must be a finite value > 0, got {value!r}")
        for name in ("map_task_work", "map_input_bytes", "map_output_bytes", "sort_cpu_per_mb",
                     "reduce_cpu_per_mb", "fetch_latency"):
            value = getattr(self, name)
            if value < 0 or not math.isfinite(value):
                raise InvalidInputError(f"{name} must be a finite value >= 0, got {value!r}")
        if self.map_tasks is not None and self.map_tasks < 1:
            raise InvalidInputError("map_tasks must be >= 1")
        if self.schedule is not None:
            if self.dist is None or self.schedule.n != self.dist.n:
                raise InvalidInputError("a schedule needs a distribution with the same cluster count")
            if self.schedule.m != self.reduce_slots:
                raise InvalidInputError(f"schedule has {self.schedule.m} slots, cluster has {self.reduce_slots}")

    @property
    def map_slots(self) -> int:
        return self.nodes * self.map_slots_per_node

    @property
    def reduce_slots(self) -> int:
        return self.nodes * self.reduce_slots_per_node

    @property
    def total_map_tasks(self) -> int:
        return self.map_tasks if self.map_tasks is not None else self.waves * self.map_slots


@dataclass
class SimTrace:
    mode: str
    samples: list[tuple[float, float, float, str]] = field(default_factory=list)
    wave_durations: list[float] = field(default_factory=list)
    wave_bounds: list[tuple[float, float]] = field(default_factory=list)
    map_end: float = 0.0
    reduce_start: float = 0.0
    reduce_end: float = 0.0
    first_copy_at: float = math.inf
    slot_timelines: dict[int, list[tuple[str, int, str, float]]] = field(default_factory=dict)
    sort_delays: list[float] = field(default_factory=list)
    run_delays: list[float] = field(default_factory=list)
    item_sort_times: list[float] = field(default_factory=list)
    overhead_time: float = 0.0
    served: dict[str, float] = field(default_factory=dict)
    requested: dict[str, float] = field(default_factory=dict)

    @property
    def job_time(self) -> float:
        return self.reduce_end

    @property
    def map_phase_time(self) -> float:
        return self.map_end

    @property
    def reduce_phase_time(self) -> float:
        return self.reduce_end - self.map_end

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("t", "map_fraction", "reduce_fraction", "event"))
        for t, mf, rf, ev in self.samples:
            w.writerow((_num(t), _num(mf), _num(rf), ev))
        return buf.getvalue()


def _num(x: float) -> str:
    return f"{x:.6f}"


def _default_dist(cfg: SimConfig) -> KeyDist:
    return KeyDist([1] * (8 * cfg.reduce_slots))


def _node_of_map_slot(cfg: SimConfig, slot: int) -> int:
    return (slot - 1) // cfg.map_slots_per_node + 1


def _node_of_reduce_slot(cfg: SimConfig, slot: int) -> int:
    return (slot - 1) // cfg.reduce_slots_per_node + 1


def simulate(cfg: SimConfig) -> SimTrace:
    """Run one job through the event model and return its trace.

    In Hadoop mode later Map waves slow down because each reducer re-merges
    everything it has fetched once per ``merge_factor`` segments. Growth
    across waves therefore needs a reducer to pass ``merge_factor`` segments
    before the last wave ends; with fewer segments, or with merges running
    back to back through both later waves, waves 2 and 3 can tie.
    """
    from .sched import schedule_os4m  # keeps sim importable without the solver in the hot path

    dist = cfg.dist or _default_dist(cfg)
    sched = cfg.schedule or schedule_os4m(dist, cfg.reduce_slots).schedule
    bw = {}
    for node in range(1, cfg.nodes + 1):
        bw[f"net{node}"] = cfg.net_bw * MB
        bw[f"dr{node}"] = cfg.disk_read_bw * MB
        bw[f"dw{node}"] = cfg.disk_write_bw * MB
    sim = Sim(bw)
    trace = SimTrace(cfg.overlap_mode.value)
    M = cfg.total_map_tasks
    R = cfg.reduce_slots
    total_pairs = dist.total
    total_bytes = cfg.map_output_bytes * M
    cluster_bytes = [total_bytes * k / total_pairs if total_pairs else 0.0 for k in dist.loads]
    slot_bytes = [0.0] * (R + 1)
    for j, s in enumerate(sched.assignment):
        slot_bytes[s] += cluster_bytes[j]

    map_done = [sim.event() for _ in range(M)]
    map_node = [0] * M
    map_start = [0.0] * M
    map_finish = [0.0] * M
    state = {"maps_done": 0, "reduce_progress": [0.0] * (R + 1)}

    def sample(event: str) -> None:
        mf = state["maps_done"] / M
        rp = state["reduce_progress"]
        rf = sum(rp[1:]) / R if R else 1.0
        rf = min(1.0, rf)
        if trace.samples:
            _, pm, pr, _ = trace.samples[-1]
            mf, rf = max(mf, pm), max(rf, pr)
        trace.samples.append((sim.now, mf, rf, event))

    def progress(slot: int, nbytes: float) -> None:
        total = slot_bytes[slot]
        if total > 0:
            state["reduce_progress"][slot] += nbytes / total / 3.0

    sample("start")

    # Map phase: slots pull task ids in order
    queue = list(range(M))

    def map_worker(slot: int):
        node = _node_of_map_slot(cfg, slot)
        while queue:
            i = queue.pop(0)
            map_node[i] = node
            map_start[i] = sim.now
            yield sim.transfer([f"dr{node}"], cfg.map_input_bytes)
            yield sim.timeout(cfg.map_task_work)
            yield sim.transfer([f"dw{node}"], cfg.map_output_bytes)
            map_finish[i] = sim.now
            state["maps_done"] += 1
            sample(f"map_done:{i + 1}")
            map_done[i].succeed()

    map_procs = [sim.process(map_worker(s)) for s in range(1, cfg.map_slots + 1)]
    all_maps = sim.all_of(map_procs)

    def mark_map_end(_ev):
        trace.map_end = sim.now
        sample("map_phase_end")

    all_maps.on(mark_map_end)

    def fetch(src: int, dst: int, nbytes: float) -> Event:
        res = [f"dr{src}", f"dw{dst}"] if src == dst else [f"dr{src}", f"net{dst}", f"dw{dst}"]
        trace.first_copy_at = min(trace.first_copy_at, sim.now)
        return sim.transfer(res, nbytes)

    def sort_item(node: int, nbytes: float):
        started = sim.now
        if nbytes > cfg.sort_memory_bytes:
            # spill sorted runs, then read them back for the merge
            yield sim.transfer([f"dw{node}"], nbytes)
            yield sim.transfer([f"dr{node}"], nbytes)
            trace.overhead_time += sim.now - started
        yield sim.timeout(nbytes / MB * cfg.sort_cpu_per_mb)
        trace.item_sort_times.append(sim.now - started)

    def run_item(nbytes: float) -> Event:
        return sim.timeout(nbytes / MB * cfg.reduce_cpu_per_mb)

    reduce_procs = []
    timelines: dict[int, list] = {}
    first_enter: dict[tuple[int, str], float] = {}

    def note(slot: int):
        def cb(stage: str, item: int, phase: str) -> None:
            timelines.setdefault(slot, []).append((stage, item, phase, sim.now))
            if phase == "enter":
                first_enter.setdefault((slot, stage), sim.now)

        return cb

    if cfg.overlap_mode is OverlapMode.HADOOP:
        def hadoop_slot(slot: int):
            dst = _node_of_reduce_slot(cfg, slot)
            share = slot_bytes[slot] / M if M else 0.0
            cb = note(slot)

            fetched = {"segments": 0, "bytes": 0.0}
            merges: list[Event] = []

            def merge(nbytes: float, previous: Event | None):
                if previous is not None:
                    yield previous
                yield sim.transfer([f"dr{dst}", f"dw{dst}"], nbytes)

            def one_fetch(i: int):
                yield map_done[i]
                yield sim.timeout(cfg.fetch_latency)
                yield fetch(map_node[i], dst, share)
                progress(slot, share)
                fetched["segments"] += 1
                fetched["bytes"] += share
                if fetched["segments"] % cfg.merge_factor == 0:
                    # background on-disk merge of everything fetched so far
                    prev = merges[-1] if merges else None
                    merges.append(sim.process(merge(fetched["bytes"], prev)))

            cb("copy", 0, "enter")
            yield sim.all_of([sim.process(one_fetch(i)) for i in range(M)])
            yield sim.all_of(merges)
            cb("copy", 0, "exit")
            sample(f"copy_done:{slot}")
            yield all_maps
            cb("sort", 0, "enter")
            yield sim.process(sort_item(dst, slot_bytes[slot]))
            progress(slot, slot_bytes[slot])
            cb("sort", 0, "exit")
            cb("run", 0, "enter")
            yield run_item(slot_bytes[slot])
            progress(slot, slot_bytes[slot])
            cb("run", 0, "exit")
            sample(f"reduce_done:{slot}")

        reduce_procs = [sim.process(hadoop_slot(s)) for s in range(1, R + 1)]
    else:
        def os4m_slot(slot: int):
            yield all_maps
            dst = _node_of_reduce_slot(cfg, slot)
            owned = [c for c in sched.owned(slot) if dist.loads[c - 1] > 0]
            owned.sort(key=lambda c: (dist.loads[c - 1], c))
            cb = note(slot)
            per_node = [0] * (cfg.nodes + 1)
            for n in map_node:
                per_node[n] += 1

            def copy(c: int):
                b = cluster_bytes[c - 1]
                flows = []

                def go():
                    t0 = sim.now
                    yield sim.timeout(cfg.fetch_latency * M)
                    trace.overhead_time += sim.now - t0
                    for node in range(1, cfg.nodes + 1):
                        if per_node[node]:
                            flows.append(fetch(node, dst, b * per_node[node] / M))
                    yield sim.all_of(flows)
                    progress(slot, b)

                return sim.process(go())

            def sort(c: int):
                def go():
                    yield sim.process(sort_item(dst, cluster_bytes[c - 1]))
                    progress(slot, cluster_bytes[c - 1])

                return sim.process(go())

            def run(c: int):
                def go():
                    yield run_item(cluster_bytes[c - 1])
                    progress(slot, cluster_bytes[c - 1])

                return sim.process(go())

            if cfg.pipeline_mode is PipelineMode.PIPELINED:
                yield _pipeline_processes(sim, owned, copy, sort, run, cb)
            else:
                for stage, fn in (("copy", copy), ("sort", sort), ("run", run)):
                    for c in owned:
                        cb(stage, c, "enter")
                        yield fn(c)
                        cb(stage, c, "exit")
            sample(f"reduce_done:{slot}")

        reduce_procs = [sim.process(os4m_slot(s)) for s in range(1, R + 1)]

    sim.all_of(reduce_procs).on(lambda _ev: sample("job_end"))
    sim.run()

    trace.reduce_end = sim.now
    trace.slot_timelines = timelines
    if cfg.overlap_mode is OverlapMode.HADOOP and math.isfinite(trace.first_copy_at):
        trace.reduce_start = trace.first_copy_at
    else:
        starts = [t for (slot, stage), t in first_enter.items() if stage == "copy"]
        trace.reduce_start = min(starts) if starts else trace.map_end
    for slot in range(1, R + 1):
        if (slot, "sort") in first_enter:
            trace.sort_delays.append(first_enter[(slot, "sort")] - trace.map_end)
            trace.run_delays.append(first_enter[(slot, "run")] - trace.map_end)
    S = cfg.map_slots
    for w0 in range(0, M, S):
        idx = range(w0, min(M, w0 + S))
        lo = min(map_start[i] for i in idx)
        hi = max(map_finish[i] for i in idx)
        trace.wave_bounds.append((lo, hi))
        trace.wave_durations.append(hi - lo)
    trace.served = dict(sim.served)
    trace.requested = dict(sim.requested)
    return trace


@dataclass(frozen=True)
class ModeReport:
    mode: str
    wave_durations: tuple[float, ...]
    map_phase_time: float
    reduce_start: float
    reduce_end: float
    job_time: float


@dataclass(frozen=True)
class ModeComparison:
    hadoop: ModeReport
    os4m: ModeReport
    traces: dict[str, SimTrace]

    def rows(self) -> list[tuple]:
        out = []
        for rep in (self.hadoop, self.os4m):
            for i, d in enumerate(rep.wave_durations, 1):
                out.append((rep.mode, i, d))
        return out


def _report(trace: SimTrace) -> ModeReport:
    return ModeReport(
        trace.mode,
        tuple(trace.wave_durations),
        trace.map_phase_time,
        trace.reduce_start,
        trace.reduce_end,
        trace.job_time,
    )


def compare_modes(cfg: SimConfig) -> ModeComparison:
    """Hadoop-style overlap against deferred Reduce on one workload.

    The Hadoop run uses a single sequential item per slot, which is what a
    whole-partition Reduce task does; the deferred run keeps ``cfg``'s pipeline mode.
    """
    hadoop = simulate(replace(cfg, overlap_mode=OverlapMode.HADOOP, pipeline_mode=PipelineMode.SEQUENTIAL))
    os4m = simulate(replace(cfg, overlap_mode=OverlapMode.OS4M))
    return ModeComparison(_report(hadoop), _report(os4m), {"hadoop": hadoop, "os4m": os4m})


def wave_summary_csv(reports: Sequence[ModeReport]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("mode", "wave", "duration", "map_phase_time", "reduce_start", "reduce_end", "job_time"))
    for rep in reports:
        for i, d in enumerate(rep.wave_durations, 1):
            w.writerow((rep.mode, i, _num(d), _num(rep.map_phase_time), _num(rep.reduce_start),
                        _num(rep.reduce_end), _num(rep.job_time)))
    return buf.getvalue()


@dataclass(frozen=True)
class SweepPoint:
    n_target: int
    reduce_phase_time: float
    mean_item_sort_time: float
    overhead_time: float
    max_ratio: float


def sweep_n_target(
    cfg: SimConfig,
    dist_for: Callable[[int], KeyDist],
    values: Sequence[int],
    eta: float = 0.002,
) -> list[SweepPoint]:
    """Deferred, pipelined runs of one workload clustered at each ``n_target``."""
    from .sched import schedule_os4m

    out = []
    for n in values:
        dist = dist_for(n)
        res = schedule_os4m(dist, cfg.reduce_slots, eta)
        trace = simulate(replace(cfg, dist=dist, schedule=res.schedule, overlap_mode=OverlapMode.OS4M))
        sorts = trace.item_sort_times
        out.append(
            SweepPoint(
                n,
                trace.reduce_phase_time,
                sum(sorts) / len(sorts) if sorts else 0.0,
                trace.overhead_time,
                res.ratio,
            )
        )
    return out


def sweep_csv(points: Sequence[SweepPoint]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("n_target", "reduce_phase_time", "mean_item_sort_time", "overhead_time", "ratio"))
    for p in points:
        w.writerow((p.n_target, _num(p.reduce_phase_time), _num(p.mean_item_sort_time), _num(p.overhead_time), _num(p.max_ratio)))
    return buf.getvalue()


def write_text(path: str | Path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path
