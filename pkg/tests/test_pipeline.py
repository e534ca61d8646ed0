import random
import time

import pytest
from hypothesis import given, settings, strategies as st

from opshard import pipeline
from opshard.core import KeyDist
from opshard.errors import IncompleteTraceError, SlotFailure
from opshard.pipeline import ItemState, PipelineItem, TraceEvent


def test_plan_examples():
    assert pipeline.plan({1, 2, 3}, KeyDist([9, 3, 5])).clusters == [2, 3, 1]
    assert pipeline.plan({3, 1, 2}, KeyDist([4, 4, 4])).clusters == [1, 2, 3]
    p = pipeline.plan(set(), KeyDist([1]))
    assert p.items == []
    assert pipeline.execute(p, lambda it: [], None, lambda c, r: None).delays is None


def test_item_states_only_move_forward():
    it = PipelineItem(1, 5)
    it.advance(ItemState.COPYING)
    it.advance(ItemState.COPIED)
    with pytest.raises(ValueError):
        it.advance(ItemState.COPYING)


def test_unit_time_makespans():
    three = [(1, 1, 1)] * 3
    assert pipeline.pipelined_makespan(three) == 5
    assert pipeline.sequential_makespan(three) == 9
    assert pipeline.pipelined_makespan([(2, 3, 4)]) == 9 == pipeline.sequential_makespan([(2, 3, 4)])


@settings(max_examples=200)
@given(st.lists(st.tuples(*(st.floats(0, 10, allow_nan=False),) * 3), max_size=12))
def test_pipelined_never_slower(times):
    assert pipeline.pipelined_makespan(times) <= pipeline.sequential_makespan(times) + 1e-9


def _records(cluster, count):
    return [(b"k%d-%d" % (cluster, i % 7), b"%d" % i) for i in range(count)]


def _run(plan, pipelined=True, delay=0.0, **kw):
    def fetch(item):
        time.sleep(delay * item.load)
        return _records(item.cluster, item.load)

    def reduce(cluster, recs):
        return [(k, b"%d" % len(v)) for k, v in pipeline.group_sorted(recs)]

    tracer = pipeline.Tracer()
    res = pipeline.execute(plan, fetch, None, reduce, tracer, pipelined=pipelined, **kw)
    return res, tracer


def test_outputs_equal_sequential_and_order_preserved():
    dist = KeyDist([30, 10, 20, 5, 40])
    plan = pipeline.plan(range(1, 6), dist)
    res, tracer = _run(plan)
    plan2 = pipeline.plan(range(1, 6), dist)
    seq, _ = _run(plan2, pipelined=False)
    assert res.outputs == seq.outputs
    events = tracer.events
    sort_order = [e.cluster for e in events if e.event == "phase_enter" and e.stage == "sort"]
    assert sort_order == plan.clusters
    for it in plan.items:
        assert it.state is ItemState.DONE


def test_stage_exclusivity_and_rendezvous():
    plan = pipeline.plan(range(1, 7), KeyDist([3, 1, 4, 1, 5, 2]))
    _, tracer = _run(plan, delay=0.001)
    busy = {s: 0 for s in pipeline.STAGES}
    in_flight = set()
    for e in sorted(tracer.events, key=lambda e: (e.t, e.event != "phase_exit")):
        if e.event == "phase_enter":
            busy[e.stage] += 1
            assert busy[e.stage] == 1
            if e.stage == "copy":
                in_flight.add(e.cluster)
            assert len(in_flight) <= 3
        elif e.event == "phase_exit":
            busy[e.stage] -= 1
            if e.stage == "run":
                in_flight.discard(e.cluster)


def test_trace_line_format_parses():
    plan = pipeline.plan([1, 2], KeyDist([2, 1]))
    _, tracer = _run(plan)
    lines = tracer.lines()
    assert lines[0].startswith("event=map_done t=")
    assert lines[1].startswith("event=phase_enter slot=1 cluster=2 stage=copy t=")
    assert pipeline.parse_trace(lines) == tracer.events


def test_measure_delays_examples():
    lines = [
        "event=map_done t=100",
        "event=phase_enter slot=1 cluster=4 stage=copy t=101",
        "event=phase_enter slot=1 cluster=4 stage=sort t=107",
        "event=phase_enter slot=1 cluster=4 stage=run t=112",
    ]
    d = pipeline.measure_delays(lines)
    assert d.sort_delay == 7 and d.run_delay == 12
    assert d.run_delay >= d.sort_delay
    with pytest.raises(IncompleteTraceError):
        pipeline.measure_delays(lines[1:])
    with pytest.raises(IncompleteTraceError):
        pipeline.measure_delays(lines[:2])
    with pytest.raises(ValueError):
        pipeline.parse_trace(["event=phase_enter slot=x"])


def test_average_delays():
    a = pipeline.DelayReport(0, 4, 10)
    b = pipeline.DelayReport(10, 16, 30)
    assert pipeline.average_delays([a, b]) == (5, 15)


def test_pipelined_sort_delay_not_worse_than_sequential():
    dist = KeyDist([5, 50, 60, 70])
    res_p, _ = _run(pipeline.plan(range(1, 5), dist), delay=0.0005)
    res_s, _ = _run(pipeline.plan(range(1, 5), dist), pipelined=False, delay=0.0005)
    assert res_p.delays.sort_delay <= res_s.delays.sort_delay


def test_fetch_retry_then_failure():
    calls = []

    def flaky(item):
        calls.append(item.cluster)
        if len(calls) == 1:
            raise OSError("transient")
        return _records(item.cluster, 3)

    plan = pipeline.plan([1], KeyDist([3]))
    res = pipeline.execute(plan, flaky, None, lambda c, r: len(r))
    assert res.outputs == {1: 3} and calls == [1, 1]

    def broken(item):
        raise OSError("gone")

    with pytest.raises(SlotFailure) as info:
        pipeline.execute(pipeline.plan([1, 2], KeyDist([3, 4]), slot=2), broken, None, lambda c, r: 0)
    assert info.value.slot == 2 and info.value.cluster == 1


def test_reducer_failure_carries_cluster():
    def reduce(cluster, recs):
        if cluster == 3:
            raise KeyError("boom")
        return len(recs)

    plan = pipeline.plan([1, 2, 3], KeyDist([1, 2, 3]))
    with pytest.raises(SlotFailure) as info:
        pipeline.execute(plan, lambda it: _records(it.cluster, it.load), None, reduce)
    assert info.value.cluster == 3


def test_spill_failure_is_slot_failure(tmp_path):
    missing = tmp_path / "nope"
    plan = pipeline.plan([1], KeyDist([50]), threshold=16)
    sorter = pipeline.default_sorter(16, str(missing))
    with pytest.raises(SlotFailure):
        pipeline.execute(plan, lambda it: _records(1, 50), sorter, lambda c, r: 0)


def test_sort_cluster_paths_agree(tmp_path):
    assert pipeline.sort_cluster([], 0) == []
    rng = random.Random(3)
    recs = [(bytes(rng.randrange(97, 123) for _ in range(rng.randint(1, 6))), b"%d" % rng.randrange(100)) for _ in range(10_000)]
    mem = pipeline.SortStats()
    ext = pipeline.SortStats()
    a = pipeline.sort_cluster(recs, 64 * 1024 * 1024, stats=mem)
    b = pipeline.sort_cluster(recs, 4096, str(tmp_path), stats=ext)
    assert not mem.external and ext.external and ext.runs > 1
    assert a == b == sorted(recs)
    assert list(tmp_path.iterdir()) == []


def test_group_sorted():
    recs = [(b"a", b"1"), (b"a", b"2"), (b"b", b"3")]
    assert list(pipeline.group_sorted(recs)) == [(b"a", [b"1", b"2"]), (b"b", [b"3"])]
    assert list(pipeline.group_sorted([])) == []


def test_trace_event_line_roundtrip():
    e = TraceEvent("phase_exit", 3, 9, "run", 42)
    assert pipeline.parse_trace([e.line()]) == [e]
