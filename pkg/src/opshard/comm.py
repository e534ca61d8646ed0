"""Statistics collection from Map workers to the master, and the schedule broadcast back.

Map attempts send a per-cluster count vector to their node's tracker. The
tracker drops failed attempts and forwards the rest in batches to the
master, which keeps one entry per Map task id. Once every task has reported,
the master sums the vectors into a ``KeyDist`` and schedules. The
assignment vector then travels back through the trackers to every Reduce slot.

Wire formats (big-endian):

* stats message: ``>I`` task id, ``>I`` attempt, ``B`` success, ``>I`` n, then n ``>Q`` counts
* tracker batch: ``>I`` node id, ``>I`` entries, ``>I`` n, then per entry ``>I`` task id,
  ``>I`` attempt, n ``>Q`` counts
* schedule: ``>I`` n, then n ``>i`` slot ids
"""

from __future__ import annotations

import struct
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .cluster import Clusterer
from .core import KeyDist, Schedule, U64_MAX, checked_add
from .errors import ConsistencyError, JobFailure, NotReadyError, ProtocolError

_STATS_HEAD = struct.Struct(">IIBI")
_BATCH_HEAD = struct.Struct(">III")
_ENTRY_HEAD = struct.Struct(">II")
_SCHED_HEAD = struct.Struct(">I")

COUNT_WIDTH = 8
SLOT_WIDTH = 4

COLLECT_MAP = "collect.map_to_tracker"
COLLECT_TRACKER = "collect.tracker_to_master"
BROADCAST_MASTER = "broadcast.master_to_tracker"
BROADCAST_TRACKER = "broadcast.tracker_to_reduce"


@dataclass(frozen=True)
class StatsMessage:
    map_task_id: int
    attempt_id: int
    counts: tuple[int, ...]
    success: bool = True

    @property
    def n(self) -> int:
        return len(self.counts)

    def encode(self) -> bytes:
        head = _STATS_HEAD.pack(self.map_task_id, self.attempt_id, 1 if self.success else 0, self.n)
        return head + struct.pack(f">{self.n}Q", *self.counts)

    @classmethod
    def decode(cls, data: bytes) -> "StatsMessage":
        if len(data) < _STATS_HEAD.size:
            raise ProtocolError("truncated stats message")
        task, attempt, ok, n = _STATS_HEAD.unpack_from(data)
        if len(data) != _STATS_HEAD.size + COUNT_WIDTH * n:
            raise ProtocolError(f"stats message declares n={n} but carries {len(data) - _STATS_HEAD.size} count bytes")
        counts = struct.unpack_from(f">{n}Q", data, _STATS_HEAD.size)
        return cls(task, attempt, counts, bool(ok))


@dataclass(frozen=True)
class ScheduleBroadcast:
    schedule: Schedule

    def encode(self) -> bytes:
        n = self.schedule.n
        return _SCHED_HEAD.pack(n) + struct.pack(f">{n}i", *self.schedule.assignment)

    @staticmethod
    def decode(data: bytes, m: int) -> Schedule:
        if len(data) < _SCHED_HEAD.size:
            raise ProtocolError("truncated schedule")
        (n,) = _SCHED_HEAD.unpack_from(data)
        if len(data) != _SCHED_HEAD.size + SLOT_WIDTH * n:
            raise ProtocolError(f"schedule declares n={n} but has {len(data) - _SCHED_HEAD.size} slot bytes")
        return Schedule(struct.unpack_from(f">{n}i", data, _SCHED_HEAD.size), m)


def encode_batch(node_id: int, messages: Sequence[StatsMessage]) -> bytes:
    n = messages[0].n if messages else 0
    parts = [_BATCH_HEAD.pack(node_id, len(messages), n)]
    for msg in messages:
        if msg.n != n:
            raise ProtocolError("batched messages disagree on n")
        parts.append(_ENTRY_HEAD.pack(msg.map_task_id, msg.attempt_id))
        parts.append(struct.pack(f">{n}Q", *msg.counts))
    return b"".join(parts)


def decode_batch(data: bytes) -> tuple[int, list[StatsMessage]]:
    node_id, count, n = _BATCH_HEAD.unpack_from(data)
    offset = _BATCH_HEAD.size
    out = []
    for _ in range(count):
        task, attempt = _ENTRY_HEAD.unpack_from(data, offset)
        offset += _ENTRY_HEAD.size
        counts = struct.unpack_from(f">{n}Q", data, offset)
        offset += COUNT_WIDTH * n
        out.append(StatsMessage(task, attempt, counts, True))
    if offset != len(data):
        raise ProtocolError("trailing bytes in tracker batch")
    return node_id, out


@dataclass
class Transport:
    """In-process byte counter for every hop of the protocol.

    ``payload`` counts only count-vector and schedule-vector bytes, the
    quantity the analytic bound describes. ``wire`` adds framing.
    """

    payload: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    wire: dict[str, int] = field(default_factory=lambda: defaultdict(int))
    messages: dict[str, int] = field(default_factory=lambda: defaultdict(int))

    def send(self, channel: str, data: bytes, payload_bytes: int) -> bytes:
        self.payload[channel] += payload_bytes
        self.wire[channel] += len(data)
        self.messages[channel] += 1
        return data

    def total(self, prefix: str = "", wire: bool = False) -> int:
        table = self.wire if wire else self.payload
        return sum(v for k, v in table.items() if k.startswith(prefix))


@dataclass(frozen=True)
class NetworkEstimate:
    collect_bytes: int
    broadcast_bytes: int
    total_upper_bound: int


def network_cost_estimate(M: int, n: int, t: int, r: int) -> NetworkEstimate:
    """Upper bounds on statistics and schedule traffic.

    Each Map task ships ``8n`` bytes to its tracker and at most that much again
    reaches the master; the ``4n``-byte schedule goes to each of ``t`` trackers
    and each of ``r`` Reduce tasks.
    """
    for name, value in (("M", M), ("n", n), ("t", t), ("r", r)):
        if value < 1:
            raise ValueError(f"{name} must be >= 1")
    collect = 16 * M * n
    broadcast = 4 * n * (t + r)
    return NetworkEstimate(collect, broadcast, 4 * n * (4 * M + t + r))


def emit_stats(
    local_counts: Mapping[bytes, int] | Iterable[tuple[bytes, int]],
    clusterer: Clusterer,
    map_task_id: int,
    attempt_id: int = 0,
    success: bool = True,
) -> StatsMessage:
    """Fold one Map operation's per-key tallies into its cluster count vector."""
    items = local_counts.items() if isinstance(local_counts, Mapping) else local_counts
    keys, tallies = [], []
    for key, count in items:
        keys.append(key)
        tallies.append(count)
    counts = [0] * clusterer.n_target
    for cid, count in zip(clusterer.many(keys), tallies):
        counts[cid - 1] = checked_add(counts[cid - 1], count)
    return StatsMessage(map_task_id, attempt_id, tuple(counts), success)


def tracker_forward(msg: StatsMessage) -> StatsMessage | None:
    """Successful attempts go on to the master; failed ones are dropped."""
    return msg if msg.success else None


@dataclass
class StatsRegistry:
    """Master-side table: one count vector per Map task id."""

    n: int
    expected: int
    by_task: dict[int, tuple[int, ...]] = field(default_factory=dict)
    attempts: dict[int, int] = field(default_factory=dict)

    @property
    def complete(self) -> bool:
        return len(self.by_task) == self.expected

    def missing(self) -> list[int]:
        return [i for i in range(1, self.expected + 1) if i not in self.by_task]


def master_ingest(registry: StatsRegistry, msg: StatsMessage) -> StatsRegistry:
    """Record a successful attempt; a repeat of the same task replaces its entry.

    Two successful attempts of one task must agree (Map functions are
    deterministic); disagreement raises ``ConsistencyError``.
    """
    if not msg.success:
        raise ProtocolError(f"task {msg.map_task_id}: failed attempts never reach the master")
    if msg.n != registry.n:
        raise ProtocolError(f"task {msg.map_task_id}: vector length {msg.n}, expected {registry.n}")
    if not 1 <= msg.map_task_id <= registry.expected:
        raise ProtocolError(f"task id {msg.map_task_id} outside 1..{registry.expected}")
    if any(c < 0 or c > U64_MAX for c in msg.counts):
        raise ProtocolError(f"task {msg.map_task_id}: count outside 64-bit unsigned range")
    previous = registry.by_task.get(msg.map_task_id)
    if previous is not None and previous != msg.counts:
        raise ConsistencyError(
            f"task {msg.map_task_id}: attempt {msg.attempt_id} disagrees with attempt {registry.attempts[msg.map_task_id]}"
        )
    registry.by_task[msg.map_task_id] = msg.counts
    registry.attempts[msg.map_task_id] = msg.attempt_id
    return registry


def aggregate(registry: StatsRegistry) -> KeyDist:
    if not registry.complete:
        raise NotReadyError(f"waiting on Map tasks {registry.missing()[:10]}")
    totals = [0] * registry.n
    for counts in registry.by_task.values():
        for j, c in enumerate(counts):
            totals[j] = checked_add(totals[j], c)
    return KeyDist(totals)


class Tracker:
    """Per-node coordinator: buffers stats from local Map attempts, relays the schedule."""

    def __init__(self, node_id: int, transport: Transport, reduce_slots: Sequence[int] = ()):
        self.node_id = node_id
        self.transport = transport
        self.reduce_slots = list(reduce_slots)
        self.buffer: list[StatsMessage] = []
        self.discarded: list[StatsMessage] = []
        self.reachable = True
        self.schedule_bytes: bytes | None = None

    def receive(self, data: bytes) -> None:
        msg = StatsMessage.decode(data)
        if tracker_forward(msg) is None:
            self.discarded.append(msg)
        else:
            self.buffer.append(msg)

    def flush(self) -> bytes | None:
        if not self.buffer:
            return None
        batch = encode_batch(self.node_id, self.buffer)
        payload = COUNT_WIDTH * sum(m.n for m in self.buffer)
        self.buffer = []
        return self.transport.send(COLLECT_TRACKER, batch, payload)

    def accept_schedule(self, data: bytes) -> None:
        if not self.reachable:
            raise ConnectionError(f"tracker {self.node_id} unreachable")
        self.schedule_bytes = data

    def deliver(self, m: int) -> dict[int, Schedule]:
        """Hand the schedule to each local Reduce slot, counting each copy."""
        n = (len(self.schedule_bytes) - _SCHED_HEAD.size) // SLOT_WIDTH
        out = {}
        for slot in self.reduce_slots:
            data = self.transport.send(BROADCAST_TRACKER, self.schedule_bytes, SLOT_WIDTH * n)
            out[slot] = ScheduleBroadcast.decode(data, m)
        return out


def send_stats(msg: StatsMessage, tracker: Tracker) -> None:
    """Map attempt to tracker hop."""
    data = tracker.transport.send(COLLECT_MAP, msg.encode(), COUNT_WIDTH * msg.n)
    tracker.receive(data)


class Master:
    def __init__(self, n: int, expected: int, transport: Transport):
        self.registry = StatsRegistry(n, expected)
        self.transport = transport

    def receive_batch(self, data: bytes) -> None:
        _, messages = decode_batch(data)
        for msg in messages:
            master_ingest(self.registry, msg)

    def collect(self, trackers: Iterable[Tracker]) -> None:
        for tracker in trackers:
            batch = tracker.flush()
            if batch is not None:
                self.receive_batch(batch)

    def aggregate(self) -> KeyDist:
        return aggregate(self.registry)


def broadcast_schedule(sched: Schedule, trackers: Sequence[Tracker], transport: Transport | None = None) -> dict[int, Schedule]:
    """Deliver ``sched`` to every Reduce slot through its tracker.

    All trackers must accept the schedule before any slot receives it, so an
    unreachable tracker aborts the job with no Reduce slot started.
    """
    data = ScheduleBroadcast(sched).encode()
    for tracker in trackers:
        sent = (transport or tracker.transport).send(BROADCAST_MASTER, data, SLOT_WIDTH * sched.n)
        try:
            tracker.accept_schedule(sent)
        except ConnectionError as exc:
            raise JobFailure(f"schedule broadcast failed: {exc}") from exc
    delivered: dict[int, Schedule] = {}
    for tracker in trackers:
        delivered.update(tracker.deliver(sched.m))
    return delivered


def owned_clusters(sched: Schedule, slot: int) -> list[int]:
    return sched.owned(slot)
