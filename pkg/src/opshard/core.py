"""Domain values shared by every module and the load-balance metrics.

Loads are counts of intermediate key-value pairs. Cluster ids and slot ids
are 1-based everywhere, matching the wire formats.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .errors import InvalidInputError

U64_MAX = 2**64 - 1


def _check_count(value: int, what: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvalidInputError(f"{what} must be an integer, got {value!r}")
    if value < 0:
        raise InvalidInputError(f"{what} must be non-negative, got {value}")
    if value > U64_MAX:
        raise InvalidInputError(f"{what} overflows 64-bit unsigned: {value}")
    return value


def checked_add(a: int, b: int) -> int:
    """Add two pair counts, refusing to exceed the 64-bit unsigned range."""
    total = a + b
    if total > U64_MAX:
        raise OverflowError(f"pair count overflow: {a} + {b}")
    return total


@dataclass(frozen=True)
class KeyDist:
    """Aggregated pair counts per operation cluster (``loads[j-1]`` is cluster j)."""

    loads: tuple[int, ...]

    def __init__(self, loads: Iterable[int]):
        loads = tuple(loads)
        for j, k in enumerate(loads, 1):
            _check_count(k, f"load of cluster {j}")
        if sum(loads) > U64_MAX:
            raise OverflowError("total pair count overflows 64-bit unsigned")
        object.__setattr__(self, "loads", loads)

    @property
    def n(self) -> int:
        return len(self.loads)

    @property
    def total(self) -> int:
        return sum(self.loads)

    def __len__(self) -> int:
        return len(self.loads)


@dataclass(frozen=True)
class Schedule:
    """Assignment vector: cluster j runs on slot ``assignment[j-1]`` in 1..m."""

    assignment: tuple[int, ...]
    m: int

    def __init__(self, assignment: Iterable[int], m: int):
        assignment = tuple(assignment)
        if isinstance(m, bool) or not isinstance(m, int) or m < 1:
            raise InvalidInputError(f"slot count must be >= 1, got {m!r}")
        for j, s in enumerate(assignment, 1):
            if isinstance(s, bool) or not isinstance(s, int) or not 1 <= s <= m:
                raise InvalidInputError(f"cluster {j} assigned to invalid slot {s!r} (m={m})")
        object.__setattr__(self, "assignment", assignment)
        object.__setattr__(self, "m", m)

    @property
    def n(self) -> int:
        return len(self.assignment)

    def owned(self, slot: int) -> list[int]:
        """Cluster ids assigned to ``slot``, ascending."""
        return [j for j, s in enumerate(self.assignment, 1) if s == slot]

    def as_matrix(self) -> list[list[int]]:
        """Binary form: ``x[i-1][j-1] == 1`` iff cluster j runs on slot i."""
        return [[1 if s == i else 0 for s in self.assignment] for i in range(1, self.m + 1)]

    @classmethod
    def from_matrix(cls, x: Sequence[Sequence[int]]) -> "Schedule":
        m = len(x)
        if m == 0:
            raise InvalidInputError("empty assignment matrix")
        n = len(x[0])
        assignment = []
        for j in range(n):
            column = [x[i][j] for i in range(m)]
            if sorted(column) != [0] * (m - 1) + [1]:
                raise InvalidInputError(f"cluster {j + 1} is not assigned to exactly one slot")
            assignment.append(column.index(1) + 1)
        return cls(assignment, m)


@dataclass(frozen=True)
class SlotLoads:
    loads: tuple[int, ...]

    @property
    def m(self) -> int:
        return len(self.loads)

    @property
    def total(self) -> int:
        return sum(self.loads)


class SchedulerKind(str, enum.Enum):
    HASH = "hash"
    LPT = "lpt"
    OS4M = "os4m"


@dataclass(frozen=True)
class JobConfig:
    """Job-level knobs. ``n_target`` defaults to eight clusters per Reduce slot."""

    m: int = 2
    map_slots: int = 2
    w: int = 1
    n_target: int | None = None
    eta: float = 0.002
    scheduler_kind: SchedulerKind = SchedulerKind.OS4M
    memory_sort_threshold: int = 64 * 1024 * 1024
    trackers: int = 1
    extra: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.n_target is None:
            object.__setattr__(self, "n_target", 8 * self.m)
        object.__setattr__(self, "scheduler_kind", SchedulerKind(self.scheduler_kind))
        for name in ("m", "map_slots", "w", "n_target", "trackers"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise InvalidInputError(f"{name} must be an integer >= 1, got {value!r}")
        if not 0 < self.eta < 1:
            raise InvalidInputError(f"eta must lie in (0, 1), got {self.eta}")
        if self.memory_sort_threshold < 0:
            raise InvalidInputError("memory_sort_threshold must be non-negative")


def default_reduce_slots(cores: int | None = None) -> int:
    """95% of the logical cores, never fewer than two slots."""
    if cores is None:
        cores = os.cpu_count() or 1
    return max(2, int(0.95 * cores))


def slot_loads(dist: KeyDist, sched: Schedule) -> SlotLoads:
    if dist.n != sched.n:
        raise InvalidInputError(f"distribution has {dist.n} clusters, schedule has {sched.n}")
    loads = [0] * sched.m
    for k, s in zip(dist.loads, sched.assignment):
        loads[s - 1] += k
    return SlotLoads(tuple(loads))


def max_load(loads: SlotLoads | Sequence[int]) -> int:
    values = loads.loads if isinstance(loads, SlotLoads) else tuple(loads)
    if not values:
        raise InvalidInputError("max_load of an empty slot vector")
    return max(values)


def ideal_load(dist: KeyDist | Sequence[int], r: int) -> Fraction:
    """Total pairs divided evenly over ``r`` slots, as an exact rational.

    Never exceeds the optimal max-load of any schedule. Call ``float()`` on the
    result for reporting; compare against integer max-loads with the Fraction.
    """
    if isinstance(r, bool) or not isinstance(r, int) or r < 1:
        raise InvalidInputError(f"slot count must be >= 1, got {r!r}")
    loads = dist.loads if isinstance(dist, KeyDist) else tuple(dist)
    return Fraction(sum(loads), r)


def load_ratio(max_value: int, ideal: Fraction) -> float:
    """max-load over ideal load; 1.0 when there is no load at all."""
    if ideal == 0:
        return 1.0
    return float(Fraction(max_value) / ideal)


def relative_stddev(values: Sequence[float]) -> float:
    """Population standard deviation divided by the mean (0 for a zero mean)."""
    if not values:
        return 0.0
    mean = sum(values) / len(values)
    if mean == 0:
        return 0.0
    var = sum((v - mean) ** 2 for v in values) / len(values)
    return var**0.5 / mean
