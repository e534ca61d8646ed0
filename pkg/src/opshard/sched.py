"""P||C_max solvers for placing operation clusters on Reduce slots.

``schedule_hash`` is the stock MapReduce partitioner, ``schedule_lpt`` is
Graham's longest-processing-time rule, ``schedule_os4m`` is the key-distribution
scheduler built from per-slot balanced subset sums, and ``brute_force_optimal``
is an exhaustive branch-and-bound used only for verification.
"""

from __future__ import annotations

import heapq
import time
from dataclasses import dataclass
from fractions import Fraction
from math import floor
from typing import Callable, Iterable, Sequence

from .core import KeyDist, Schedule, SchedulerKind, ideal_load, load_ratio, max_load, slot_loads
from .errors import InvalidInputError, SizeError
from .kernels import SubsetSumTable, abs_hash, fnv1a64

ORACLE_MAX_N = 20
ORACLE_MAX_M = 5


@dataclass(frozen=True)
class ScheduleResult:
    schedule: Schedule
    max_load: int
    ideal: Fraction
    ratio: float
    solver_time: float
    solver: str = ""
    loads: tuple[int, ...] = ()

    @classmethod
    def build(cls, dist: KeyDist, sched: Schedule, started: float, solver: str) -> "ScheduleResult":
        elapsed = time.perf_counter() - started
        loads = slot_loads(dist, sched)
        top = max_load(loads)
        ideal = ideal_load(dist, sched.m)
        return cls(sched, top, ideal, load_ratio(top, ideal), elapsed, solver, loads.loads)


@dataclass(frozen=True)
class BssInstance:
    """Balanced subset sum: pick clusters whose total load approaches ``target``."""

    candidate_loads: tuple[tuple[int, int], ...]
    target: Fraction
    eta: float = 0.002

    def __init__(self, candidate_loads, target, eta: float = 0.002):
        candidates = tuple((int(c), int(k)) for c, k in candidate_loads)
        if any(k < 0 for _, k in candidates):
            raise InvalidInputError("candidate loads must be non-negative")
        target = Fraction(target)
        if target < 0:
            raise InvalidInputError("BSS target must be non-negative")
        _check_eta(eta)
        object.__setattr__(self, "candidate_loads", candidates)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "eta", eta)


def _check_eta(eta: float) -> None:
    if not 0 < eta < 1:
        raise InvalidInputError(f"eta must lie in (0, 1), got {eta}")


def _check_m(m: int) -> None:
    if isinstance(m, bool) or not isinstance(m, int) or m < 1:
        raise InvalidInputError(f"slot count must be an integer >= 1, got {m!r}")


def cluster_hash(cluster_id: int) -> int:
    """Default cluster-id hash for the hash baseline: FNV-1a of the 4-byte big-endian id."""
    return fnv1a64(cluster_id.to_bytes(4, "big"))


def schedule_hash(
    dist: KeyDist,
    m: int,
    hash_fn: Callable[[int], int] | None = None,
) -> ScheduleResult:
    """Slot = ``|hash(cluster_id)| mod m + 1``, ignoring the loads entirely.

    ``hash_fn`` receives the 1-based cluster id and may return any integer; a
    negative value is treated by magnitude, as is a value read as signed 64-bit.
    """
    _check_m(m)
    started = time.perf_counter()
    hash_fn = hash_fn or cluster_hash
    assignment = []
    for j in range(1, dist.n + 1):
        h = hash_fn(j)
        if h < 0:
            h = -h
        elif h >= 2**63:
            h = abs_hash(h & 0xFFFFFFFFFFFFFFFF)
        assignment.append(h % m + 1)
    return ScheduleResult.build(dist, Schedule(assignment, m), started, SchedulerKind.HASH.value)


def _lpt_assign(loads: Sequence[int], m: int) -> list[int]:
    order = sorted(range(len(loads)), key=lambda j: (-loads[j], j))
    heap = [(0, i) for i in range(1, m + 1)]
    assignment = [0] * len(loads)
    for j in order:
        load, slot = heapq.heappop(heap)
        assignment[j] = slot
        heapq.heappush(heap, (load + loads[j], slot))
    return assignment


def schedule_lpt(dist: KeyDist, m: int) -> ScheduleResult:
    """Largest cluster first onto the least-loaded slot (lowest slot id on ties)."""
    _check_m(m)
    started = time.perf_counter()
    sched = Schedule(_lpt_assign(dist.loads, m), m)
    return ScheduleResult.build(dist, sched, started, SchedulerKind.LPT.value)


def _scale_factor(eta: float, target: Fraction, count: int) -> int:
    if count == 0:
        return 1
    return max(1, floor(Fraction(eta) * target / count))


def bss_select(inst: BssInstance) -> list[int]:
    """Cluster ids whose load sum is closest to the target, preferring to stay at or below it.

    Loads are divided by ``delta = max(1, floor(eta * target / count))`` and an
    exact subset-sum table is built over the scaled values. The largest scaled
    sum not above the scaled target wins. Only if nothing but the empty set fits
    is the target overshot, by the single smallest cluster (lowest id on ties).
    Candidates are visited by decreasing load then increasing id, so ties among
    equal sums resolve the same way whatever order the caller passes them in.
    """
    ordered = sorted(inst.candidate_loads, key=lambda ck: (-ck[1], ck[0]))
    return sorted(_bss_pick(ordered, inst.target, inst.eta))


def _bss_pick(ordered: Sequence[tuple[int, int]], target: Fraction, eta: float) -> list[int]:
    # ``ordered`` is already sorted by (-load, id)
    if not ordered or target == 0:
        return []
    delta = _scale_factor(eta, target, len(ordered))
    cap = floor(target / delta)
    table = SubsetSumTable([k // delta for _, k in ordered], cap, stop_at=cap)
    best = table.best_at_most(cap)
    if best > 0:
        return [ordered[i][0] for i in table.items_for(best)]
    # nothing with positive scaled load fits: zero-load clusters or a forced overshoot
    fitting = [c for c, k in ordered if k <= target]
    if fitting:
        return fitting
    return [min(ordered, key=lambda ck: (ck[1], ck[0]))[0]]


def _decompose(loads: Sequence[int], ids: Iterable[int], slots: Sequence[int], eta: float) -> dict[int, int]:
    """Fill ``slots`` one at a time; each takes a BSS pick toward the remaining average."""
    remaining = sorted(((c, loads[c - 1]) for c in ids), key=lambda ck: (-ck[1], ck[0]))
    left = sum(k for _, k in remaining)
    placed: dict[int, int] = {}
    for pos, slot in enumerate(slots):
        if pos == len(slots) - 1:
            chosen = [c for c, _ in remaining]
        else:
            chosen = _bss_pick(remaining, Fraction(left, len(slots) - pos), eta)
        if not chosen:
            continue
        taken = set(chosen)
        for c in chosen:
            placed[c] = slot
        left -= sum(k for c, k in remaining if c in taken)
        remaining = [ck for ck in remaining if ck[0] not in taken]
    return placed


def _slot_totals(loads: Sequence[int], placed: dict[int, int], slots: Iterable[int]) -> dict[int, int]:
    totals = {i: 0 for i in slots}
    for c, s in placed.items():
        totals[s] += loads[c - 1]
    return totals


def _rebalance(loads: Sequence[int], placed: dict[int, int], slots: Sequence[int], eta: float) -> None:
    """Pairwise refinement: pool two slots and re-split them with the same BSS step.

    A pair is re-split only when that strictly lowers the larger of the two
    loads, so the sorted load vector decreases and the loop terminates.
    """
    members = {i: sorted(c for c, s in placed.items() if s == i) for i in slots}
    totals = _slot_totals(loads, placed, slots)
    while True:
        improved = False
        for a in sorted(slots, key=lambda i: (-totals[i], i)):
            for b in sorted(slots, key=lambda i: (totals[i], i)):
                if totals[b] >= totals[a]:
                    break
                split = _decompose(loads, members[a] + members[b], (a, b), eta)
                new = _slot_totals(loads, split, (a, b))
                if max(new.values()) < totals[a]:
                    placed.update(split)
                    for i in (a, b):
                        members[i] = sorted(c for c, s in split.items() if s == i)
                    totals.update(new)
                    improved = True
                    break
            if improved:
                break
        if not improved:
            return


def _near_sums(table, cap: int, target: int, k: int) -> list[int]:
    sums = []
    s = target
    while s >= 0 and len(sums) < k:
        if table.reachable(s):
            sums.append(s)
        s -= 1
    above = 0
    s = target + 1
    while s <= cap and above < k:
        if table.reachable(s):
            sums.append(s)
            above += 1
        s += 1
    sums.sort(key=lambda v: (abs(v - target), v > target))
    return sums[:k]


def _candidate_subsets(items: list[tuple[int, int]], target: Fraction, eta: float, k: int) -> list[tuple[int, ...]]:
    """Up to ``2k`` subsets whose sums sit nearest ``target``.

    Half contain the largest item. Slots are interchangeable, so some optimal
    schedule puts the largest remaining cluster on the slot being filled.
    """
    out: list[tuple[int, ...]] = []
    seen: set[tuple[int, ...]] = set()

    def near(pool: list[tuple[int, int]], goal: Fraction, forced: tuple[int, ...]) -> None:
        cands = sorted(pool, key=lambda ck: (-ck[1], ck[0]))
        if not cands:
            subsets = [()]
        else:
            delta = _scale_factor(eta, goal, len(cands))
            scaled = [w // delta for _, w in cands]
            aim = floor(goal / delta)
            cap = 2 * aim + max(scaled)
            table = SubsetSumTable(scaled, cap)
            subsets = [tuple(cands[i][0] for i in table.items_for(v)) for v in _near_sums(table, cap, aim, k)]
        for sub in subsets:
            key = tuple(sorted(forced + sub))
            if key not in seen:
                seen.add(key)
                out.append(key)

    if items:
        big = min(items, key=lambda ck: (-ck[1], ck[0]))
        near([ck for ck in items if ck != big], max(Fraction(0), target - big[1]), (big[0],))
    near(items, target, ())
    return out


def _rollout(loads: Sequence[int], ids: Sequence[int], m: int, eta: float, k: int, good_enough: Fraction) -> dict[int, int]:
    """Pilot search over the slot-by-slot decomposition.

    For each slot, every candidate subset is scored by completing the rest of
    the schedule with the plain decomposition plus pairwise refinement; the
    best-scoring candidate is kept and the next slot is considered.
    """
    slots = list(range(1, m + 1))
    remaining = list(ids)
    fixed: dict[int, int] = {}
    best_val, best_full = None, None
    for pos, slot in enumerate(slots[:-1]):
        target = Fraction(sum(loads[c - 1] for c in remaining), m - pos)
        step = None
        for sub in _candidate_subsets([(c, loads[c - 1]) for c in remaining], target, eta, k):
            chosen = set(sub)
            trial = dict(fixed)
            trial.update({c: slot for c in sub})
            trial.update(_decompose(loads, [c for c in remaining if c not in chosen], slots[pos + 1:], eta))
            _rebalance(loads, trial, slots, eta)
            val = max(_slot_totals(loads, trial, slots).values())
            if step is None or val < step[0]:
                step = (val, chosen, trial)
        val, chosen, trial = step
        if best_val is None or val < best_val:
            best_val, best_full = val, trial
        if best_val <= good_enough:
            break
        fixed.update({c: slot for c in chosen})
        remaining = [c for c in remaining if c not in chosen]
    return best_full


def lower_bound(dist: KeyDist, m: int) -> int:
    """max(ceil(total / m), largest cluster): no schedule can beat this."""
    return max(-(-dist.total // m), max(dist.loads, default=0))


def schedule_os4m(
    dist: KeyDist,
    m: int,
    eta: float = 0.002,
    refine: bool = True,
    search_limit: int = 64,
    candidates: int = 8,
) -> ScheduleResult:
    """Key-distribution scheduler.

    Slots 1..m-1 each take a balanced-subset-sum pick aimed at
    ``remaining_total / remaining_slots``; slot m takes what is left. Unless the
    result is already within ``1 + eta`` of ``lower_bound``, and ``refine`` is
    on, slot pairs are pooled and re-split with the same subset-sum step. For
    instances with at most ``search_limit`` clusters a pilot search then tries
    ``candidates`` near-target subsets per slot and keeps the best completion.
    Every stage is deterministic.
    """
    _check_m(m)
    _check_eta(eta)
    started = time.perf_counter()
    loads = dist.loads
    slots = list(range(1, m + 1))
    placed = _decompose(loads, range(1, dist.n + 1), slots, eta)
    good_enough = (1 + Fraction(eta)) * lower_bound(dist, m)

    def current() -> int:
        return max(_slot_totals(loads, placed, slots).values())

    if refine and m > 1 and current() > good_enough:
        _rebalance(loads, placed, slots, eta)
        if current() > good_enough and dist.n <= search_limit:
            trial = _rollout(loads, range(1, dist.n + 1), m, eta, candidates, good_enough)
            if max(_slot_totals(loads, trial, slots).values()) < current():
                placed = trial
    assignment = [placed[c] for c in range(1, dist.n + 1)]
    return ScheduleResult.build(dist, Schedule(assignment, m), started, SchedulerKind.OS4M.value)


def brute_force_optimal(dist: KeyDist, m: int) -> ScheduleResult:
    """Exact minimum max-load by depth-first branch and bound.

    Clusters are placed largest first; slots with equal current load are
    interchangeable, so only one of them is tried. Refuses instances with more
    than 20 clusters or 5 slots.
    """
    _check_m(m)
    if dist.n > ORACLE_MAX_N or m > ORACLE_MAX_M:
        raise SizeError(f"oracle limited to n <= {ORACLE_MAX_N}, m <= {ORACLE_MAX_M}; got n={dist.n}, m={m}")
    started = time.perf_counter()
    loads = dist.loads
    order = sorted(range(dist.n), key=lambda j: (-loads[j], j))
    sizes = [loads[j] for j in order]
    suffix = [0] * (len(sizes) + 1)
    for i in range(len(sizes) - 1, -1, -1):
        suffix[i] = suffix[i + 1] + sizes[i]
    lower = max(-(-dist.total // m), max(loads, default=0))

    best_assign = _lpt_assign(loads, m)
    best = max(slot_loads(dist, Schedule(best_assign, m)).loads)
    current = [0] * m
    picks = [0] * len(sizes)

    def search(i: int, top: int) -> bool:
        nonlocal best, best_assign
        if top >= best:
            return False
        if i == len(sizes):
            best = top
            best_assign = [0] * dist.n
            for pos, j in enumerate(order):
                best_assign[j] = picks[pos] + 1
            return best == lower
        # the remaining work cannot fit under best if even a perfect spread exceeds it
        if -(-(sum(current) + suffix[i]) // m) >= best:
            return False
        seen = set()
        for s in range(m):
            if current[s] in seen:
                continue
            seen.add(current[s])
            new = current[s] + sizes[i]
            if new >= best:
                continue
            current[s] = new
            picks[i] = s
            done = search(i + 1, max(top, new))
            current[s] -= sizes[i]
            if done:
                return True
        return False

    if best > lower:
        search(0, 0)
    return ScheduleResult.build(dist, Schedule(best_assign, m), started, "oracle")


SOLVERS: dict[str, Callable[..., ScheduleResult]] = {
    SchedulerKind.HASH.value: lambda dist, m, eta=0.002: schedule_hash(dist, m),
    SchedulerKind.LPT.value: lambda dist, m, eta=0.002: schedule_lpt(dist, m),
    SchedulerKind.OS4M.value: lambda dist, m, eta=0.002: schedule_os4m(dist, m, eta),
}


def solve(kind: SchedulerKind | str, dist: KeyDist, m: int, eta: float = 0.002) -> ScheduleResult:
    return SOLVERS[SchedulerKind(kind).value](dist, m, eta)
