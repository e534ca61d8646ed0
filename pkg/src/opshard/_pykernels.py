"""Pure-Python kernels. Same API and results as the compiled ``_kernels``."""

from __future__ import annotations

from typing import Sequence

FNV_OFFSET = 0xCBF29CE484222325
FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF
_SIGN_BIT = 1 << 63


def fnv1a64(data: bytes) -> int:
    h = FNV_OFFSET
    for b in data:
        h = ((h ^ b) * FNV_PRIME) & _MASK64
    return h


def abs_hash(h: int) -> int:
    """Magnitude of ``h`` read as a signed 64-bit value (2**63 stays 2**63)."""
    return h if h < _SIGN_BIT else (1 << 64) - h


def cluster_ids(keys: Sequence[bytes], n_target: int) -> list[int]:
    memo: dict[bytes, int] = {}
    out = []
    for key in keys:
        cid = memo.get(key)
        if cid is None:
            cid = abs_hash(fnv1a64(key)) % n_target + 1
            memo[key] = cid
        out.append(cid)
    return out


class SubsetSumTable:
    """Reachable subset sums of ``weights`` up to ``cap``.

    Every reachable sum remembers the first item (in input order) that reached
    it, so ``items_for`` reconstructs one canonical subset per sum. With
    ``stop_at`` set, items after the one that first reaches that sum are
    skipped; only ``best_at_most(t)`` for ``t >= stop_at`` stays exact.
    """

    def __init__(self, weights: Sequence[int], cap: int, stop_at: int | None = None):
        if cap < 0:
            raise ValueError("cap must be non-negative")
        self.weights = [int(w) for w in weights]
        self.cap = cap
        mask = (1 << (cap + 1)) - 1
        reach = 1
        newly = []
        for w in self.weights:
            if w < 0:
                raise ValueError("weights must be non-negative")
            if w == 0 or w > cap:
                newly.append(0)
                continue
            fresh = ((reach << w) & mask) & ~reach
            reach |= fresh
            newly.append(fresh)
            if stop_at is not None and (reach >> stop_at) & 1:
                break
        self._reach = reach
        self._newly = newly

    def reachable(self, s: int) -> bool:
        return 0 <= s <= self.cap and bool((self._reach >> s) & 1)

    def best_at_most(self, t: int) -> int:
        """Largest reachable sum not exceeding ``t`` (0 is always reachable)."""
        t = min(t, self.cap)
        if t < 0:
            return -1
        below = self._reach & ((1 << (t + 1)) - 1)
        return below.bit_length() - 1

    def items_for(self, s: int) -> list[int]:
        if not self.reachable(s):
            raise ValueError(f"sum {s} is not reachable")
        picked = []
        while s:
            for i, fresh in enumerate(self._newly):
                if (fresh >> s) & 1:
                    break
            picked.append(i)
            s -= self.weights[i]
        picked.reverse()
        return picked
