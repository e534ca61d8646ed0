"""Key to operation-cluster mapping.

The default clusterer hashes the raw key bytes with 64-bit FNV-1a (offset
basis 0xcbf29ce484222325, prime 0x100000001b3), reads the digest as a signed
64-bit integer, takes its magnitude (2**63 for the most negative value) and
maps it to ``magnitude mod n_target + 1``. Keys whose magnitudes are congruent
modulo ``n_target`` share a cluster.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .errors import InvalidInputError
from .kernels import abs_hash, cluster_ids, fnv1a64


class ClustererKind(str, enum.Enum):
    DEFAULT_HASH = "default"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Clusterer:
    """Deterministic key to cluster-id map with ids in ``1..n_target``.

    A custom clusterer supplies ``assign`` (key bytes to cluster id). Its
    output is validated against ``n_target`` on every call.
    """

    n_target: int
    kind: ClustererKind = ClustererKind.DEFAULT_HASH
    hash: Callable[[bytes], int] = fnv1a64
    assign: Callable[[bytes], int] | None = None

    def __post_init__(self):
        if isinstance(self.n_target, bool) or not isinstance(self.n_target, int) or self.n_target < 1:
            raise InvalidInputError(f"n_target must be an integer >= 1, got {self.n_target!r}")
        if self.kind is ClustererKind.CUSTOM and self.assign is None:
            raise InvalidInputError("a custom clusterer needs an assign function")

    @classmethod
    def custom(cls, n_target: int, assign: Callable[[bytes], int]) -> "Clusterer":
        return cls(n_target=n_target, kind=ClustererKind.CUSTOM, assign=assign)

    def __call__(self, key: bytes) -> int:
        return cluster_of(key, self)

    def many(self, keys: Sequence[bytes]) -> list[int]:
        """Cluster ids for a batch of keys (uses the compiled kernel when available)."""
        if self.kind is ClustererKind.DEFAULT_HASH and self.hash is fnv1a64:
            return cluster_ids(keys, self.n_target)
        return [cluster_of(k, self) for k in keys]


def hash_magnitude(h: int) -> int:
    """|h| where ``h`` is a 64-bit digest read as signed, or any Python int."""
    if h < 0:
        return -h
    if h >= 1 << 63:
        return abs_hash(h & 0xFFFFFFFFFFFFFFFF)
    return h


def cluster_of(key: bytes, c: Clusterer) -> int:
    if c.kind is ClustererKind.CUSTOM:
        cid = c.assign(key)
        if isinstance(cid, bool) or not isinstance(cid, int) or not 1 <= cid <= c.n_target:
            raise InvalidInputError(f"custom clusterer returned {cid!r}, outside 1..{c.n_target}")
        return cid
    return hash_magnitude(c.hash(key)) % c.n_target + 1


def effective_n(observed_clusters: Iterable[int], c: Clusterer) -> int:
    """Number of distinct non-empty clusters; never more than ``n_target``."""
    observed = set(observed_clusters)
    bad = [j for j in observed if not 1 <= j <= c.n_target]
    if bad:
        raise InvalidInputError(f"cluster ids {sorted(bad)[:5]} outside 1..{c.n_target}")
    return len(observed)


def default_n_target(m: int) -> int:
    """Eight clusters per Reduce slot, inside the 6-16x band that tends to work well."""
    return 8 * m
