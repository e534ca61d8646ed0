"""Seeded synthetic inputs: skewed or flat key streams, plus a word corpus."""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cluster import Clusterer
from .core import KeyDist
from .errors import InvalidInputError


class WorkloadKind(str, enum.Enum):
    ZIPF = "zipf"
    UNIFORM = "uniform"
    WORDS = "words"


@dataclass(frozen=True)
class WorkloadGen:
    kind: WorkloadKind
    keys: int
    pairs: int
    seed: int
    s: float = 1.0
    words_per_line: int = 10

    def __post_init__(self):
        object.__setattr__(self, "kind", WorkloadKind(self.kind))
        if self.keys < 1:
            raise InvalidInputError("need at least one distinct key")
        if self.pairs < 0:
            raise InvalidInputError("pairs must be non-negative")
        if self.kind is not WorkloadKind.UNIFORM and not (self.s > 0 and math.isfinite(self.s)):
            raise InvalidInputError(f"zipf exponent must be a finite value > 0, got {self.s}")
        if self.words_per_line < 1:
            raise InvalidInputError("words_per_line must be >= 1")


def _rng(g: WorkloadGen) -> np.random.Generator:
    return np.random.default_rng(g.seed)


def zipf_weights(keys: int, s: float) -> np.ndarray:
    ranks = np.arange(1, keys + 1, dtype=np.float64)
    w = ranks ** (-s)
    return w / w.sum()


def rank_counts(g: WorkloadGen) -> np.ndarray:
    """Pair count of each key by popularity rank (index 0 is rank 1)."""
    rng = _rng(g)
    if g.kind is WorkloadKind.UNIFORM:
        p = np.full(g.keys, 1.0 / g.keys)
    else:
        p = zipf_weights(g.keys, g.s)
    return rng.multinomial(g.pairs, p)


def key_name(rank: int) -> bytes:
    return b"%d" % rank


def _vocabulary(keys: int, rng: np.random.Generator) -> list[bytes]:
    letters = np.frombuffer(b"abcdefghijklmnopqrstuvwxyz", dtype=np.uint8)
    seen: set[bytes] = set()
    vocab: list[bytes] = []
    while len(vocab) < keys:
        length = int(rng.integers(2, 10))
        word = letters[rng.integers(0, 26, size=length)].tobytes()
        if word not in seen:
            seen.add(word)
            vocab.append(word)
    return vocab


def key_counts(g: WorkloadGen) -> dict[bytes, int]:
    """Non-zero per-key pair counts without materialising the stream."""
    counts = rank_counts(g)
    if g.kind is WorkloadKind.WORDS:
        names = _vocabulary(g.keys, _rng(g))
    else:
        names = [key_name(r) for r in range(1, g.keys + 1)]
    return {names[i]: int(c) for i, c in enumerate(counts) if c}


def gen_workload(g: WorkloadGen) -> list[bytes]:
    """Input records for the engine.

    Zipf and uniform workloads yield one key per record; the word corpus
    yields lines of ``words_per_line`` space-separated words. The same seed
    always gives the same bytes.
    """
    counts = rank_counts(g)
    rng = np.random.default_rng([g.seed, 1])
    stream = rng.permutation(np.repeat(np.arange(g.keys), counts))
    if g.kind is WorkloadKind.WORDS:
        vocab = _vocabulary(g.keys, _rng(g))
        k = g.words_per_line
        return [b" ".join(vocab[i] for i in stream[j : j + k]) for j in range(0, len(stream), k)]
    names = [key_name(r) for r in range(1, g.keys + 1)]
    return [names[i] for i in stream]


def cluster_dist(counts: Mapping[bytes, int], clusterer: Clusterer) -> KeyDist:
    """Per-cluster loads from per-key counts."""
    keys = list(counts)
    loads = [0] * clusterer.n_target
    for cid, key in zip(clusterer.many(keys), keys):
        loads[cid - 1] += counts[key]
    return KeyDist(loads)


def loglog_slope(counts: Sequence[int] | Counter, min_count: int = 5) -> float:
    """Least-squares slope of log(count) against log(rank), over ranks with at least ``min_count``."""
    values = sorted(counts.values() if isinstance(counts, Mapping) else counts, reverse=True)
    values = [v for v in values if v >= min_count]
    if len(values) < 2:
        raise InvalidInputError("too few populated ranks to fit a slope")
    x = np.log(np.arange(1, len(values) + 1, dtype=np.float64))
    y = np.log(np.asarray(values, dtype=np.float64))
    return float(np.polyfit(x, y, 1)[0])


INSTANCE_FAMILIES = ("uniform", "zipf", "outlier")


def random_instance(rng: np.random.Generator, family: str, n: int, scale: int = 1000) -> KeyDist:
    """A small scheduling instance: ``n`` cluster loads drawn from one family.

    ``uniform`` draws loads in 1..scale, ``zipf`` gives loads proportional to
    rank^-s for a random exponent in [0.5, 2] with a shuffled rank order, and
    ``outlier`` is uniform plus one or two clusters several times larger.
    """
    if family == "uniform":
        loads = rng.integers(1, scale + 1, size=n)
    elif family == "zipf":
        s = rng.uniform(0.5, 2.0)
        loads = np.maximum(1, np.round(scale * 4 * np.arange(1, n + 1) ** (-s))).astype(np.int64)
        loads = rng.permutation(loads)
    elif family == "outlier":
        loads = rng.integers(1, scale // 4 + 1, size=n)
        for i in rng.choice(n, size=min(n, int(rng.integers(1, 3))), replace=False):
            loads[i] = int(rng.integers(2, 6)) * scale
    else:
        raise InvalidInputError(f"unknown instance family {family!r}")
    return KeyDist(int(x) for x in loads)
