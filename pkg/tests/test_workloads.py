import hashlib

import numpy as np
import pytest

from opshard.cluster import Clusterer
from opshard.errors import InvalidInputError
from opshard.workloads import (
    WorkloadGen,
    cluster_dist,
    gen_workload,
    key_counts,
    loglog_slope,
    random_instance,
)


def digest(records):
    return hashlib.sha256(b"\n".join(records)).hexdigest()


def test_uniform_reproducible_and_in_range():
    g = WorkloadGen("uniform", 10, 100, 7)
    a, b = gen_workload(g), gen_workload(g)
    assert a == b and len(a) == 100
    counts = key_counts(g)
    assert sum(counts.values()) == 100
    # binomial(100, 0.1): mean 10, sd 3; six sd either side
    assert all(0 <= c <= 28 for c in counts.values())
    assert digest(gen_workload(WorkloadGen("uniform", 10, 100, 8))) != digest(a)


@pytest.mark.parametrize("s", [0.8, 1.0, 1.5])
def test_zipf_slope_within_five_percent(s):
    counts = key_counts(WorkloadGen("zipf", 10_000, 3_000_000, 3, s))
    assert len(counts) >= 10_000 * 0.9
    assert abs(loglog_slope(counts) + s) <= 0.05 * s


def test_zipf_large_exponent_concentrates():
    counts = key_counts(WorkloadGen("zipf", 1000, 10_000, 1, s=30.0))
    assert counts[b"1"] == 10_000


def test_invalid_exponent():
    for s in (0.0, -1.0, float("inf")):
        with pytest.raises(InvalidInputError):
            WorkloadGen("zipf", 10, 10, 1, s)


def test_word_corpus_snapshot():
    g = WorkloadGen("words", 50, 40, 5, words_per_line=8)
    lines = gen_workload(g)
    assert len(lines) == 5 and all(len(l.split()) == 8 for l in lines)
    assert lines == gen_workload(g)
    words = [w for l in lines for w in l.split()]
    counts = key_counts(g)
    assert sum(counts.values()) == 40
    assert sorted(set(words)) == sorted(counts)
    assert all(words.count(w) == c for w, c in counts.items())
    assert digest(lines) == digest(gen_workload(WorkloadGen("words", 50, 40, 5, words_per_line=8)))


def test_stream_matches_counts():
    g = WorkloadGen("zipf", 500, 20_000, 4)
    stream = gen_workload(g)
    tally = {}
    for k in stream:
        tally[k] = tally.get(k, 0) + 1
    assert tally == key_counts(g)


def test_cluster_dist_sums():
    counts = key_counts(WorkloadGen("zipf", 1000, 50_000, 2))
    d = cluster_dist(counts, Clusterer(16))
    assert d.n == 16 and d.total == 50_000


def test_random_instance_families():
    rng = np.random.default_rng(0)
    for fam in ("uniform", "zipf", "outlier"):
        d = random_instance(rng, fam, 12)
        assert d.n == 12 and min(d.loads) >= 1
    with pytest.raises(InvalidInputError):
        random_instance(rng, "nope", 3)
