import itertools

import pytest


def enumerate_optimum(loads, m):
    """Exhaustive minimum max-load over all m**n assignments (independent of the package)."""
    best = None
    for assign in itertools.product(range(m), repeat=len(loads)):
        totals = [0] * m
        for k, s in zip(loads, assign):
            totals[s] += k
        top = max(totals)
        if best is None or top < best:
            best = top
    return best if best is not None else 0


@pytest.fixture
def optimum():
    return enumerate_optimum
