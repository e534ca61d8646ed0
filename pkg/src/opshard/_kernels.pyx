# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: FNV-1a key hashing and the bitset subset-sum table.

Mirrors ``_pykernels`` exactly; the test suite runs both against each other.
"""

from libc.stdint cimport uint64_t, int32_t, int64_t
from libc.stdlib cimport malloc, calloc, free

cdef uint64_t FNV_OFFSET = 0xCBF29CE484222325ULL
cdef uint64_t FNV_PRIME = 0x100000001B3ULL
cdef uint64_t SIGN_BIT = 1ULL << 63


cdef inline uint64_t _fnv_bytes(bytes data):
    cdef const unsigned char* p = data
    cdef Py_ssize_t n = len(data)
    cdef uint64_t h = FNV_OFFSET
    cdef Py_ssize_t i
    for i in range(n):
        h = (h ^ p[i]) * FNV_PRIME
    return h


cdef inline uint64_t _abs_hash(uint64_t h) noexcept nogil:
    if h < SIGN_BIT:
        return h
    return (~h) + 1


def fnv1a64(data):
    return _fnv_bytes(bytes(data))


def abs_hash(h):
    cdef uint64_t v = h
    if v == SIGN_BIT:
        return 1 << 63
    return _abs_hash(v)


def cluster_ids(keys, long long n_target):
    cdef dict memo = {}
    cdef list out = []
    cdef uint64_t h
    cdef object cid
    for key in keys:
        cid = memo.get(key)
        if cid is None:
            h = _fnv_bytes(<bytes>key)
            if h == SIGN_BIT:
                cid = ((1 << 63) % n_target) + 1
            else:
                cid = <long long>(_abs_hash(h) % <uint64_t>n_target) + 1
            memo[key] = cid
        out.append(cid)
    return out


cdef extern from *:
    int __builtin_ctzll(unsigned long long) nogil
    int __builtin_clzll(unsigned long long) nogil


cdef inline int _ctz(uint64_t x) noexcept nogil:
    return __builtin_ctzll(x)


cdef class SubsetSumTable:
    """Reachable subset sums up to ``cap`` with first-reaching item per sum."""

    cdef uint64_t* reach
    cdef int32_t* parent
    cdef Py_ssize_t nwords
    cdef Py_ssize_t parent_len
    cdef readonly long long cap
    cdef readonly list weights

    def __cinit__(self, weights, long long cap, stop_at=None):
        if cap < 0:
            raise ValueError("cap must be non-negative")
        self.cap = cap
        self.nwords = cap // 64 + 1
        self.parent_len = cap + 1
        self.reach = <uint64_t*>calloc(self.nwords, sizeof(uint64_t))
        self.parent = <int32_t*>malloc(self.parent_len * sizeof(int32_t))
        if self.reach == NULL or self.parent == NULL:
            raise MemoryError()

    def __init__(self, weights, long long cap, stop_at=None):
        cdef Py_ssize_t i, k, q, lo, hi, top
        cdef long long stop = -1 if stop_at is None else stop_at
        cdef long long w
        cdef int r
        cdef uint64_t shifted, fresh, top_mask
        cdef Py_ssize_t nwords = self.nwords
        cdef uint64_t* reach = self.reach
        cdef int32_t* parent = self.parent
        self.weights = [int(x) for x in weights]
        reach[0] = 1
        parent[0] = -2
        hi = 0  # highest word holding a reachable sum
        r = (cap % 64) + 1
        top_mask = 0xFFFFFFFFFFFFFFFFULL if r == 64 else ((1ULL << r) - 1)
        for i in range(len(self.weights)):
            w = self.weights[i]
            if w < 0:
                raise ValueError("weights must be non-negative")
            if w == 0 or w > cap:
                continue
            q = w // 64
            r = w % 64
            top = hi + q + 1
            if top > nwords - 1:
                top = nwords - 1
            for k in range(top, q - 1, -1):
                lo = k - q
                if r == 0:
                    shifted = reach[lo]
                else:
                    shifted = reach[lo] << r
                    if lo > 0:
                        shifted |= reach[lo - 1] >> (64 - r)
                if k == nwords - 1:
                    shifted &= top_mask
                fresh = shifted & ~reach[k]
                if fresh:
                    reach[k] |= fresh
                    if k > hi:
                        hi = k
                    while fresh:
                        parent[k * 64 + _ctz(fresh)] = <int32_t>i
                        fresh &= fresh - 1
            if 0 <= stop <= cap and (reach[stop // 64] >> (stop % 64)) & 1:
                break

    def __dealloc__(self):
        free(self.reach)
        free(self.parent)

    def reachable(self, long long s):
        return 0 <= s <= self.cap and bool((self.reach[s // 64] >> (s % 64)) & 1)

    def best_at_most(self, long long t):
        cdef Py_ssize_t k
        cdef uint64_t word
        cdef int r
        if t > self.cap:
            t = self.cap
        if t < 0:
            return -1
        k = t // 64
        r = t % 64
        word = self.reach[k]
        if r < 63:
            word &= (1ULL << (r + 1)) - 1
        while True:
            if word:
                return k * 64 + 63 - __builtin_clzll(word)
            k -= 1
            word = self.reach[k]

    def items_for(self, long long s):
        if not self.reachable(s):
            raise ValueError(f"sum {s} is not reachable")
        cdef list picked = []
        cdef int32_t i
        while s:
            i = self.parent[s]
            picked.append(i)
            s -= self.weights[i]
        picked.reverse()
        return picked
