"""Kernel selection: the compiled extension when importable, else pure Python.

Set ``OPSHARD_PURE=1`` to force the pure-Python kernels.
"""

from __future__ import annotations

import os

from . import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("OPSHARD_PURE", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "cython"
    except ImportError:
        _impl = _pykernels

fnv1a64 = _impl.fnv1a64
abs_hash = _impl.abs_hash
cluster_ids = _impl.cluster_ids
SubsetSumTable = _impl.SubsetSumTable

__all__ = ["BACKEND", "fnv1a64", "abs_hash", "cluster_ids", "SubsetSumTable"]
