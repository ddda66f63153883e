"""JIT switch for the hot kernels.

Kernels are written once as plain Python over numpy arrays.  When numba is
importable and ``ABFSIM_DISABLE_NUMBA`` is unset (or ``0``), they are compiled
with ``numba.njit``; otherwise the very same functions run interpreted.  The
interpreted version of a compiled kernel is always reachable through
``kernel.py_func`` so tests can compare both paths.
"""
from __future__ import annotations

import os

_flag = os.environ.get("ABFSIM_DISABLE_NUMBA", "").strip().lower()
_disabled = _flag not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

USE_NUMBA = numba is not None and not _disabled


def jit(fn):
    """Compile ``fn`` with numba when enabled, else return it unchanged."""
    if USE_NUMBA:
        return numba.njit(cache=True, nogil=True)(fn)
    fn.py_func = fn
    return fn


def interpreted(fn):
    """The pure-Python body behind a (possibly) compiled kernel."""
    return getattr(fn, "py_func", fn)
