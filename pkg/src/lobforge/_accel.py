"""Numba switch for the hot kernels.

Set ``LOBFORGE_NUMBA=0`` before import to run every kernel as plain
NumPy/Python. The fallback executes the same source, so both paths are
bit-for-bit comparable; it is only slower.
"""

from __future__ import annotations

import os
import warnings

_FLAG = os.environ.get("LOBFORGE_NUMBA", "1").strip().lower()

try:
    if _FLAG in ("0", "false", "no", "off"):
        raise ImportError("numba disabled by LOBFORGE_NUMBA")
    import numba as _numba

    NUMBA_ENABLED = True
    # an outdated system TBB only disables one optional threading backend
    warnings.filterwarnings("ignore", message="The TBB threading layer", category=_numba.NumbaWarning)
except ImportError:
    _numba = None
    NUMBA_ENABLED = False


def jit(fn=None, **kwargs):
    """``numba.njit(cache=True)`` when enabled, identity otherwise."""
    opts = {"cache": True}
    opts.update(kwargs)

    def wrap(f):
        if NUMBA_ENABLED:
            return _numba.njit(**opts)(f)
        return f

    if fn is None:
        return wrap
    return wrap(fn)


def pjit(fn):
    """Like :func:`jit` but lets ``prange`` loops run on numba's thread pool."""
    return jit(fn, parallel=True)


if NUMBA_ENABLED:
    prange = _numba.prange
else:
    prange = range


def set_threads(n: int | None) -> int:
    """Limit the numba thread pool; returns the count in effect (1 without numba)."""
    if not NUMBA_ENABLED:
        return 1
    if n:
        _numba.set_num_threads(max(1, min(int(n), _numba.config.NUMBA_NUM_THREADS)))
    return _numba.get_num_threads()


def int_dict():
    """Empty int64 -> int64 mapping usable from inside kernels."""
    if NUMBA_ENABLED:
        from numba import types
        from numba.typed import Dict

        return Dict.empty(key_type=types.int64, value_type=types.int64)
    return {}


def backend_name() -> str:
    return "numba" if NUMBA_ENABLED else "numpy"
