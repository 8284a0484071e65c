"""Numba switch.

Hot kernels come in two flavours: a loop version compiled with numba and a
vectorised pure-numpy version. ``MAXDISC_NUMBA=0`` (or a missing numba install)
selects the numpy path. Both consume random numbers in the same order, so they
produce the same samples up to floating point rounding.
"""

import os

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_flag = os.environ.get("MAXDISC_NUMBA", "1").strip().lower()
USE_NUMBA = numba is not None and _flag not in ("0", "false", "no", "off")


def njit(fn):
    """Compile ``fn`` with numba when available; otherwise return it unchanged."""
    if numba is None:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


def pick(numba_impl, numpy_impl):
    return numba_impl if USE_NUMBA else numpy_impl
