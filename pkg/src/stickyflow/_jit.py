"""Numba dispatch for the hot kernels.

Every hot loop in :mod:`stickyflow.kernels` is written once, in plain
numpy-flavored Python, and compiled with ``numba.njit`` at import time.
Setting the environment variable ``STICKYFLOW_NO_NUMBA=1`` (before import)
selects the uncompiled fallback path instead; results are bit-identical,
only slower.  ``benchmarks/bench_kernels.py`` compares the two paths.
"""

from __future__ import annotations

import functools
import os

import numpy as np

NUMBA_ENABLED = os.environ.get("STICKYFLOW_NO_NUMBA", "").lower() not in (
    "1",
    "true",
    "yes",
    "on",
)

if NUMBA_ENABLED:
    from numba import njit

    def jit(func):
        """Compile a kernel driver (outermost hot loop)."""
        return njit(cache=True, nogil=True)(func)

    def jit_inline(func):
        """Compile a small helper that drivers call per event."""
        return njit(cache=True, nogil=True, inline="always")(func)

else:

    def jit(func):
        # Fallback drivers run uint64 arithmetic on numpy scalars, which
        # wraps mod 2^64 exactly like the compiled path but warns; silence
        # the warning once per driver call.
        @functools.wraps(func)
        def wrapper(*args):
            with np.errstate(over="ignore"):
                return func(*args)

        return wrapper

    def jit_inline(func):
        return func
