"""Counter-based splittable random streams (splitmix64).

Every random quantity in the package flows from a ``(seed, purpose, key)``
triple through the same splitmix64 state walk, so any stream can be
reproduced in isolation: site streams of a Poisson environment are keyed by
``(seed, PURPOSE_SITE, site)``, Monte Carlo replicas by
``(seed, PURPOSE_REPLICA, index)``, and so on.  Query order never matters.

Two twin implementations exist on purpose:

* module-level primitives (``next_u64`` & friends) written against
  ``np.uint64`` scalars and compiled by numba for the hot kernels;
* the pure-Python :class:`Stream` on masked ints for library-level code.

``tests/test_rng.py`` pins them to each other draw for draw.  ``math.log``
(libm) is used on both sides so exponential variates agree bit for bit.
"""

from __future__ import annotations

import math

import numpy as np

from ._jit import jit_inline

_U = np.uint64

GOLDEN = _U(0x9E3779B97F4A7C15)
_MIX_1 = _U(0xBF58476D1CE4E5B9)
_MIX_2 = _U(0x94D049BB133111EB)
_SEED_SALT = _U(0x243F6A8885A308D3)
_SH30 = _U(30)
_SH27 = _U(27)
_SH31 = _U(31)
_SH32 = _U(32)
_SH11 = _U(11)
_ONE = _U(1)
_INV53 = 1.1102230246251565e-16  # 2**-53

# purpose tags separating key spaces of one master seed
PURPOSE_SITE = _U(1)  # environment site streams
PURPOSE_REPLICA = _U(2)  # Monte Carlo replica streams
PURPOSE_PARTICLE = _U(3)  # per-environment particle uniforms
PURPOSE_USER = _U(4)  # library-level Stream objects

# sites are shifted into nonnegative range before keying; |site| < 2^61
SITE_KEY_OFFSET = 1 << 62

_M64 = (1 << 64) - 1


@jit_inline
def mix64(z):
    z = (z ^ (z >> _SH30)) * _MIX_1
    z = (z ^ (z >> _SH27)) * _MIX_2
    return z ^ (z >> _SH31)


@jit_inline
def stream_state(seed, purpose, key):
    """Initial state of the stream keyed by (seed, purpose, key)."""
    s = mix64(seed ^ _SEED_SALT)
    s = mix64(s + purpose)
    return mix64(s + key)


@jit_inline
def next_u64(state):
    state = state + GOLDEN
    return state, mix64(state)


@jit_inline
def next_double(state):
    state, z = next_u64(state)
    return state, (z >> _SH11) * _INV53


@jit_inline
def next_exponential(state):
    # u in (0, 1], so log never sees zero
    state, z = next_u64(state)
    return state, -math.log(((z >> _SH11) + _ONE) * _INV53)


@jit_inline
def next_below(state, n):
    """Integer in [0, n) from the top 32 bits (bias O(n/2^32), n is small)."""
    state, z = next_u64(state)
    return state, np.int64(((z >> _SH32) * _U(n)) >> _SH32)


def site_key(site: int) -> np.uint64:
    """uint64 key of a (possibly negative) lattice site."""
    return _U(int(site) + SITE_KEY_OFFSET)


def _mix64_int(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


class Stream:
    """Pure-Python twin of the kernel RNG, for library-level sampling."""

    __slots__ = ("state",)

    def __init__(self, seed: int, purpose: int = int(PURPOSE_USER), key: int = 0):
        s = _mix64_int((int(seed) ^ int(_SEED_SALT)) & _M64)
        s = _mix64_int((s + purpose) & _M64)
        self.state = _mix64_int((s + key) & _M64)

    @classmethod
    def from_state(cls, state: int) -> "Stream":
        obj = cls.__new__(cls)
        obj.state = int(state) & _M64
        return obj

    def u64(self) -> int:
        self.state = (self.state + int(GOLDEN)) & _M64
        return _mix64_int(self.state)

    def uniform(self) -> float:
        return (self.u64() >> 11) * _INV53

    def exponential(self) -> float:
        return -math.log(((self.u64() >> 11) + 1) * _INV53)

    def below(self, n: int) -> int:
        return ((self.u64() >> 32) * n) >> 32

    def spawn(self) -> "Stream":
        """Child stream derived from one draw; parent advances once."""
        return Stream.from_state(self.fork_state())

    def fork_state(self) -> np.uint64:
        """Raw uint64 child state for handing to a kernel; parent advances."""
        return _U(_mix64_int(self.u64() ^ int(_SEED_SALT)))
