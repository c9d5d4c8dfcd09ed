"""The N-point lattice chain, its diffusive rescaling, and continuum samplers.

States live on Z^N.  At a configuration the chain jumps along split vectors
of the current partition: a value-class of size m splits into k up-movers
and m - k down-movers at rate p(k:m-k).  With a consistent family
normalized to p(0:0) = 1 every class carries total rate 1, so the exit
rate of a state is its number of distinct values; Gillespie sampling uses
that per-class decomposition (holding time, uniform class, split size from
the cumulative binomial table, uniform subset), which is equivalent to
enumerating all 2^m vectors but O(m) per event.

Rescaling Y^n(t) = Y(n t) / sqrt(n) turns these chains into approximate
samples of the continuum sticky family; the approximation bias is
O(n^{-1/2}) and is budgeted explicitly wherever a tolerance depends on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from math import comb

import numpy as np

from . import kernels
from .params import PFamily, ThetaFamily, AtomicMeasure, p_n_from_theta, theta_from_nu, validate
from .rng import Stream

EXIT_RATE_TOL = 1e-9
SQRT2 = math.sqrt(2.0)


@dataclass
class JumpPath:
    """Right-continuous piecewise-constant trajectory.

    `states` has one row per segment: row 0 holds at t0, row i holds from
    times[i-1] on.  Evaluation outside [t0, t_end] is an error.
    """

    t0: float
    times: np.ndarray
    states: np.ndarray
    t_end: float

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        states = np.asarray(self.states)
        if states.ndim == 1:
            states = states[:, None]
        self.states = states
        if self.states.shape[0] != self.times.shape[0] + 1:
            raise ValueError("need one more state row than jump times")
        if self.times.size:
            d = np.diff(self.times)
            if (self.times[0] <= self.t0 or (d <= 0).any()
                    or self.times[-1] > self.t_end):
                raise ValueError("jump times must increase strictly within (t0, t_end]")

    @property
    def n_dim(self) -> int:
        return self.states.shape[1]

    @property
    def n_jumps(self) -> int:
        return self.times.shape[0]

    def value_at(self, t: float) -> np.ndarray:
        if t < self.t0 or t > self.t_end:
            raise ValueError(f"t={t} outside simulated window [{self.t0}, {self.t_end}]")
        return self.states[np.searchsorted(self.times, t, side="right")]

    def segment_bounds(self) -> np.ndarray:
        return np.concatenate(([self.t0], self.times, [self.t_end]))

    def occupation(self, predicate, up_to: float | None = None) -> float:
        """Exact time the path spends in {predicate}; no discretization."""
        up_to = self.t_end if up_to is None else up_to
        if up_to < self.t0 or up_to > self.t_end:
            raise ValueError("occupation window outside the simulated path")
        bounds = self.segment_bounds()
        total = 0.0
        for i in range(self.states.shape[0]):
            lo = bounds[i]
            hi = min(bounds[i + 1], up_to)
            if hi <= lo:
                break
            if predicate(self.states[i]):
                total += hi - lo
        return total

    def occupation_equal(self, i: int, j: int, up_to: float | None = None) -> float:
        return self.occupation(lambda s: s[i] == s[j], up_to)


@dataclass
class ChainSpec:
    """A chain run: rates, dimension, integer start, horizon."""

    p: PFamily
    n_dim: int
    x0: np.ndarray
    horizon: float
    event_cap: int = kernels.DEFAULT_EVENT_CAP

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=np.int64)
        if self.x0.shape != (self.n_dim,):
            raise ValueError("x0 must be an integer configuration of length n_dim")
        if self.p.n_max < self.n_dim:
            raise ValueError(
                f"p family n_max={self.p.n_max} too small for N={self.n_dim} "
                "(need n_max >= N)"
            )
        bad = validate(self.p)
        if bad:
            raise ValueError(f"invalid p family: {bad[:3]}")
        if self.horizon < 0:
            raise ValueError("horizon must be nonnegative")


def split_cumulative(p: PFamily, n_dim: int) -> np.ndarray:
    """Cumulative split-size table: cum[m, k] = sum_{j<=k} C(m,j) p(j:m-j).

    Row m drives the split of a size-m class.  The exit-rate identity
    (each row must end at p(0:0) = 1) is asserted here, once per table;
    kernels then rely on it at every Gillespie step.
    """
    cum = np.zeros((n_dim + 1, n_dim + 1))
    for m in range(1, n_dim + 1):
        acc = 0.0
        for k in range(m + 1):
            acc += comb(m, k) * p.p(k, m - k)
            cum[m, k] = acc
        if abs(cum[m, m] - 1.0) > EXIT_RATE_TOL:
            raise ValueError(
                f"exit-rate identity violated for class size {m}: "
                f"sum C(m,k)p(k:m-k) = {cum[m, m]!r}"
            )
    return cum


def _as_state(rng) -> np.uint64:
    if isinstance(rng, Stream):
        return rng.fork_state()
    return Stream(int(rng)).fork_state()


def simulate_chain(spec: ChainSpec, rng) -> JumpPath:
    """Gillespie path of the chain over [0, horizon]."""
    cum = split_cumulative(spec.p, spec.n_dim)
    times, states, count, capped = kernels.chain_path(
        _as_state(rng), spec.x0, cum, float(spec.horizon), spec.event_cap
    )
    if capped:
        raise RuntimeError(f"event cap {spec.event_cap} hit before the horizon")
    return JumpPath(0.0, times[:count].copy(), states[: count + 1].copy(),
                    float(spec.horizon))


def rescale(path: JumpPath, n: int) -> JumpPath:
    """Diffusive rescaling: times / n, states / sqrt(n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return JumpPath(
        path.t0 / n,
        path.times / n,
        path.states / math.sqrt(n),
        path.t_end / n,
    )


def snap_to_lattice(x0, n: int) -> np.ndarray:
    """Nearest point of n^{-1/2} Z^N, ties toward -inf, preserving ties.

    Snaps each distinct value once so equal coordinates stay equal.
    """
    x0 = np.asarray(x0, dtype=float)
    snapped = {v: int(math.ceil(v * math.sqrt(n) - 0.5)) for v in set(x0.tolist())}
    return np.array([snapped[v] for v in x0.tolist()], dtype=np.int64)


def sample_continuum_family(theta: ThetaFamily, x0, horizon: float, n: int, rng,
                            event_cap: int = kernels.DEFAULT_EVENT_CAP) -> JumpPath:
    """Approximate sample of the theta-family started from (snapped) x0.

    Simulates the lattice chain with rates p_n over horizon n*T and
    rescales; raises if p_n has negative entries at this resolution.
    """
    x0 = np.asarray(x0, dtype=float)
    p_n = p_n_from_theta(theta, n)
    spec = ChainSpec(p_n, x0.shape[0], snap_to_lattice(x0, n), float(n) * horizon,
                     event_cap)
    return rescale(simulate_chain(spec, rng), n)


def sticky_pair_family(theta0: float) -> ThetaFamily:
    """Two-point family whose gap over sqrt(2) is sticky with rate theta0.

    The pair splitting rate theta(1:1) = theta0 / (2 sqrt(2)) makes
    eta = |X1 - X2| / sqrt(2) a natural-scale sticky Brownian motion whose
    boundary-rate parameter is theta0.
    """
    if theta0 <= 0:
        raise ValueError("theta0 must be positive")
    nu = AtomicMeasure.delta(0.5, theta0 / (2.0 * SQRT2))
    return theta_from_nu(nu, 0.0, 2)


def sample_sticky_bm(theta0: float, y0: float, horizon: float, n: int, rng,
                     event_cap: int = kernels.DEFAULT_EVENT_CAP) -> JumpPath:
    """Approximate sticky Brownian motion on the half line, started at y0.

    Runs a coupled pair started at (y0/sqrt(2), -y0/sqrt(2)) and returns
    the path of eta = |X1 - X2| / sqrt(2), with no-op jumps compacted.
    """
    if y0 < 0:
        raise ValueError("y0 must be nonnegative")
    theta = sticky_pair_family(theta0)
    start = np.array([y0 / SQRT2, -y0 / SQRT2])
    pair = sample_continuum_family(theta, start, horizon, n, rng, event_cap)
    eta = np.abs(pair.states[:, 0] - pair.states[:, 1]) / SQRT2
    keep = np.flatnonzero(eta[1:] != eta[:-1])
    return JumpPath(pair.t0, pair.times[keep], eta[np.concatenate(([0], keep + 1))],
                    pair.t_end)
