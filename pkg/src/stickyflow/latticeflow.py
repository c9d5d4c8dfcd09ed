"""Discrete stochastic flow of kernels on Z in a Poisson mark environment.

Each site of Z carries an independent rate-1 Poisson stream of events on
[0, T_max]; each event holds a mark drawn from the splitting law mu.  An
event at site y sends fraction r of the mass at y to y+1 and 1-r to y-1.
Site streams are pure functions of (seed, site) — first-touch order never
matters, and concurrent cache fills are idempotent because every thread
computes the identical stream.

Kernel rows (MassVector) are propagated exactly; weights are only trimmed
at serialization time, never during propagation.  Simultaneous events at
distinct sites cannot occur in continuous time; float ties are broken by
site index (documented, never expected to fire).
"""

from __future__ import annotations

import heapq
from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from . import kernels
from .chain import JumpPath
from .params import AtomicMeasure
from .rng import PURPOSE_SITE, SITE_KEY_OFFSET, Stream

MASS_TOL = 1e-12
SERIALIZATION_TRIM = 1e-15

#: a particle trajectory is a one-column jump path on Z
ParticleTrajectory = JumpPath


@dataclass
class MassVector:
    """One kernel row: nonnegative weights on a contiguous site window."""

    offset: int
    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def sites(self) -> np.ndarray:
        return np.arange(self.offset, self.offset + len(self.weights))

    def weight_at(self, site: int) -> float:
        i = site - self.offset
        if 0 <= i < len(self.weights):
            return float(self.weights[i])
        return 0.0

    def as_dict(self) -> dict[int, float]:
        return {int(s): float(w) for s, w in zip(self.sites(), self.weights)}

    def trimmed(self, threshold: float = SERIALIZATION_TRIM) -> "MassVector":
        """Serialization form: drop sub-threshold edge weights."""
        keep = np.flatnonzero(self.weights > threshold)
        if keep.size == 0:
            return MassVector(self.offset, np.zeros(1))
        lo, hi = keep[0], keep[-1]
        return MassVector(self.offset + int(lo), self.weights[lo : hi + 1].copy())


class Environment:
    """Seed-determined realization of the marked Poisson environment."""

    def __init__(self, seed: int, mu: AtomicMeasure, t_max: float):
        if not mu.is_probability():
            raise ValueError("mark law mu must be a probability measure")
        if t_max < 0:
            raise ValueError("t_max must be nonnegative")
        self.seed = int(seed)
        self.mu = mu
        self.t_max = float(t_max)
        self._mu_xs = mu.xs.copy()
        self._mu_cumw = mu.cumulative_weights()
        self._streams: dict[int, tuple[np.ndarray, np.ndarray]] = {}

    def events_for_site(self, site: int) -> tuple[np.ndarray, np.ndarray]:
        """(times, marks) of the site's events on [0, t_max], cached."""
        cached = self._streams.get(site)
        if cached is not None:
            return cached
        stream = Stream(self.seed, purpose=int(PURPOSE_SITE),
                        key=site + SITE_KEY_OFFSET)
        times = []
        marks = []
        t = 0.0
        xs, cumw = self._mu_xs, self._mu_cumw
        last = len(cumw) - 1
        while True:
            t = t + stream.exponential()
            if t > self.t_max:
                break
            u = stream.uniform()
            i = 0
            while i < last and u >= cumw[i]:
                i += 1
            times.append(t)
            marks.append(xs[i])
        entry = (np.array(times), np.array(marks))
        self._streams[site] = entry  # idempotent: any racer computes the same
        return entry


def build_environment(seed: int, mu: AtomicMeasure, t_max: float) -> Environment:
    return Environment(seed, mu, t_max)


def propagate_kernel(env: Environment, x0: int, s: float, t: float) -> MassVector:
    """Exact kernel row K_{s,t}(x0, .): unit mass at x0, split event by event."""
    if not (0.0 <= s <= t <= env.t_max):
        raise ValueError(f"window [{s}, {t}] outside [0, {env.t_max}]")
    mass = defaultdict(float)
    mass[int(x0)] = 1.0
    heap: list[tuple[float, int, int]] = []
    armed: set[int] = set()

    def arm(site: int, after: float) -> None:
        armed.add(site)
        times, _ = env.events_for_site(site)
        i = bisect_right(times, after)
        if i < len(times):
            heapq.heappush(heap, (float(times[i]), site, i))

    arm(int(x0), s)
    while heap:
        u, y, i = heapq.heappop(heap)
        if u > t:
            break
        m = mass[y]
        if m > 0.0:
            _, marks = env.events_for_site(y)
            r = float(marks[i])
            mass[y + 1] += r * m
            mass[y - 1] += (1.0 - r) * m
            mass[y] = 0.0
            for nb in (y + 1, y - 1):
                if nb not in armed:
                    arm(nb, u)
        times, _ = env.events_for_site(y)
        if i + 1 < len(times):
            heapq.heappush(heap, (float(times[i + 1]), y, i + 1))

    occupied = [site for site, w in mass.items() if w > 0.0]
    lo, hi = min(occupied), max(occupied)
    weights = np.zeros(hi - lo + 1)
    for site, w in mass.items():
        if w > 0.0:
            weights[site - lo] = w
    return MassVector(lo, weights)


def compose_check(env: Environment, x0: int, s: float, t: float, u: float) -> float:
    """Max-norm residual of the flow property K_{s,u} = K_{s,t} K_{t,u}."""
    if not (s <= t <= u):
        raise ValueError("need s <= t <= u")
    direct = propagate_kernel(env, x0, s, u).as_dict()
    left = propagate_kernel(env, x0, s, t)
    composed = defaultdict(float)
    for y, w in left.as_dict().items():
        if w == 0.0:
            continue
        for z, w2 in propagate_kernel(env, y, t, u).as_dict().items():
            composed[z] += w * w2
    residual = 0.0
    for site in set(direct) | set(composed):
        residual = max(residual, abs(direct.get(site, 0.0) - composed.get(site, 0.0)))
    return residual


def sample_particles(env: Environment, x0, s: float, t: float, rng: Stream
                     ) -> list[ParticleTrajectory]:
    """N particles moving conditionally independently in one environment.

    At each event (u, y, r) every particle at y jumps to y+1 with
    probability r, else y-1 — one fresh uniform per particle per event, in
    particle order.
    """
    if not (0.0 <= s <= t <= env.t_max):
        raise ValueError(f"window [{s}, {t}] outside [0, {env.t_max}]")
    pos = np.asarray(x0, dtype=np.int64).copy()
    n_part = pos.shape[0]
    ptr: dict[int, int] = {}
    jumps: list[list[tuple[float, int]]] = [[] for _ in range(n_part)]

    now = s
    while True:
        best_time = np.inf
        best_site = None
        for y in sorted({int(p) for p in pos}):
            times, _ = env.events_for_site(y)
            i = ptr.get(y)
            if i is None:
                i = bisect_right(times, now)
            while i < len(times) and times[i] <= now:
                i += 1
            ptr[y] = i
            if i < len(times) and times[i] < best_time:
                best_time = float(times[i])
                best_site = y
        if best_site is None or best_time > t:
            break
        times, marks = env.events_for_site(best_site)
        r = float(marks[ptr[best_site]])
        for p in range(n_part):
            if pos[p] == best_site:
                pos[p] += 1 if rng.uniform() < r else -1
                jumps[p].append((best_time, int(pos[p])))
        ptr[best_site] += 1
        now = best_time

    out = []
    for p in range(n_part):
        jt = np.array([j[0] for j in jumps[p]])
        states = np.empty(len(jumps[p]) + 1, dtype=np.int64)
        states[0] = np.asarray(x0, dtype=np.int64)[p]
        states[1:] = [j[1] for j in jumps[p]]
        out.append(JumpPath(s, jt, states, t))
    return out


def particle_endstates(seed: int, mu: AtomicMeasure, x0, t_end: float,
                       replicas: int, lo: int = 0, hi: int | None = None
                       ) -> np.ndarray:
    """Batch endpoint positions over independent environments (one/replica).

    Replica r uses environment and particle streams derived from
    (seed, replica r); chunk [lo, hi) fills rows lo..hi-1 of the full
    replica design, so any chunking yields identical values.
    """
    if not mu.is_probability():
        raise ValueError("mu must be a probability measure")
    hi = replicas if hi is None else hi
    x0 = np.asarray(x0, dtype=np.int64)
    out = np.empty((hi - lo, x0.shape[0]), dtype=np.int64)
    kernels.batch_particles_endstate(
        np.uint64(seed), lo, hi, x0, float(t_end), mu.xs.astype(float),
        mu.cumulative_weights(), out
    )
    return out
