"""Atomic measures on [0, 1] and the splitting-rate families they induce.

A measure ``mu`` (a probability) drives the lattice flow; a finite measure
``nu`` parameterizes the continuum family through the moment formula
``theta(k:l) = sum_i w_i x_i^(k-1) (1-x_i)^(l-1)``.  Families are stored as
dense ``(k, l)`` tables over ``k + l <= n_max + 1`` together with their
drift, and every conversion here preserves the defining recurrences
exactly up to float rounding (tolerance 1e-12, entries are O(1) sums of at
most a few dozen products).

Entries with ``k + l > N + 1`` are never read by an ``N``-dimensional
simulation; simulation entry points require ``n_max >= N``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import comb
from typing import Iterator, NamedTuple

import numpy as np

CONSISTENCY_TOL = 1e-12

#: nodes of the documented quadrature rule for continuous densities
GAUSS_LEGENDRE_NODES = 32


class Violation(NamedTuple):
    kind: str  # "consistency" | "positivity" | "range" | "normalization" | "binomial"
    k: int
    l: int
    residual: float


@dataclass(frozen=True)
class AtomicMeasure:
    """Finite nonnegative measure on [0, 1] given by atoms."""

    xs: np.ndarray
    ws: np.ndarray

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        ws = np.asarray(self.ws, dtype=float)
        if xs.shape != ws.shape or xs.ndim != 1:
            raise ValueError("atoms need matching 1-d location/weight arrays")
        if xs.size and (xs.min() < 0.0 or xs.max() > 1.0):
            raise ValueError("atom locations must lie in [0, 1]")
        if ws.size and ws.min() < 0.0:
            raise ValueError("atom weights must be nonnegative")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ws", ws)

    @classmethod
    def from_pairs(cls, pairs) -> "AtomicMeasure":
        pairs = list(pairs)
        xs = np.array([p[0] for p in pairs], dtype=float)
        ws = np.array([p[1] for p in pairs], dtype=float)
        return cls(xs, ws)

    @classmethod
    def delta(cls, x: float, weight: float = 1.0) -> "AtomicMeasure":
        return cls(np.array([x]), np.array([weight]))

    @classmethod
    def endpoints(cls) -> "AtomicMeasure":
        """(delta_0 + delta_1) / 2 — coalescing-flow splitting law."""
        return cls(np.array([0.0, 1.0]), np.array([0.5, 0.5]))

    @classmethod
    def uniform_lebesgue(cls, c: float = 1.0, nodes: int = GAUSS_LEGENDRE_NODES) -> "AtomicMeasure":
        """c x Lebesgue on [0, 1] as a Gauss-Legendre atom set."""
        t, w = np.polynomial.legendre.leggauss(nodes)
        return cls((t + 1.0) / 2.0, c * w / 2.0)

    @property
    def total(self) -> float:
        return float(self.ws.sum())

    @property
    def mean(self) -> float:
        return float((self.xs * self.ws).sum())

    def is_probability(self, tol: float = CONSISTENCY_TOL) -> bool:
        return abs(self.total - 1.0) <= tol

    def is_centered(self, tol: float = CONSISTENCY_TOL) -> bool:
        return abs(self.mean - self.total / 2.0) <= tol

    def moment(self, k: int, l: int) -> float:
        """integral of x^k (1-x)^l against the measure."""
        return float((self.ws * self.xs**k * (1.0 - self.xs) ** l).sum())

    def cumulative_weights(self) -> np.ndarray:
        """Normalized inverse-CDF table for sampling atom indices."""
        c = np.cumsum(self.ws)
        if c[-1] <= 0.0:
            raise ValueError("cannot sample from a zero measure")
        return c / c[-1]

    def to_json_dict(self) -> dict:
        return {"atoms": [[float(x), float(w)] for x, w in zip(self.xs, self.ws)]}

    @classmethod
    def from_json_dict(cls, d: dict) -> "AtomicMeasure":
        return cls.from_pairs(d["atoms"])


def _empty_table(n_max: int) -> np.ndarray:
    size = n_max + 2
    t = np.full((size, size), np.nan)
    for k in range(size):
        for l in range(size - k):
            if k + l <= n_max + 1:
                t[k, l] = 0.0
    return t


class _Family:
    """Shared table mechanics of ThetaFamily and PFamily."""

    def __init__(self, n_max: int, values: np.ndarray):
        if n_max < 1:
            raise ValueError("n_max must be >= 1")
        self.n_max = int(n_max)
        self.values = np.asarray(values, dtype=float)

    def _get(self, k: int, l: int) -> float:
        if k < 0 or l < 0 or k + l > self.n_max + 1:
            raise KeyError(f"entry ({k}:{l}) not stored (n_max={self.n_max})")
        return float(self.values[k, l])

    def entries(self) -> Iterator[tuple[int, int, float]]:
        for k in range(self.n_max + 2):
            for l in range(self.n_max + 2 - k):
                yield k, l, float(self.values[k, l])

    def _values_json(self) -> dict:
        return {f"{k},{l}": v for k, l, v in self.entries()}

    @staticmethod
    def _values_from_json(n_max: int, d: dict) -> np.ndarray:
        table = _empty_table(n_max)
        for key, v in d.items():
            k, l = (int(s) for s in key.split(","))
            table[k, l] = float(v)
        return table


class ThetaFamily(_Family):
    """Splitting rates theta(k:l) of the continuum family, plus drift."""

    def theta(self, k: int, l: int) -> float:
        return self._get(k, l)

    @property
    def beta(self) -> float:
        return self._get(1, 0) - self._get(0, 1)

    def covers(self, n: int) -> bool:
        """All entries with k + l <= n are stored."""
        return self.n_max + 1 >= n

    def to_json_dict(self) -> dict:
        return {"kind": "theta", "n_max": self.n_max, "beta": self.beta,
                "values": self._values_json()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "ThetaFamily":
        n_max = int(d["n_max"])
        return cls(n_max, cls._values_from_json(n_max, d["values"]))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


class PFamily(_Family):
    """Jump rates p(k:l) of the lattice chain generator."""

    def p(self, k: int, l: int) -> float:
        return self._get(k, l)

    @property
    def d(self) -> float:
        return self._get(1, 0) - self._get(0, 1)

    def covers(self, n: int) -> bool:
        return self.n_max + 1 >= n

    def to_json_dict(self) -> dict:
        return {"kind": "p", "n_max": self.n_max, "d": self.d,
                "values": self._values_json()}

    @classmethod
    def from_json_dict(cls, d: dict) -> "PFamily":
        n_max = int(d["n_max"])
        return cls(n_max, cls._values_from_json(n_max, d["values"]))

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2)


def p_from_mu(mu: AtomicMeasure, n_max: int) -> PFamily:
    """Jump rates of the N-point motion in a mu-environment.

    p(k:l) is the k-th/l-th joint moment of a mark: the probability that,
    at one splitting event, k tagged particles go up and l go down.
    """
    if not mu.is_probability():
        raise ValueError(f"mu must be a probability measure, total={mu.total}")
    table = _empty_table(n_max)
    for k in range(n_max + 2):
        for l in range(n_max + 2 - k):
            table[k, l] = mu.moment(k, l)
    return PFamily(n_max, table)


def theta_from_nu(nu: AtomicMeasure, beta: float, n_max: int) -> ThetaFamily:
    """Splitting-rate family with theta(k:l) the (k-1, l-1) moment of nu.

    Boundary entries follow the gauge convention theta(0:1) = 0,
    theta(1:0) = beta, completed downward by the consistency recurrence.
    """
    if nu.ws.size and nu.ws.min() < 0.0:
        raise ValueError("nu must have nonnegative weights")
    table = _empty_table(n_max)
    for k in range(1, n_max + 1):
        for l in range(1, n_max + 2 - k):
            table[k, l] = nu.moment(k - 1, l - 1)
    table[0, 1] = 0.0
    table[1, 0] = beta
    table[0, 0] = beta  # theta(0:0) = theta(1:0) + theta(0:1)
    for k in range(1, n_max + 1):
        table[k + 1, 0] = table[k, 0] - table[k, 1]
    for l in range(1, n_max + 1):
        table[0, l + 1] = table[0, l] - table[1, l]
    return ThetaFamily(n_max, table)


def p_n_from_theta(theta: ThetaFamily, n: int) -> PFamily:
    """Lattice rates at resolution n approximating a theta family.

    Applies p_n(k:l) = 1(k=0)/2 + 1(l=0)/2 + theta(k:l)/sqrt(n) after
    shifting theta to the symmetric gauge (theta(0:0) = 0), so that
    p_n(0:0) = 1 holds for drifted families too; gauge shifts leave the
    generator unchanged.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sym = gauge_shift(theta, -theta.theta(0, 0) / 2.0)
    inv_sqrt_n = 1.0 / np.sqrt(float(n))
    table = _empty_table(theta.n_max)
    negative = []
    for k, l, v in sym.entries():
        entry = 0.5 * (k == 0) + 0.5 * (l == 0) + inv_sqrt_n * v
        table[k, l] = entry
        if entry < 0.0:
            negative.append((k, l, entry))
    if negative:
        worst = min(negative, key=lambda t: t[2])
        raise ValueError(
            f"p_n has negative entries at n={n} (e.g. p({worst[0]}:{worst[1]})="
            f"{worst[2]:.6g}); raise n"
        )
    return PFamily(theta.n_max, table)


def gauge_shift(theta: ThetaFamily, alpha: float) -> ThetaFamily:
    """Boundary-rate shift (leaves the generator unchanged)."""
    table = theta.values.copy()
    for k, l, v in theta.entries():
        table[k, l] = v + alpha * (k == 0) + alpha * (l == 0)
    return ThetaFamily(theta.n_max, table)


def drift_transform(theta: ThetaFamily) -> ThetaFamily:
    """Send a drift-beta family to the drift minus-beta parameterization.

    The boundary entries move by -beta on the all-up side and +beta on the
    all-down side, which is what the drift identity
    2 beta f(ones) + A~ f = A f and the involution property force; it
    flips the family drift to -beta.
    """
    beta = theta.beta
    table = theta.values.copy()
    for k, l, v in theta.entries():
        table[k, l] = v + beta * (k == 0) - beta * (l == 0)
    return ThetaFamily(theta.n_max, table)


def validate(family) -> list[Violation]:
    """Every violated family invariant, with its (k, l) and residual."""
    out: list[Violation] = []
    n_max = family.n_max
    is_p = isinstance(family, PFamily)
    get = family.p if is_p else family.theta

    if is_p:
        r = get(0, 0) - 1.0
        if abs(r) > CONSISTENCY_TOL:
            out.append(Violation("normalization", 0, 0, r))
    for k in range(n_max + 1):
        for l in range(n_max + 1 - k):
            r = get(k, l) - get(k + 1, l) - get(k, l + 1)
            if abs(r) > CONSISTENCY_TOL:
                out.append(Violation("consistency", k, l, r))
    for k in range(n_max + 2):
        for l in range(n_max + 2 - k):
            v = get(k, l)
            if is_p:
                if v < -CONSISTENCY_TOL or v > 1.0 + CONSISTENCY_TOL:
                    out.append(Violation("range", k, l, v))
            elif k >= 1 and l >= 1 and v < 0.0:
                out.append(Violation("positivity", k, l, v))
    if is_p:
        for m in range(1, n_max + 1):
            r = sum(comb(m, k) * get(k, m - k) for k in range(m + 1)) - 1.0
            if abs(r) > CONSISTENCY_TOL:
                out.append(Violation("binomial", m, 0, r))
    return out
