"""Configuration combinatorics and the piecewise-linear generator.

A point of R^N determines a partition of the coordinate indices by exact
value equality; each class of size m contributes 2^m split vectors (one per
ordered way of sending a sub-group up and the rest down).  The generator of
the coupled family acts on a small closed set of piecewise-linear test
functions by summing rate-weighted one-sided directional derivatives over
those vectors.  Everything here is pure and exact: ties are exact float
equality (callers snap first if they need tolerance), and gradients are
computed by a finite difference that lands strictly inside the adjacent
cell, which is exact for functions linear on cells.

Split-vector enumeration is Theta(sum over classes of 2^|class|); intended
for N <= 12.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .params import ThetaFamily


@dataclass(frozen=True)
class Partition:
    """Disjoint index classes covering {0..N-1}, ordered by least member."""

    classes: tuple[tuple[int, ...], ...]

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    def as_sets(self) -> set[frozenset[int]]:
        return {frozenset(c) for c in self.classes}


@dataclass(frozen=True)
class SplitVector:
    """Direction v moving indices in `up` by +1 and in `down` by -1."""

    up: tuple[int, ...]
    down: tuple[int, ...]
    n: int

    @property
    def k(self) -> int:
        return len(self.up)

    @property
    def l(self) -> int:
        return len(self.down)

    @property
    def is_boundary(self) -> bool:
        """True iff the vector leaves the current cell (both parts nonempty)."""
        return bool(self.up) and bool(self.down)

    @property
    def vec(self) -> np.ndarray:
        v = np.zeros(self.n, dtype=np.int8)
        v[list(self.up)] = 1
        v[list(self.down)] = -1
        return v

    def __neg__(self) -> "SplitVector":
        return SplitVector(self.down, self.up, self.n)


def partition_of(x: Sequence[float]) -> Partition:
    """Group indices by exact coordinate equality."""
    x = np.asarray(x)
    classes: list[list[int]] = []
    values: list[float] = []
    for i, xi in enumerate(x):
        for c, v in zip(classes, values):
            if xi == v:
                c.append(i)
                break
        else:
            classes.append([i])
            values.append(xi)
    return Partition(tuple(tuple(c) for c in classes))


def _class_splits(members: Sequence[int], n: int) -> Iterable[SplitVector]:
    # canonical order: binary encoding of the up-set over ascending members
    m = len(members)
    for code in range(1 << m):
        up = tuple(members[b] for b in range(m) if code >> b & 1)
        down = tuple(members[b] for b in range(m) if not code >> b & 1)
        yield SplitVector(up, down, n)


def split_vectors(x: Sequence[float]) -> list[SplitVector]:
    """All split vectors at x, in canonical deterministic order.

    Interior vectors (one part empty) keep the configuration in its cell;
    boundary vectors move it into a neighboring cell.
    """
    x = np.asarray(x)
    n = len(x)
    out: list[SplitVector] = []
    for cls in partition_of(x).classes:
        out.extend(_class_splits(cls, n))
    return out


def neighbors_of_diagonal(n: int) -> list[SplitVector]:
    """The 2^N - 2 directions from the diagonal into its neighboring cells."""
    if n < 2:
        raise ValueError("diagonal neighbors need dimension >= 2")
    return [v for v in split_vectors(np.zeros(n)) if v.is_boundary]


@dataclass(frozen=True)
class Coordinate:
    i: int

    def evaluate(self, x: np.ndarray) -> float:
        return float(x[self.i])


@dataclass(frozen=True)
class AbsDiff:
    i: int
    j: int

    def evaluate(self, x: np.ndarray) -> float:
        return abs(float(x[self.i]) - float(x[self.j]))


@dataclass(frozen=True)
class Range:
    """max - min over an index subset (None means all indices)."""

    indices: tuple[int, ...] | None = None

    def evaluate(self, x: np.ndarray) -> float:
        sub = x if self.indices is None else x[list(self.indices)]
        return float(sub.max() - sub.min())


@dataclass(frozen=True)
class GapPlus:
    """min over i in up, j in down of (x_i - x_j)^+.

    Vanishes off the closure of the cell selected by (up, down); equals
    (min over up - max over down)^+, hence linear on every cell.
    """

    up: tuple[int, ...]
    down: tuple[int, ...]

    def evaluate(self, x: np.ndarray) -> float:
        gap = float(x[list(self.up)].min() - x[list(self.down)].max())
        return gap if gap > 0.0 else 0.0


Combinator = Coordinate | AbsDiff | Range | GapPlus


@dataclass(frozen=True)
class PwlFunction:
    """Weighted combination of the closed combinator family."""

    terms: tuple[tuple[float, Combinator], ...]

    def __call__(self, x: Sequence[float]) -> float:
        x = np.asarray(x, dtype=float)
        return sum(w * c.evaluate(x) for w, c in self.terms)

    @classmethod
    def coordinate(cls, i: int) -> "PwlFunction":
        return cls(((1.0, Coordinate(i)),))

    @classmethod
    def abs_diff(cls, i: int, j: int) -> "PwlFunction":
        return cls(((1.0, AbsDiff(i, j)),))

    @classmethod
    def coordinate_range(cls, indices: tuple[int, ...] | None = None) -> "PwlFunction":
        return cls(((1.0, Range(indices)),))

    @classmethod
    def gap_plus(cls, up: Sequence[int], down: Sequence[int]) -> "PwlFunction":
        return cls(((1.0, GapPlus(tuple(up), tuple(down))),))

    def at_ones(self, n: int) -> float:
        """Value at the all-ones vector (the drift-identity constant)."""
        return self(np.ones(n))


def directional_gradient(f: PwlFunction, x: Sequence[float], v) -> float:
    """Exact one-sided derivative of f at x in direction v.

    Uses step eps0 = (minimum positive pairwise gap)/4, or 1 when x is
    fully tied: entries of v lie in {-1,0,1} so gaps change at rate <= 2
    per unit step, and x + eps0*v stays strictly inside the cell entered,
    where f is linear.
    """
    x = np.asarray(x, dtype=float)
    vec = v.vec if isinstance(v, SplitVector) else np.asarray(v)
    diffs = np.abs(x[:, None] - x[None, :])
    positive = diffs[diffs > 0.0]
    eps0 = positive.min() / 4.0 if positive.size else 1.0
    return (f(x + eps0 * vec) - f(x)) / eps0


def apply_generator(f: PwlFunction, theta: ThetaFamily, x: Sequence[float]) -> float:
    """Generator value: sum over split vectors of theta(k:l) grad_v f(x)."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if not theta.covers(n):
        raise ValueError(
            f"theta family with n_max={theta.n_max} does not cover k+l <= {n}"
        )
    return sum(
        theta.theta(v.k, v.l) * directional_gradient(f, x, v)
        for v in split_vectors(x)
    )
