"""Partition/split-vector combinatorics and exact generator identities."""

import numpy as np
import pytest

from stickyflow import cells
from stickyflow.cells import (
    AbsDiff,
    Coordinate,
    GapPlus,
    PwlFunction,
    Range,
    SplitVector,
    apply_generator,
    directional_gradient,
    neighbors_of_diagonal,
    partition_of,
    split_vectors,
)
from stickyflow.params import AtomicMeasure, theta_from_nu
from stickyflow.rng import Stream


def test_partition_examples():
    assert partition_of([1.0, 3.0, 1.0]).as_sets() == {
        frozenset({0, 2}), frozenset({1})}
    assert partition_of([0, 0, 0]).as_sets() == {frozenset({0, 1, 2})}
    assert partition_of([5.0]).as_sets() == {frozenset({0})}


def test_split_vectors_tied_pair():
    sv = split_vectors([1.0, 3.0, 1.0])
    assert len(sv) == 6  # 2^2 from class {0,2}, 2^1 from {1}
    assert sum(v.is_boundary for v in sv) == 2


def test_split_vectors_double_point():
    sv = split_vectors([0.0, 0.0])
    assert len(sv) == 4
    vecs = {tuple(v.vec) for v in sv if not v.is_boundary}
    assert vecs == {(1, 1), (-1, -1)}
    boundary = {tuple(v.vec) for v in sv if v.is_boundary}
    assert boundary == {(1, -1), (-1, 1)}


def test_split_vectors_all_distinct():
    sv = split_vectors([0.0, 1.0, 2.0, 3.5])
    assert len(sv) == 8
    assert not any(v.is_boundary for v in sv)


def test_split_vector_counts_random():
    s = Stream(11)
    for _ in range(50):
        n = 1 + s.below(7)
        x = np.array([float(s.below(3)) for _ in range(n)])
        sv = split_vectors(x)
        sizes = [len(c) for c in partition_of(x).classes]
        assert len(sv) == sum(2 ** m for m in sizes)
        assert sum(v.is_boundary for v in sv) == sum(2 ** m - 2 for m in sizes)


def test_split_vectors_canonical_order_is_deterministic():
    x = [2.0, 2.0, 7.0]
    first = [(v.up, v.down) for v in split_vectors(x)]
    second = [(v.up, v.down) for v in split_vectors(np.array(x))]
    assert first == second
    # class {0,1} first (least member 0), encoded by the up-set bit pattern
    assert first[0] == ((), (0, 1))
    assert first[1] == ((0,), (1,))


def test_neighbors_of_diagonal_counts():
    assert len(neighbors_of_diagonal(2)) == 2
    assert len(neighbors_of_diagonal(3)) == 6
    assert len(neighbors_of_diagonal(4)) == 14
    with pytest.raises(ValueError):
        neighbors_of_diagonal(1)


def test_gradient_absdiff_at_tie():
    f = PwlFunction.abs_diff(0, 1)
    v = SplitVector((0,), (1,), 2)
    assert directional_gradient(f, [2.0, 2.0], v) == 2.0
    assert directional_gradient(f, [2.0, 2.0], -v) == 2.0


def test_gradient_range_on_diagonal():
    f = PwlFunction.coordinate_range()
    for v in neighbors_of_diagonal(3):
        assert directional_gradient(f, [1.0, 1.0, 1.0], v) == 2.0
    # interior directions do not change the range
    whole = SplitVector((0, 1, 2), (), 3)
    assert directional_gradient(f, [1.0, 1.0, 1.0], whole) == 0.0


def test_gradient_coordinate():
    f = PwlFunction.coordinate(0)
    assert directional_gradient(f, [0.3, 0.9], np.array([1, 0])) == 1.0


def test_gap_plus_selects_its_own_cell():
    # f_v has slope 2 in direction v at the diagonal and 0 along the others
    for n in (2, 3, 4):
        x = np.zeros(n)
        for v in neighbors_of_diagonal(n):
            f_v = PwlFunction.gap_plus(v.up, v.down)
            for u in split_vectors(x):
                expected = 2.0 if (u.up, u.down) == (v.up, v.down) else 0.0
                grad = directional_gradient(f_v, x, u)
                assert grad == pytest.approx(expected, abs=1e-12)
                assert abs(grad) <= 2.0


def _analytic_gradient(f: PwlFunction, x: np.ndarray, vec: np.ndarray) -> float:
    """Independent oracle: term-by-term one-sided derivatives."""
    total = 0.0
    for w, c in f.terms:
        if isinstance(c, Coordinate):
            total += w * vec[c.i]
        elif isinstance(c, AbsDiff):
            d = x[c.i] - x[c.j]
            dv = vec[c.i] - vec[c.j]
            total += w * (abs(dv) if d == 0 else np.sign(d) * dv)
        elif isinstance(c, Range):
            idx = list(c.indices) if c.indices is not None else list(range(len(x)))
            top = max(x[i] for i in idx)
            bot = min(x[i] for i in idx)
            dmax = max(vec[i] for i in idx if x[i] == top)
            dmin = min(vec[i] for i in idx if x[i] == bot)
            total += w * (dmax - dmin)
        elif isinstance(c, GapPlus):
            gap = min(x[i] for i in c.up) - max(x[j] for j in c.down)
            # one-sided: move, then re-evaluate extremes among tied argmins
            lo = min(x[i] for i in c.up)
            hi = max(x[j] for j in c.down)
            dlo = min(vec[i] for i in c.up if x[i] == lo)
            dhi = max(vec[j] for j in c.down if x[j] == hi)
            dgap = dlo - dhi
            if gap > 0:
                total += w * dgap
            elif gap == 0:
                total += w * max(dgap, 0.0)
            # gap < 0 stays negative for small steps: derivative 0
    return float(total)


def test_gradient_matches_analytic_oracle():
    s = Stream(23)
    for _ in range(200):
        n = 2 + s.below(4)
        x = np.array([float(s.below(3)) * 0.5 for _ in range(n)])
        terms = []
        for _ in range(1 + s.below(3)):
            w = 2.0 * s.uniform() - 1.0
            kind = s.below(4)
            if kind == 0:
                terms.append((w, Coordinate(s.below(n))))
            elif kind == 1:
                i, j = s.below(n), s.below(n)
                if i != j:
                    terms.append((w, AbsDiff(i, j)))
            elif kind == 2:
                terms.append((w, Range(None)))
            else:
                cut = 1 + s.below(n - 1)
                terms.append((w, GapPlus(tuple(range(cut)),
                                         tuple(range(cut, n)))))
        if not terms:
            continue
        f = PwlFunction(tuple(terms))
        for v in split_vectors(x):
            fd = directional_gradient(f, x, v)
            exact = _analytic_gradient(f, x, v.vec.astype(float))
            assert fd == pytest.approx(exact, abs=1e-10)


def test_gradient_antisymmetric_in_interior_directions():
    s = Stream(31)
    for _ in range(50):
        n = 2 + s.below(3)
        x = np.array([float(s.below(2)) for _ in range(n)])
        f = PwlFunction((
            (1.3, Range(None)),
            (-0.7, AbsDiff(0, n - 1)),
            (0.4, Coordinate(0)),
        ))
        for v in split_vectors(x):
            if v.is_boundary:
                continue
            assert directional_gradient(f, x, v) == pytest.approx(
                -directional_gradient(f, x, -v), abs=1e-12)


def test_apply_generator_pair_examples():
    theta = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 2)
    f = PwlFunction.abs_diff(0, 1)
    assert apply_generator(f, theta, [3.0, 3.0]) == pytest.approx(4.0)
    assert apply_generator(f, theta, [0.0, 1.0]) == pytest.approx(0.0)


def test_apply_generator_range_on_diagonal():
    # sum over the six neighbors: 2 * (3 * 1/2 + 3 * 1/2) = 6
    theta = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 3)
    f = PwlFunction.coordinate_range()
    assert apply_generator(f, theta, [0.0, 0.0, 0.0]) == pytest.approx(6.0)


def test_apply_generator_needs_coverage():
    theta = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 2)
    with pytest.raises(ValueError, match="does not cover"):
        apply_generator(PwlFunction.coordinate_range(), theta,
                        [0.0, 0.0, 0.0, 0.0])


def test_generator_constant_within_cell():
    theta = theta_from_nu(AtomicMeasure.from_pairs([(0.3, 1.0)]), 0.5, 3)
    f = PwlFunction((
        (1.0, Range(None)),
        (0.5, AbsDiff(0, 1)),
    ))
    a = apply_generator(f, theta, [0.0, 0.0, 1.0])
    b = apply_generator(f, theta, [5.0, 5.0, 9.5])  # same cell pattern
    assert a == pytest.approx(b, abs=1e-12)
