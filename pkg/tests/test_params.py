"""Family algebra: moment formulas, conversions, invariants."""

import json
import math

import numpy as np
import pytest

from stickyflow.params import (
    AtomicMeasure,
    PFamily,
    ThetaFamily,
    drift_transform,
    gauge_shift,
    p_from_mu,
    p_n_from_theta,
    theta_from_nu,
    validate,
    _empty_table,
)
from stickyflow.rng import Stream


def test_p_from_mu_single_atom_half():
    p = p_from_mu(AtomicMeasure.delta(0.5), 4)
    assert p.p(1, 1) == 0.25
    for k, l, v in p.entries():
        assert v == pytest.approx(2.0 ** -(k + l), abs=0)


def test_p_from_mu_endpoints():
    p = p_from_mu(AtomicMeasure.endpoints(), 4)
    assert p.p(1, 1) == 0.0
    assert p.p(1, 0) == 0.5
    assert p.p(0, 1) == 0.5


def test_p_from_mu_two_atoms():
    mu = AtomicMeasure.from_pairs([(0.25, 1 / 3), (0.75, 2 / 3)])
    p = p_from_mu(mu, 4)
    assert p.p(1, 1) == pytest.approx(0.1875, abs=1e-15)


def test_p_from_mu_rejects_nonprobability():
    with pytest.raises(ValueError):
        p_from_mu(AtomicMeasure.delta(0.5, weight=2.0), 3)


def test_theta_from_nu_half_atom():
    th = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 4)
    assert th.theta(1, 1) == 1.0
    assert th.theta(1, 2) == 0.5
    assert th.theta(2, 1) == 0.5
    assert th.theta(2, 2) == 0.25
    assert th.theta(2, 0) == -1.0
    assert th.theta(0, 2) == -1.0
    assert th.beta == 0.0
    assert validate(th) == []


def test_theta_from_nu_zero_measure():
    th = theta_from_nu(AtomicMeasure(np.array([]), np.array([])), 0.0, 3)
    for k in range(1, 4):
        for l in range(1, 5 - k):
            assert th.theta(k, l) == 0.0


def test_theta_from_nu_scales_linearly():
    c = 3.25
    th = theta_from_nu(AtomicMeasure.delta(0.5, weight=c), 0.0, 4)
    for k in range(1, 4):
        for l in range(1, 5 - k):
            assert th.theta(k, l) == pytest.approx(c * 2.0 ** -(k + l - 2), rel=1e-15)


def test_p_n_from_theta_example_values():
    th = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 4)
    p = p_n_from_theta(th, 100)
    assert p.p(1, 1) == pytest.approx(0.1)
    assert p.p(2, 0) == pytest.approx(0.4)
    assert p.p(1, 0) == pytest.approx(0.5)
    assert p.p(1, 0) == pytest.approx(p.p(2, 0) + p.p(1, 1))
    assert validate(p) == []


def test_p_n_from_theta_zero_family():
    th = theta_from_nu(AtomicMeasure(np.array([]), np.array([])), 0.0, 3)
    p = p_n_from_theta(th, 7)
    for k, l, v in p.entries():
        assert v == 0.5 * (k == 0) + 0.5 * (l == 0)


def test_p_n_from_theta_negative_at_small_n():
    th = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 4)
    with pytest.raises(ValueError, match="raise n"):
        p_n_from_theta(th, 1)


def test_p_n_round_trip_recovers_theta():
    # sqrt(n) (p_n - trivial part) equals theta exactly for beta = 0
    th = theta_from_nu(AtomicMeasure.from_pairs([(0.3, 0.7), (0.9, 0.4)]), 0.0, 5)
    n = 10_000
    p = p_n_from_theta(th, n)
    for k, l, v in p.entries():
        lifted = math.sqrt(n) * (v - 0.5 * (k == 0) - 0.5 * (l == 0))
        assert lifted == pytest.approx(th.theta(k, l), abs=1e-10)


def test_p_n_from_theta_drifted_family_keeps_invariants():
    th = theta_from_nu(AtomicMeasure.delta(0.5), 0.8, 4)
    p = p_n_from_theta(th, 10_000)
    assert validate(p) == []
    assert p.d == pytest.approx(0.8 / math.sqrt(10_000))


def test_gauge_shift_identity_and_example():
    th = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 4)
    assert np.array_equal(
        gauge_shift(th, 0.0).values, th.values, equal_nan=True
    )
    shifted = gauge_shift(th, 1.0)
    assert shifted.theta(2, 0) == 0.0
    assert shifted.theta(1, 1) == 1.0
    assert shifted.beta == th.beta
    assert validate(shifted) == []


def test_drift_transform_flips_drift_and_involutes():
    table = _empty_table(3)
    th = theta_from_nu(AtomicMeasure.delta(0.5, 0.5), 1.0, 3)
    assert th.beta == 1.0
    tilde = drift_transform(th)
    assert tilde.beta == -1.0
    assert tilde.theta(1, 0) == 0.0
    assert tilde.theta(0, 1) == 1.0
    again = drift_transform(tilde)
    assert np.allclose(again.values, th.values, equal_nan=True)
    assert validate(tilde) == []


def test_drift_transform_beta_zero_is_identity():
    th = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 3)
    assert np.array_equal(drift_transform(th).values, th.values, equal_nan=True)


def test_validate_reports_consistency_violation():
    table = _empty_table(1)
    table[0, 0] = 1.0
    table[1, 0] = 0.5
    table[0, 1] = 0.5
    table[1, 1] = 0.3
    table[2, 0] = 0.1
    table[0, 2] = 0.2
    p = PFamily(1, table)
    kinds = {(v.kind, v.k, v.l): v for v in validate(p)}
    assert ("consistency", 1, 0) in kinds
    assert kinds[("consistency", 1, 0)].residual == pytest.approx(0.1)


def test_validate_reports_positivity():
    table = _empty_table(1)
    table[1, 1] = -1.0
    th = ThetaFamily(1, table)
    assert any(v.kind == "positivity" and (v.k, v.l) == (1, 1)
               for v in validate(th))


def test_binomial_identity_over_random_measures():
    s = Stream(77)
    for _ in range(20):
        atoms = [(s.uniform(), 0.1 + s.uniform()) for _ in range(1 + s.below(3))]
        total = sum(w for _, w in atoms)
        mu = AtomicMeasure.from_pairs([(x, w / total) for x, w in atoms])
        p = p_from_mu(mu, 8)
        for m in range(1, 9):
            acc = sum(math.comb(m, k) * p.p(k, m - k) for k in range(m + 1))
            assert acc == pytest.approx(1.0, abs=1e-12)


def test_centered_flag():
    assert AtomicMeasure.delta(0.5).is_centered()
    assert AtomicMeasure.endpoints().is_centered()
    assert not AtomicMeasure.delta(0.6).is_centered()


def test_uniform_lebesgue_moments():
    c = 2.5
    nu = AtomicMeasure.uniform_lebesgue(c)
    assert nu.total == pytest.approx(c, rel=1e-13)
    assert nu.is_centered(tol=1e-12 * c)
    th = theta_from_nu(nu, 0.0, 4)
    # beta moments of Lebesgue: theta(k:l) = c (k-1)!(l-1)!/(k+l-1)!
    assert th.theta(1, 1) == pytest.approx(c, rel=1e-12)
    assert th.theta(2, 1) == pytest.approx(c / 2, rel=1e-12)
    assert th.theta(2, 2) == pytest.approx(c / 6, rel=1e-12)


def test_json_round_trips():
    mu = AtomicMeasure.from_pairs([(0.25, 1 / 3), (0.75, 2 / 3)])
    mu2 = AtomicMeasure.from_json_dict(mu.to_json_dict())
    assert np.array_equal(mu.xs, mu2.xs) and np.array_equal(mu.ws, mu2.ws)

    th = theta_from_nu(mu, 0.25, 4)
    th2 = ThetaFamily.from_json_dict(json.loads(th.to_json()))
    assert np.allclose(th.values, th2.values, equal_nan=True)
    assert th2.beta == th.beta

    p = p_from_mu(mu, 4)
    p2 = PFamily.from_json_dict(p.to_json_dict())
    assert np.allclose(p.values, p2.values, equal_nan=True)


def test_measure_validation_errors():
    with pytest.raises(ValueError):
        AtomicMeasure(np.array([1.5]), np.array([1.0]))
    with pytest.raises(ValueError):
        AtomicMeasure(np.array([0.5]), np.array([-1.0]))


def test_entry_access_bounds():
    th = theta_from_nu(AtomicMeasure.delta(0.5), 0.0, 2)
    with pytest.raises(KeyError):
        th.theta(3, 1)
    assert th.covers(3)
    assert not th.covers(4)
