"""Monte Carlo framework determinism and the verification experiments."""

import math

import numpy as np
import pytest

from stickyflow import verify
from stickyflow.params import AtomicMeasure, p_from_mu, theta_from_nu
from stickyflow.verify import (
    chi_square_two_sample,
    equivalence_test_prop82,
    estimate_from_values,
    exit_experiment,
    exit_time_moments,
    martingale_drift_check,
    mc_run,
    moment_check_n2,
    multi_value_diagnostic,
    pairwise_stats,
    scalar_sampler,
)

MU_HALF = AtomicMeasure.delta(0.5)


def test_mc_run_constant_sampler():
    est = mc_run(scalar_sampler(lambda s: 1.0), 100, seed=1)
    assert est.mean == 1.0
    assert est.stderr == 0.0
    assert est.replicas == 100
    assert est.failed_replicas == 0


def test_mc_run_clt_bound():
    est = mc_run(scalar_sampler(lambda s: 1.0 if s.uniform() < 0.5 else -1.0),
                 10_000, seed=2)
    assert abs(est.mean) <= 3.5 * est.stderr
    assert est.stderr == pytest.approx(0.01, rel=0.05)


def test_mc_run_parallelism_bit_identical():
    sampler = scalar_sampler(lambda s: s.uniform() + s.exponential())
    a = mc_run(sampler, 500, seed=3, parallelism=1)
    b = mc_run(sampler, 500, seed=3, parallelism=8)
    assert a.mean == b.mean
    assert a.stderr == b.stderr


def test_mc_run_input_validation():
    with pytest.raises(ValueError):
        mc_run(scalar_sampler(lambda s: 1.0), 1, seed=1)


def test_estimate_handles_failures():
    est = estimate_from_values(np.array([1.0, np.nan, 3.0, np.nan]), 7)
    assert est.mean == 2.0
    assert est.failed_replicas == 2
    with pytest.raises(RuntimeError, match="all replicas failed"):
        estimate_from_values(np.array([np.nan, np.nan]), 7)


def test_pairwise_stats_matches_numpy():
    rng = np.random.default_rng(5)
    values = rng.normal(3.0, 2.0, size=1777)
    n, mean, m2 = pairwise_stats(values)
    assert n == 1777
    assert mean == pytest.approx(values.mean(), rel=1e-12)
    assert m2 / (n - 1) == pytest.approx(values.var(ddof=1), rel=1e-12)


def test_chi_square_same_law_passes_and_shifted_fails():
    rng = np.random.default_rng(11)
    a = rng.integers(-5, 6, size=20_000)
    b = rng.integers(-5, 6, size=20_000)
    assert chi_square_two_sample(a.tolist(), b.tolist()).passed
    c = (rng.integers(-5, 6, size=20_000) + 1)
    assert not chi_square_two_sample(a.tolist(), c.tolist()).passed


def test_chi_square_degenerate_binning():
    with pytest.raises(ValueError, match="degenerate"):
        chi_square_two_sample([0] * 10, [0] * 10)


def test_exit_time_moment_formulas():
    # theta = 2, eps = 0.2: the closed forms evaluate to 0.07 and 0.009
    e1, e2 = exit_time_moments(2.0, 0.2)
    assert e1 == pytest.approx(0.07, abs=1e-15)
    assert e2 == pytest.approx(0.009, abs=1e-15)


def test_exit_experiment_pair_symmetry_and_partition():
    theta = theta_from_nu(MU_HALF, 0.0, 2)
    stats = exit_experiment(theta, 2, 0.2, 400, 2000, seed=21)
    assert stats.cell_counts.sum() + stats.multi_count == (
        stats.replicas - stats.failed_replicas)
    assert stats.multi_count == 0  # N=2 cannot produce three values
    freqs = stats.cell_frequencies()
    se = math.sqrt(0.25 / 2000)
    assert abs(freqs[0] - 0.5) <= 4 * se
    assert abs(freqs[1] - 0.5) <= 4 * se


def test_exit_experiment_one_sided_measure():
    # nu = delta_1: theta(1:2) = 0, so one-up/two-down exits never happen
    theta = theta_from_nu(AtomicMeasure.delta(1.0), 0.0, 3)
    stats = exit_experiment(theta, 3, 0.1, 400, 800, seed=22)
    for v, count in zip(stats.cell_vectors, stats.cell_counts):
        if v.k == 1 and v.l == 2:
            assert count == 0
        if v.k == 2 and v.l == 1:
            assert count > 0


def test_moment_check_small_scale():
    rows = moment_check_n2(1.0, 0.2, 2500, 4000, seed=23,
                           tol_t=0.01, tol_t2=0.002)
    assert all(r.passed for r in rows)
    assert rows[0].target == pytest.approx(0.07)
    assert rows[1].target == pytest.approx(0.009)


def test_equivalence_same_walk_n1():
    # N=1: both samplers are the same simple random walk
    report = equivalence_test_prop82(MU_HALF, 1, 4.0, 4000, seed=24)
    assert report.passed


def test_equivalence_coalescing_endpoints():
    # started apart, the pair coalesces: the difference law grows an atom
    # at 0 and both samplers must agree on it
    report = equivalence_test_prop82(AtomicMeasure.endpoints(), 2, 3.0,
                                     4000, seed=25, x0=(0, 1))
    assert report.passed
    assert report.bins["0"][0] > 1000  # the coalesced atom is heavy


def test_martingale_coordinate_with_wrong_drift_fails():
    p = p_from_mu(AtomicMeasure.delta(0.6), 1)
    good = martingale_drift_check(p, 1, (0,), "coordinate", (0.5, 1.0, 2.0),
                                  4000, seed=26)
    bad = martingale_drift_check(p, 1, (0,), "coordinate", (0.5, 1.0, 2.0),
                                 4000, seed=26, drift=0.0)
    assert good.passed
    assert not bad.passed


def test_martingale_product_functional():
    p = p_from_mu(AtomicMeasure.from_pairs([(0.25, 1 / 3), (0.75, 2 / 3)]), 2)
    report = martingale_drift_check(p, 2, (0, 0), "product", (0.5, 1.0, 2.0),
                                    6000, seed=27)
    assert report.passed


def test_martingale_unknown_functional():
    p = p_from_mu(MU_HALF, 2)
    with pytest.raises(ValueError, match="unknown functional"):
        martingale_drift_check(p, 2, (0, 0), "nope", (1.0,), 10, seed=1)


def test_multi_value_diagnostic_trivial_cases():
    theta2 = theta_from_nu(MU_HALF, 0.0, 2)
    rows = multi_value_diagnostic(theta2, 2, [0.2], 400, 500, seed=28)
    assert rows[0]["p_multi"] == 0.0  # two coordinates only
    zero = theta_from_nu(AtomicMeasure(np.array([]), np.array([])), 0.0, 3)
    # theta = 0 never leaves the diagonal: every replica hits the cap, and
    # the experiment reports that rather than hanging
    with pytest.raises(RuntimeError, match="event cap"):
        exit_experiment(zero, 3, 0.2, 100, 10, seed=29, event_cap=2000)


def test_chain_marginal_consistency_prop61():
    # two coordinates of the 3-point chain follow the 2-point chain law
    from stickyflow import kernels
    from stickyflow.chain import split_cumulative

    mu = AtomicMeasure.from_pairs([(0.25, 1 / 3), (0.75, 2 / 3)])
    t = 4.0
    grid = np.array([t])

    def endpoint_diffs(n_dim: int, seed: int, replicas: int) -> list[int]:
        p = p_from_mu(mu, n_dim)
        cum = split_cumulative(p, n_dim)
        states = np.empty((replicas, 1, n_dim), dtype=np.int64)
        occ = np.empty((replicas, 1, n_dim * (n_dim - 1) // 2))
        capped = np.empty(replicas, dtype=np.bool_)
        kernels.batch_grid(np.uint64(seed), 0, replicas,
                           np.zeros(n_dim, dtype=np.int64), cum, grid,
                           10**9, states, occ, capped)
        assert not capped.any()
        return (states[:, 0, 0] - states[:, 0, 1]).tolist()

    three = endpoint_diffs(3, 41, 8000)
    two = endpoint_diffs(2, 42, 8000)
    assert chi_square_two_sample(three, two).passed


def test_particle_marginal_consistency():
    # dropping a particle from a 2-particle run leaves the 1-particle law
    from stickyflow.latticeflow import particle_endstates

    mu = AtomicMeasure.from_pairs([(0.25, 1 / 3), (0.75, 2 / 3)])
    pair = particle_endstates(51, mu, [0, 0], 4.0, 6000)[:, 0]
    single = particle_endstates(52, mu, [0], 4.0, 6000)[:, 0]
    assert chi_square_two_sample(pair.tolist(), single.tolist()).passed


def test_halfplane_image_crosscheck_agrees():
    # report-only diagnostic: the 3-point chain near the diagonal and its
    # half-plane image produce the same sticky-exit frequency
    out = verify.halfplane_image_crosscheck(1.0, 0.25, 2500, 3000, 777)
    c, h = out["chain"], out["halfplane"]
    z = (c.mean - h.mean) / math.sqrt(c.stderr**2 + h.stderr**2)
    assert abs(z) <= 4.0


def test_exit_experiment_chunking_bit_identical():
    theta = theta_from_nu(MU_HALF, 0.0, 2)
    a = exit_experiment(theta, 2, 0.2, 400, 600, seed=30, parallelism=1)
    b = exit_experiment(theta, 2, 0.2, 400, 600, seed=30, parallelism=4)
    assert a.t_est.mean == b.t_est.mean
    assert np.array_equal(a.cell_counts, b.cell_counts)
