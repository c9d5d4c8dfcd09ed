"""Monte Carlo framework and the statistical verification experiments.

Every experiment is a pure function of (seed, parameters, replicas):
replica r draws from the stream keyed (seed, PURPOSE_REPLICA, r), chunks
fill disjoint slices of preallocated arrays, and aggregation merges chunk
statistics pairwise in index order — so estimates are bit-identical for
any parallelism degree.  Replicas that hit an event cap are reported as
failures, never silently dropped; first-passage experiments fail outright
if more than 0.1% of replicas are capped.

Bound checks are one-sided with explicit 3 stderr slack; equality targets
state tolerance = MC slack plus a documented discretization allowance.
"""

from __future__ import annotations

import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from math import sqrt
from typing import Callable, Sequence

import numpy as np
from scipy.stats import chi2 as _chi2

from . import cells, kernels
from .chain import split_cumulative, sticky_pair_family
from .params import (
    AtomicMeasure,
    PFamily,
    ThetaFamily,
    p_from_mu,
    p_n_from_theta,
    theta_from_nu,
)
from .rng import PURPOSE_REPLICA, Stream

MAX_FAILED_FRACTION = 1e-3


# ---------------------------------------------------------------------------
# generic Monte Carlo runner


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    replicas: int
    master_seed: int
    failed_replicas: int = 0

    def agrees(self, target: float, tolerance: float) -> bool:
        return abs(self.mean - target) <= tolerance


def _chunk_ranges(total: int, chunks: int) -> list[tuple[int, int]]:
    chunks = max(1, min(chunks, total))
    step = -(-total // chunks)
    return [(lo, min(lo + step, total)) for lo in range(0, total, step)]


def parallel_fill(fill: Callable[[int, int], None], total: int, parallelism: int) -> None:
    """Run fill(lo, hi) over a partition of [0, total), possibly threaded."""
    ranges = _chunk_ranges(total, parallelism)
    if parallelism <= 1 or len(ranges) == 1:
        for lo, hi in ranges:
            fill(lo, hi)
        return
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        list(pool.map(lambda r: fill(*r), ranges))


def _merge_stats(a: tuple[int, float, float], b: tuple[int, float, float]):
    na, ma, sa = a
    nb, mb, sb = b
    if na == 0:
        return b
    if nb == 0:
        return a
    n = na + nb
    delta = mb - ma
    return n, ma + delta * nb / n, sa + sb + delta * delta * na * nb / n


def pairwise_stats(values: np.ndarray) -> tuple[int, float, float]:
    """(count, mean, sum of squared deviations) by pairwise merging."""
    m = len(values)
    if m == 0:
        return 0, 0.0, 0.0
    if m <= 64:
        n = 0
        mean = 0.0
        m2 = 0.0
        for v in values:
            n += 1
            delta = v - mean
            mean += delta / n
            m2 += delta * (v - mean)
        return n, mean, m2
    half = m // 2
    return _merge_stats(pairwise_stats(values[:half]), pairwise_stats(values[half:]))


def estimate_from_values(values: np.ndarray, seed: int) -> McEstimate:
    """Mean and stderr of finite entries; NaN entries count as failures."""
    values = np.asarray(values, dtype=float)
    good = values[~np.isnan(values)]
    failed = len(values) - len(good)
    if len(good) == 0:
        raise RuntimeError("all replicas failed")
    n, mean, m2 = pairwise_stats(good)
    stderr = sqrt(m2 / (n - 1)) / sqrt(n) if n > 1 else float("inf")
    return McEstimate(mean, stderr, len(values), seed, failed)


def mc_run(sampler: Callable[[int, int, int], np.ndarray], replicas: int,
           seed: int, parallelism: int = 1) -> McEstimate:
    """Estimate the mean of a per-replica sampler.

    `sampler(seed, lo, hi)` returns the values of replicas lo..hi-1 (NaN
    marks a failed replica).  Results are bit-identical for any
    parallelism because replica values depend only on (seed, index).
    """
    if replicas < 2:
        raise ValueError("need at least 2 replicas")
    values = np.empty(replicas)

    def fill(lo: int, hi: int) -> None:
        values[lo:hi] = sampler(seed, lo, hi)

    parallel_fill(fill, replicas, parallelism)
    return estimate_from_values(values, seed)


def scalar_sampler(fn: Callable[[Stream], float]) -> Callable:
    """Adapt a one-replica function of a Stream to the batch protocol."""

    def batch(seed: int, lo: int, hi: int) -> np.ndarray:
        out = np.empty(hi - lo)
        for r in range(lo, hi):
            out[r - lo] = fn(Stream(seed, purpose=int(PURPOSE_REPLICA), key=r))
        return out

    return batch


# ---------------------------------------------------------------------------
# exit-from-the-diagonal experiments


@dataclass
class ExitStats:
    """Classified first exits from an epsilon neighborhood of the diagonal."""

    epsilon: float
    n: int
    replicas: int
    master_seed: int
    cell_vectors: list  # canonical order of the diagonal's neighbor cells
    cell_counts: np.ndarray
    multi_count: int
    failed_replicas: int
    t_est: McEstimate  # rescaled exit time
    t2_est: McEstimate  # its square
    offdiag_est: McEstimate  # int 1(X not on diagonal) up to the exit
    mingap_est: McEstimate  # minimum pairwise gap at the exit

    def cell_frequencies(self) -> np.ndarray:
        classified = self.replicas - self.failed_replicas
        return self.cell_counts / classified

    def multi_value_fraction(self) -> float:
        return self.multi_count / (self.replicas - self.failed_replicas)


def exit_experiment(theta: ThetaFamily, n_dim: int, epsilon: float, n: int,
                    replicas: int, seed: int, parallelism: int = 1,
                    event_cap: int = kernels.DEFAULT_EVENT_CAP) -> ExitStats:
    """First passage of the range over epsilon, started on the diagonal.

    Classifies the exit configuration by its partition: one of the
    2^N - 2 neighbor cells of the diagonal (exactly two distinct values)
    or the multi-value event (three or more).
    """
    if n_dim < 2:
        raise ValueError("need N >= 2")
    p_n = p_n_from_theta(theta, n)
    cum = split_cumulative(p_n, n_dim)
    sqrt_n = math.sqrt(n)
    threshold = np.int64(math.ceil(epsilon * sqrt_n - 1e-9))
    x0 = np.zeros(n_dim, dtype=np.int64)

    t_out = np.empty(replicas)
    off_out = np.empty(replicas)
    states_out = np.empty((replicas, n_dim), dtype=np.int64)
    events_out = np.empty(replicas, dtype=np.int64)
    capped_out = np.empty(replicas, dtype=np.bool_)

    def fill(lo: int, hi: int) -> None:
        kernels.batch_until_gap(
            np.uint64(seed), lo, hi, x0, cum, threshold, event_cap,
            t_out[lo:hi], off_out[lo:hi], states_out[lo:hi],
            events_out[lo:hi], capped_out[lo:hi],
        )

    parallel_fill(fill, replicas, parallelism)

    failed = int(capped_out.sum())
    if failed > MAX_FAILED_FRACTION * replicas:
        raise RuntimeError(
            f"{failed}/{replicas} replicas hit the event cap {event_cap}"
        )

    neighbor_cells = cells.neighbors_of_diagonal(n_dim)
    index = {(v.up, v.down): i for i, v in enumerate(neighbor_cells)}
    counts = np.zeros(len(neighbor_cells), dtype=np.int64)
    multi = 0
    mingap = np.empty(replicas)
    for r in range(replicas):
        if capped_out[r]:
            mingap[r] = np.nan
            continue
        x = states_out[r]
        hi_v = x.max()
        lo_v = x.min()
        distinct = len(set(x.tolist()))
        if distinct == 2:
            up = tuple(int(i) for i in np.flatnonzero(x == hi_v))
            down = tuple(int(i) for i in np.flatnonzero(x == lo_v))
            counts[index[(up, down)]] += 1
        else:
            multi += 1
        gaps = [abs(int(x[i]) - int(x[j]))
                for i in range(n_dim) for j in range(i + 1, n_dim)]
        mingap[r] = min(gaps) / sqrt_n

    bad = np.where(capped_out, np.nan, 0.0)
    t_rescaled = t_out / n + bad
    return ExitStats(
        epsilon=epsilon, n=n, replicas=replicas, master_seed=seed,
        cell_vectors=neighbor_cells, cell_counts=counts, multi_count=multi,
        failed_replicas=failed,
        t_est=estimate_from_values(t_rescaled, seed),
        t2_est=estimate_from_values(t_rescaled**2, seed),
        offdiag_est=estimate_from_values(off_out / n + bad, seed),
        mingap_est=estimate_from_values(mingap, seed),
    )


@dataclass
class CheckRow:
    label: str
    estimate: float
    stderr: float
    target: float
    tolerance: float
    passed: bool


def exit_time_moments(theta_pair: float, epsilon: float) -> tuple[float, float]:
    """Exact first two moments of the two-point exit time from the diagonal.

    theta_pair is the sticky rate of the coordinate difference,
    theta = 2 theta(1:1).
    """
    e1 = epsilon**2 / 2.0 + epsilon / (2.0 * theta_pair)
    e2 = (5.0 * epsilon**4 / 12.0 + 5.0 * epsilon**3 / (6.0 * theta_pair)
          + epsilon**2 / (2.0 * theta_pair**2))
    return e1, e2


def moment_check_n2(theta11: float, epsilon: float, n: int, replicas: int,
                    seed: int, tol_t: float, tol_t2: float,
                    parallelism: int = 1) -> list[CheckRow]:
    """Compare N=2 exit-time moments against their closed forms."""
    theta = theta_from_nu(AtomicMeasure.delta(0.5, theta11), 0.0, 2)
    stats = exit_experiment(theta, 2, epsilon, n, replicas, seed, parallelism)
    target_t, target_t2 = exit_time_moments(2.0 * theta11, epsilon)
    return [
        CheckRow("E[T_eps]", stats.t_est.mean, stats.t_est.stderr,
                 target_t, tol_t,
                 abs(stats.t_est.mean - target_t) <= tol_t),
        CheckRow("E[T_eps^2]", stats.t2_est.mean, stats.t2_est.stderr,
                 target_t2, tol_t2,
                 abs(stats.t2_est.mean - target_t2) <= tol_t2),
    ]


def occupation_bound_check(theta: ThetaFamily, n_dim: int, epsilon: float,
                           n: int, replicas: int, seed: int,
                           parallelism: int = 1) -> list[CheckRow]:
    """One-sided occupation bounds at the diagonal exit (3 stderr slack).

    Checks E[int 1(X off diagonal) up to T_eps] <= N(N-1) eps^2/4 and, for
    N = 3, E[min pairwise gap at exit] <= 6 theta eps^2 with
    theta = 2 theta(1:1).
    """
    stats = exit_experiment(theta, n_dim, epsilon, n, replicas, seed, parallelism)
    bound_occ = n_dim * (n_dim - 1) * epsilon**2 / 4.0
    rows = [
        CheckRow(
            "E[offdiag occupation]", stats.offdiag_est.mean,
            stats.offdiag_est.stderr, bound_occ, 3.0 * stats.offdiag_est.stderr,
            stats.offdiag_est.mean
            <= bound_occ + 3.0 * stats.offdiag_est.stderr,
        )
    ]
    if n_dim == 3:
        bound_gap = 6.0 * (2.0 * theta.theta(1, 1)) * epsilon**2
        rows.append(
            CheckRow(
                "E[min gap at exit]", stats.mingap_est.mean,
                stats.mingap_est.stderr, bound_gap,
                3.0 * stats.mingap_est.stderr,
                stats.mingap_est.mean
                <= bound_gap + 3.0 * stats.mingap_est.stderr,
            )
        )
    return rows


# ---------------------------------------------------------------------------
# two-sample equivalence of the N-point lattice laws (Prop. 8.2 surface)


@dataclass
class ChiSquareReport:
    statistic: float
    dof: int
    p_value: float
    passed: bool
    replicas: int
    master_seed: int
    bins: dict


TAIL_POOL = 10  # integer differences beyond +-10 pool into the tails


def _pool(v: int) -> int:
    return int(np.clip(v, -(TAIL_POOL + 1), TAIL_POOL + 1))


def chi_square_two_sample(sample_a: Sequence, sample_b: Sequence,
                          significance: float = 0.001) -> ChiSquareReport:
    """Two-sample chi-square on pooled integer-valued statistics."""
    ca = Counter(sample_a)
    cb = Counter(sample_b)
    keys = sorted(set(ca) | set(cb))
    if len(keys) < 2:
        raise ValueError("degenerate binning: fewer than two occupied bins")
    na = sum(ca.values())
    nb = sum(cb.values())
    total = na + nb
    stat = 0.0
    for k in keys:
        tot_k = ca[k] + cb[k]
        for count, n_side in ((ca[k], na), (cb[k], nb)):
            expected = n_side * tot_k / total
            stat += (count - expected) ** 2 / expected
    dof = len(keys) - 1
    p = float(_chi2.sf(stat, dof))
    return ChiSquareReport(stat, dof, p, p > significance, na,
                           0, {str(k): (ca[k], cb[k]) for k in keys})


def equivalence_test_prop82(mu: AtomicMeasure, n_dim: int, t: float,
                            replicas: int, seed: int, parallelism: int = 1,
                            x0=None) -> ChiSquareReport:
    """Environment-conditioned vs direct chain law of coordinate differences.

    Side A samples N particles in per-replica environments; side B runs the
    chain with rates p(k:l) = moment(k, l) of mu.  Both start at x0
    (default: the origin); the compared statistic is
    (Y_1 - Y_2, ..., Y_1 - Y_N) at time t, tails pooled beyond +-10.
    """
    from .latticeflow import particle_endstates

    if n_dim < 1:
        raise ValueError("need N >= 1")
    root = Stream(seed)
    seed_env = root.u64()
    seed_chain = root.u64()
    x0 = (np.zeros(n_dim, dtype=np.int64) if x0 is None
          else np.asarray(x0, dtype=np.int64))

    pos_a = np.empty((replicas, n_dim), dtype=np.int64)

    def fill_a(lo: int, hi: int) -> None:
        pos_a[lo:hi] = particle_endstates(seed_env, mu, x0, t, replicas, lo, hi)

    parallel_fill(fill_a, replicas, parallelism)

    p = p_from_mu(mu, max(n_dim, 1))
    cum = split_cumulative(p, n_dim)
    grid = np.array([t])
    states = np.empty((replicas, 1, n_dim), dtype=np.int64)
    occ = np.empty((replicas, 1, n_dim * (n_dim - 1) // 2))
    capped = np.empty(replicas, dtype=np.bool_)

    def fill_b(lo: int, hi: int) -> None:
        kernels.batch_grid(np.uint64(seed_chain), lo, hi, x0, cum, grid,
                           kernels.DEFAULT_EVENT_CAP, states[lo:hi],
                           occ[lo:hi], capped[lo:hi])

    parallel_fill(fill_b, replicas, parallelism)
    if capped.any():
        raise RuntimeError("chain replicas hit the event cap")

    if n_dim == 1:
        keys_a = [_pool(v) for v in pos_a[:, 0].tolist()]
        keys_b = [_pool(v) for v in states[:, 0, 0].tolist()]
    else:
        diffs_a = pos_a[:, :1] - pos_a[:, 1:]
        diffs_b = states[:, 0, :1] - states[:, 0, 1:]
        if n_dim == 2:
            keys_a = [_pool(v) for v in diffs_a[:, 0].tolist()]
            keys_b = [_pool(v) for v in diffs_b[:, 0].tolist()]
        else:
            keys_a = [tuple(_pool(v) for v in row) for row in diffs_a.tolist()]
            keys_b = [tuple(_pool(v) for v in row) for row in diffs_b.tolist()]
    report = chi_square_two_sample(keys_a, keys_b)
    return ChiSquareReport(report.statistic, report.dof, report.p_value,
                           report.passed, replicas, seed, report.bins)


# ---------------------------------------------------------------------------
# martingale gates


@dataclass
class MartingaleReport:
    functional: str
    grid: np.ndarray
    means: np.ndarray
    stderrs: np.ndarray
    increment_z: list[float]
    passed: bool
    replicas: int
    master_seed: int


def martingale_drift_check(p: PFamily, n_dim: int, x0, functional: str,
                           grid, replicas: int, seed: int,
                           parallelism: int = 1, pair: tuple[int, int] = (0, 1),
                           drift: float | None = None,
                           value_scale: float = 1.0) -> MartingaleReport:
    """Constant-mean gate for a path functional sampled on a time grid.

    Functionals (lattice time; rescaled checks pass value_scale = 1/sqrt(n)
    and a grid in lattice units):

    - "coordinate": Y_i(t) - d t with d the family drift (pass `drift` to
      override, e.g. 0.0 for the drifted negative control);
    - "product":    (Y_i - d t)(Y_j - d t) - (1 - 4 p(1:1)) occ_ij(t);
    - "absdiff":    |Y_i - Y_j| - 4 p(1:1) occ_ij(t).

    Occupation integrals occ_ij are exact path functionals.  The gate
    passes iff every pairwise grid increment has |mean| <= 3 stderr
    (paired, per replica).
    """
    grid = np.asarray(grid, dtype=float)
    x0 = np.asarray(x0, dtype=np.int64)
    cum = split_cumulative(p, n_dim)
    i, j = pair
    pid = None
    if functional in ("product", "absdiff"):
        pid = [(a, b) for a in range(n_dim) for b in range(a + 1, n_dim)].index((i, j))

    n_pairs = n_dim * (n_dim - 1) // 2
    states = np.empty((replicas, len(grid), n_dim), dtype=np.int64)
    occ = np.empty((replicas, len(grid), n_pairs))
    capped = np.empty(replicas, dtype=np.bool_)

    def fill(lo: int, hi: int) -> None:
        kernels.batch_grid(np.uint64(seed), lo, hi, x0, cum, grid,
                           kernels.DEFAULT_EVENT_CAP, states[lo:hi],
                           occ[lo:hi], capped[lo:hi])

    parallel_fill(fill, replicas, parallelism)
    if capped.any():
        raise RuntimeError("replicas hit the event cap")

    d = p.d if drift is None else drift
    if functional == "coordinate":
        values = states[:, :, i] - d * grid[None, :]
    elif functional == "product":
        centered_i = states[:, :, i] - d * grid[None, :]
        centered_j = states[:, :, j] - d * grid[None, :]
        values = centered_i * centered_j - (1.0 - 4.0 * p.p(1, 1)) * occ[:, :, pid]
    elif functional == "absdiff":
        values = (np.abs(states[:, :, i] - states[:, :, j])
                  - 4.0 * p.p(1, 1) * occ[:, :, pid])
    else:
        raise ValueError(f"unknown functional {functional!r}")
    values = values * value_scale

    means = values.mean(axis=0)
    stderrs = values.std(axis=0, ddof=1) / sqrt(replicas)
    zs = []
    ok = True
    for a in range(len(grid)):
        for b in range(a + 1, len(grid)):
            inc = values[:, b] - values[:, a]
            se = inc.std(ddof=1) / sqrt(replicas)
            z = float(inc.mean() / se) if se > 0 else 0.0
            zs.append(z)
            if abs(z) > 3.0:
                ok = False
    return MartingaleReport(functional, grid, means, stderrs, zs, ok,
                            replicas, seed)


def sticky_occupation_estimate(theta0: float, t: float, n: int, replicas: int,
                               seed: int, parallelism: int = 1) -> McEstimate:
    """P(eta(t) = 0) for the rescaled sticky pair started together.

    Estimates the boundary occupation of sample_sticky_bm from 0 by the
    equality indicator of the pair at lattice time n*t; the continuum
    target is occupation_probability(theta0, t).
    """
    theta = sticky_pair_family(theta0)
    p_n = p_n_from_theta(theta, n)
    cum = split_cumulative(p_n, 2)
    grid = np.array([float(n) * t])
    x0 = np.zeros(2, dtype=np.int64)
    states = np.empty((replicas, 1, 2), dtype=np.int64)
    occ = np.empty((replicas, 1, 1))
    capped = np.empty(replicas, dtype=np.bool_)

    def fill(lo: int, hi: int) -> None:
        kernels.batch_grid(np.uint64(seed), lo, hi, x0, cum, grid,
                           kernels.DEFAULT_EVENT_CAP, states[lo:hi],
                           occ[lo:hi], capped[lo:hi])

    parallel_fill(fill, replicas, parallelism)
    if capped.any():
        raise RuntimeError("replicas hit the event cap")
    equal = (states[:, 0, 0] == states[:, 0, 1]).astype(float)
    return estimate_from_values(equal, seed)


# ---------------------------------------------------------------------------
# report-only diagnostics


def halfplane_image_crosscheck(theta11: float, epsilon: float, n: int,
                               replicas: int, seed: int,
                               parallelism: int = 1) -> dict:
    """Report-only: the half-plane image of a 3-point chain near the diagonal.

    A triple started at (a, a, a - eps) and stopped on leaving
    {x1, x2 > x3, 0 < range < 2 eps} maps through
    V = |X1 - X2|/sqrt(2), W = (X1 + X2 - 2 X3)/sqrt(6) to the sticky
    half-plane diffusion with data (4/3, sqrt(2) theta_pair) stopped on
    leaving the triangle of width 4 eps / sqrt(6) with 60-degree base
    angles.  Returns both sticky-exit frequency estimates; exit laws agree
    in the fine-lattice limit.
    """
    from . import halfplane
    from .chain import sticky_pair_family  # noqa: F401  (doc pointer)

    theta_pair = 2.0 * theta11
    theta = theta_from_nu(AtomicMeasure.delta(0.5, theta11), 0.0, 3)
    p_n = p_n_from_theta(theta, n)
    cum = split_cumulative(p_n, 3)
    sqrt_n = math.sqrt(n)
    g = int(round(epsilon * sqrt_n))
    x0 = np.array([0, 0, -g], dtype=np.int64)
    horizon = 40.0 * g * g  # generous: exit times concentrate near g^2

    flags = np.empty(replicas)

    def fill(lo: int, hi: int) -> None:
        for r in range(lo, hi):
            state = np.uint64(
                Stream(seed, purpose=int(PURPOSE_REPLICA), key=r).state)
            times, states, count, capped = kernels.chain_path(
                state, x0, cum, horizon, kernels.DEFAULT_EVENT_CAP)
            flags[r] = np.nan
            for k in range(1, count + 1):
                s = states[k]
                rng_span = int(s.max() - s.min())
                inside = (s[0] > s[2] and s[1] > s[2]
                          and 0 < rng_span < 2 * g)
                if not inside:
                    flags[r] = float(s[0] != s[1])
                    break

    parallel_fill(fill, replicas, parallelism)
    chain_est = estimate_from_values(flags, seed)

    spec = halfplane.HalfPlaneSpec(4.0 / 3.0, math.sqrt(2.0) * theta_pair,
                                   (2.0 * epsilon / math.sqrt(6.0), 0.0), n)
    tri = halfplane.TriangleSpec(4.0 * epsilon / math.sqrt(6.0),
                                 math.pi / 3.0, math.pi / 3.0)
    _, _, tri_flags, _, capped = halfplane.triangle_exit_batch(
        spec, tri, seed + 1, replicas)
    tri_est = estimate_from_values(
        np.where(capped, np.nan, tri_flags.astype(float)), seed + 1)
    return {"chain": chain_est, "halfplane": tri_est}


def multi_value_diagnostic(theta: ThetaFamily, n_dim: int,
                           epsilons: Sequence[float], n: int, replicas: int,
                           seed: int, parallelism: int = 1) -> list[dict]:
    """P(three or more distinct values at exit) per epsilon; never gates."""
    rows = []
    for k, eps in enumerate(epsilons):
        stats = exit_experiment(theta, n_dim, eps, n, replicas, seed + k,
                                parallelism)
        frac = stats.multi_value_fraction()
        rows.append({"epsilon": eps, "p_multi": frac, "ratio": frac / eps})
    return rows
