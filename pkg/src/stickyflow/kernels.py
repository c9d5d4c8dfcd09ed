"""Hot simulation loops, compiled with numba (see stickyflow._jit).

Everything here operates on plain scalars and numpy arrays so the same
source runs compiled or interpreted.  Random state is a bare uint64
threaded through the splitmix64 primitives of :mod:`stickyflow.rng`;
batch drivers derive one stream per Monte Carlo replica from
``(seed, PURPOSE_REPLICA, index)`` and write into caller-allocated output
slots, so results are independent of chunking and thread count.

Chain states are int64 lattice configurations.  One Gillespie event:
the exit rate equals the number of distinct coordinate values (each
value-class carries total rate 1 when p(0:0) = 1); a class is chosen
uniformly; the class of size m splits into k up-movers and m - k
down-movers with probability C(m,k) p(k:m-k), read from a cumulative
table validated by the caller; the up-movers are a uniform k-subset.
Subset draws are consumed only when 0 < k < m.
"""

from __future__ import annotations

import numpy as np

from ._jit import jit, jit_inline
from .rng import (
    PURPOSE_REPLICA,
    PURPOSE_SITE,
    SITE_KEY_OFFSET,
    mix64,
    next_below,
    next_double,
    next_exponential,
    stream_state,
)

_U = np.uint64
_ENV_SALT = _U(0x452821E638D01377)
_PART_SALT = _U(0xBE5466CF34E90C6C)

DEFAULT_EVENT_CAP = 10**9


# ---------------------------------------------------------------------------
# N-point chain machinery


@jit_inline
def _build_classes(x, cls_val, cls_size, cls_members):
    n = x.shape[0]
    nc = 0
    for i in range(n):
        xi = x[i]
        c = -1
        for j in range(nc):
            if cls_val[j] == xi:
                c = j
                break
        if c < 0:
            c = nc
            cls_val[c] = xi
            cls_size[c] = 0
            nc += 1
        cls_members[c, cls_size[c]] = i
        cls_size[c] += 1
    return nc


@jit_inline
def _apply_move(state, x, split_cum, nc, cls_size, cls_members, buf):
    state, c = next_below(state, nc)
    m = cls_size[c]
    state, u = next_double(state)
    k = 0
    while k < m and u >= split_cum[m, k]:
        k += 1
    for j in range(m):
        buf[j] = cls_members[c, j]
    if 0 < k < m:
        for j in range(k):
            state, r = next_below(state, m - j)
            tmp = buf[j]
            buf[j] = buf[j + r]
            buf[j + r] = tmp
    for j in range(k):
        x[buf[j]] += 1
    for j in range(k, m):
        x[buf[j]] -= 1
    return state


@jit
def chain_path(state, x0, split_cum, horizon, cap):
    """Full jump path to the horizon: (times, states, n_jumps, capped)."""
    n = x0.shape[0]
    cls_val = np.empty(n, np.int64)
    cls_size = np.empty(n, np.int64)
    cls_members = np.empty((n, n), np.int64)
    buf = np.empty(n, np.int64)

    size = 1024
    times = np.empty(size)
    states = np.empty((size + 1, n), np.int64)
    x = x0.copy()
    states[0] = x
    t = 0.0
    count = 0
    capped = False
    while True:
        nc = _build_classes(x, cls_val, cls_size, cls_members)
        state, e = next_exponential(state)
        dt = e / nc
        if t + dt > horizon:
            break
        t += dt
        state = _apply_move(state, x, split_cum, nc, cls_size, cls_members, buf)
        if count == size:
            size *= 2
            new_times = np.empty(size)
            new_states = np.empty((size + 1, n), np.int64)
            new_times[:count] = times[:count]
            new_states[: count + 1] = states[: count + 1]
            times = new_times
            states = new_states
        times[count] = t
        states[count + 1] = x
        count += 1
        if count >= cap:
            capped = True
            break
    return times, states, count, capped


@jit
def chain_grid(state, x0, split_cum, grid, cap):
    """States and exact pair-equality occupation times at grid times.

    Returns (states_grid[G, n], pair_occ[G, n(n-1)/2], capped); pairs are
    flattened in (i < j) lexicographic order.
    """
    n = x0.shape[0]
    npairs = n * (n - 1) // 2
    g_count = grid.shape[0]
    cls_val = np.empty(n, np.int64)
    cls_size = np.empty(n, np.int64)
    cls_members = np.empty((n, n), np.int64)
    buf = np.empty(n, np.int64)

    states_grid = np.zeros((g_count, n), np.int64)
    occ_grid = np.zeros((g_count, npairs))
    occ = np.zeros(npairs)
    eq = np.zeros(npairs, np.bool_)

    x = x0.copy()
    t = 0.0
    g = 0
    count = 0
    capped = False
    while g < g_count:
        nc = _build_classes(x, cls_val, cls_size, cls_members)
        state, e = next_exponential(state)
        t_next = t + e / nc
        pid = 0
        for i in range(n):
            for j in range(i + 1, n):
                eq[pid] = x[i] == x[j]
                pid += 1
        while g < g_count and grid[g] <= t_next:
            states_grid[g] = x
            for pid in range(npairs):
                occ_grid[g, pid] = occ[pid] + (grid[g] - t) * eq[pid]
            g += 1
        if g >= g_count:
            break
        for pid in range(npairs):
            if eq[pid]:
                occ[pid] += t_next - t
        t = t_next
        state = _apply_move(state, x, split_cum, nc, cls_size, cls_members, buf)
        count += 1
        if count >= cap:
            capped = True
            break
    return states_grid, occ_grid, capped


@jit
def chain_until_gap(state, x0, split_cum, threshold, cap):
    """First passage of the coordinate range to `threshold` lattice units.

    Returns (t_exit, exit_state, offdiag_time, n_events, capped) where
    offdiag_time integrates 1(not all coordinates equal) exactly.
    """
    n = x0.shape[0]
    cls_val = np.empty(n, np.int64)
    cls_size = np.empty(n, np.int64)
    cls_members = np.empty((n, n), np.int64)
    buf = np.empty(n, np.int64)

    x = x0.copy()
    t = 0.0
    offdiag = 0.0
    count = 0
    capped = False
    while True:
        nc = _build_classes(x, cls_val, cls_size, cls_members)
        state, e = next_exponential(state)
        dt = e / nc
        t += dt
        if nc > 1:
            offdiag += dt
        state = _apply_move(state, x, split_cum, nc, cls_size, cls_members, buf)
        count += 1
        lo = x[0]
        hi = x[0]
        for i in range(1, n):
            if x[i] < lo:
                lo = x[i]
            if x[i] > hi:
                hi = x[i]
        if hi - lo >= threshold:
            break
        if count >= cap:
            capped = True
            break
    return t, x, offdiag, count, capped


@jit
def batch_until_gap(seed, lo, hi, x0, split_cum, threshold, cap,
                    out_t, out_offdiag, out_states, out_events, out_capped):
    for r in range(lo, hi):
        state = stream_state(seed, PURPOSE_REPLICA, _U(r))
        t, x, offdiag, count, capped = chain_until_gap(
            state, x0, split_cum, threshold, cap
        )
        i = r - lo
        out_t[i] = t
        out_offdiag[i] = offdiag
        out_states[i] = x
        out_events[i] = count
        out_capped[i] = capped


@jit
def batch_grid(seed, lo, hi, x0, split_cum, grid, cap,
               out_states, out_occ, out_capped):
    for r in range(lo, hi):
        state = stream_state(seed, PURPOSE_REPLICA, _U(r))
        states_grid, occ_grid, capped = chain_grid(state, x0, split_cum, grid, cap)
        i = r - lo
        out_states[i] = states_grid
        out_occ[i] = occ_grid
        out_capped[i] = capped


# ---------------------------------------------------------------------------
# Half-plane pair (xi walk + sticky pair), lattice units


@jit_inline
def _pair_move(state, w, y1, y2, p11):
    """One event of the joint (walk, pair) chain; returns new state triple."""
    pair_rate = 1.0 if y1 == y2 else 2.0
    rate = 1.0 + pair_rate
    state, e = next_exponential(state)
    dt = e / rate
    state, u = next_double(state)
    if u < 1.0 / rate:
        state, u2 = next_double(state)
        w += 1 if u2 < 0.5 else -1
    elif y1 == y2:
        state, u2 = next_double(state)
        if u2 < p11:
            y1 += 1
            y2 -= 1
        elif u2 < 2.0 * p11:
            y1 -= 1
            y2 += 1
        elif u2 < 0.5 + p11:  # 2 p11 + p(2:0), p(2:0) = 1/2 - p11
            y1 += 1
            y2 += 1
        else:
            y1 -= 1
            y2 -= 1
    else:
        state, u2 = next_double(state)
        if u2 < 0.25:
            y1 += 1
        elif u2 < 0.5:
            y1 -= 1
        elif u2 < 0.75:
            y2 += 1
        else:
            y2 -= 1
    return state, dt, w, y1, y2


@jit
def strip_exit_one(state, w0, g0, p11, width, cap):
    """Exit of the half-plane pair from the strip 0 < xi < width (lattice).

    Returns (t_exit, w_exit, gap_exit, sticky_flag, capped); a start on or
    outside the sides exits immediately.
    """
    w = w0
    y1 = g0
    y2 = np.int64(0)
    t = 0.0
    if w <= 0 or w >= width:
        return t, w, np.abs(y1 - y2), y1 != y2, False
    count = 0
    while True:
        state, dt, w, y1, y2 = _pair_move(state, w, y1, y2, p11)
        t += dt
        count += 1
        if w <= 0 or w >= width:
            return t, w, np.abs(y1 - y2), y1 != y2, False
        if count >= cap:
            return t, w, np.abs(y1 - y2), y1 != y2, True


@jit
def triangle_exit_one(state, w0, g0, p11, width, slope1, slope2, cap):
    """Exit from the triangle 0 < xi < width, eta < min of the two slopes.

    `width` is the lattice base span (float), slope constraints compare the
    pair gap against sqrt(2) tan(phi) times the distance to each base
    corner.  Exit side code: 0 base span, 1 left slope, 2 right slope,
    checked in that order.
    """
    w = w0
    y1 = g0
    y2 = np.int64(0)
    t = 0.0
    count = 0
    hit_cap = False
    while True:
        gap = np.abs(y1 - y2)
        fw = float(w)
        if fw <= 0.0 or fw >= width:
            return t, w, gap, y1 != y2, 0, False
        if float(gap) >= slope1 * fw:
            return t, w, gap, y1 != y2, 1, False
        if float(gap) >= slope2 * (width - fw):
            return t, w, gap, y1 != y2, 2, False
        if hit_cap:
            return t, w, gap, y1 != y2, -1, True
        state, dt, w, y1, y2 = _pair_move(state, w, y1, y2, p11)
        t += dt
        count += 1
        if count >= cap:
            hit_cap = True


@jit
def halfplane_path(state, w0, g0, p11, horizon, cap):
    """Joint (walk, pair-gap) jump path in lattice units."""
    size = 1024
    times = np.empty(size)
    ws = np.empty(size + 1, np.int64)
    gaps = np.empty(size + 1, np.int64)
    w = w0
    y1 = g0
    y2 = np.int64(0)
    ws[0] = w
    gaps[0] = np.abs(y1 - y2)
    t = 0.0
    count = 0
    capped = False
    while True:
        state, dt, w2, z1, z2 = _pair_move(state, w, y1, y2, p11)
        if t + dt > horizon:
            break
        t += dt
        w = w2
        y1 = z1
        y2 = z2
        if count == size:
            size *= 2
            nt = np.empty(size)
            nw = np.empty(size + 1, np.int64)
            ng = np.empty(size + 1, np.int64)
            nt[:count] = times[:count]
            nw[: count + 1] = ws[: count + 1]
            ng[: count + 1] = gaps[: count + 1]
            times = nt
            ws = nw
            gaps = ng
        times[count] = t
        ws[count + 1] = w
        gaps[count + 1] = np.abs(y1 - y2)
        count += 1
        if count >= cap:
            capped = True
            break
    return times, ws, gaps, count, capped


@jit
def batch_strip_exit(seed, lo, hi, w0, g0, p11, width, cap,
                     out_w, out_gap, out_flag, out_capped):
    for r in range(lo, hi):
        state = stream_state(seed, PURPOSE_REPLICA, _U(r))
        t, w, gap, flag, capped = strip_exit_one(state, w0, g0, p11, width, cap)
        i = r - lo
        out_w[i] = w
        out_gap[i] = gap
        out_flag[i] = flag
        out_capped[i] = capped


@jit
def batch_triangle_exit(seed, lo, hi, w0, g0, p11, width, slope1, slope2, cap,
                        out_w, out_gap, out_flag, out_side, out_capped):
    for r in range(lo, hi):
        state = stream_state(seed, PURPOSE_REPLICA, _U(r))
        t, w, gap, flag, side, capped = triangle_exit_one(
            state, w0, g0, p11, width, slope1, slope2, cap
        )
        i = r - lo
        out_w[i] = w
        out_gap[i] = gap
        out_flag[i] = flag
        out_side[i] = side
        out_capped[i] = capped


# ---------------------------------------------------------------------------
# Poisson environment: lazy per-site event cursors
#
# A site's stream is the deterministic function of (env_seed, site):
# exponential(1) gaps accumulated from time 0, one mark per event drawn by
# inverse CDF over the atoms of mu.  Cursors only ever move forward.


@jit_inline
def _draw_mark(state, xs, cumw):
    state, u = next_double(state)
    i = 0
    last = cumw.shape[0] - 1
    while i < last and u >= cumw[i]:
        i += 1
    return state, xs[i]


@jit_inline
def _site_start(env_seed, site, xs, cumw, t_max):
    """Initial cursor (state, next_time, next_mark) of a site stream."""
    s = stream_state(env_seed, PURPOSE_SITE, _U(site + SITE_KEY_OFFSET))
    s, e = next_exponential(s)
    if e > t_max:
        return s, np.inf, 0.0
    s, mark = _draw_mark(s, xs, cumw)
    return s, e, mark


@jit_inline
def _site_next(s, t_event, xs, cumw, t_max):
    """Cursor after consuming the event at t_event."""
    s, e = next_exponential(s)
    t2 = t_event + e
    if t2 > t_max:
        return s, np.inf, 0.0
    s, mark = _draw_mark(s, xs, cumw)
    return s, t2, mark


@jit
def particles_endstate(env_seed, part_state, x0, t_end, xs, cumw):
    """Positions at t_end of particles moving in one shared environment.

    Each event at an occupied site moves every particle there +1 with
    probability the mark, else -1, one fresh uniform per particle in
    particle order.  Simultaneous cross-site events (float ties) resolve by
    site index.
    """
    n_part = x0.shape[0]
    pos = x0.copy()

    span = 0
    for p in range(n_part):
        a = abs(pos[p] - pos[0])
        if a > span:
            span = a
    size = 2 * (64 + 8 * (int(t_end) + 1)) + int(span) + 2
    base = int(pos[0]) - size // 2
    st_state = np.zeros(size, np.uint64)
    st_time = np.zeros(size)
    st_mark = np.zeros(size)
    st_init = np.zeros(size, np.bool_)

    t = 0.0
    while True:
        best = np.inf
        best_site = np.int64(0)
        best_idx = -1
        for p in range(n_part):
            y = pos[p]
            idx = int(y) - base
            while idx < 1 or idx >= size - 1:
                nbase = base - size
                nsize = 3 * size
                n_state = np.zeros(nsize, np.uint64)
                n_time = np.zeros(nsize)
                n_mark = np.zeros(nsize)
                n_init = np.zeros(nsize, np.bool_)
                n_state[size : 2 * size] = st_state
                n_time[size : 2 * size] = st_time
                n_mark[size : 2 * size] = st_mark
                n_init[size : 2 * size] = st_init
                base = nbase
                size = nsize
                st_state = n_state
                st_time = n_time
                st_mark = n_mark
                st_init = n_init
                idx = int(y) - base
            if not st_init[idx]:
                s, tt, mk = _site_start(env_seed, y, xs, cumw, t_end)
                st_state[idx] = s
                st_time[idx] = tt
                st_mark[idx] = mk
                st_init[idx] = True
            while st_time[idx] <= t:
                s, tt, mk = _site_next(st_state[idx], st_time[idx], xs, cumw, t_end)
                st_state[idx] = s
                st_time[idx] = tt
                st_mark[idx] = mk
            if st_time[idx] < best or (st_time[idx] == best and y < best_site):
                best = st_time[idx]
                best_site = y
                best_idx = idx
        if best > t_end:
            break
        t = best
        r = st_mark[best_idx]
        for p in range(n_part):
            if pos[p] == best_site:
                part_state, u = next_double(part_state)
                pos[p] += 1 if u < r else -1
        s, tt, mk = _site_next(st_state[best_idx], best, xs, cumw, t_end)
        st_state[best_idx] = s
        st_time[best_idx] = tt
        st_mark[best_idx] = mk
    return pos


@jit
def batch_particles_endstate(seed, lo, hi, x0, t_end, xs, cumw, out_pos):
    for r in range(lo, hi):
        rep = stream_state(seed, PURPOSE_REPLICA, _U(r))
        env_seed = mix64(rep ^ _ENV_SALT)
        part_state = mix64(rep ^ _PART_SALT)
        out_pos[r - lo] = particles_endstate(env_seed, part_state, x0, t_end, xs, cumw)


@jit
def batch_coalescence(seed, lo, hi, x0, t_end, xs, cumw, out_met, out_viol):
    """Two-particle runs checking sticking after the first meeting."""
    n_part = x0.shape[0]
    for r in range(lo, hi):
        rep = stream_state(seed, PURPOSE_REPLICA, _U(r))
        env_seed = mix64(rep ^ _ENV_SALT)
        part_state = mix64(rep ^ _PART_SALT)

        pos = x0.copy()
        size = 2 * (64 + 8 * (int(t_end) + 1)) + int(abs(pos[1] - pos[0])) + 2
        base = int(pos[0]) - size // 2
        st_state = np.zeros(size, np.uint64)
        st_time = np.zeros(size)
        st_mark = np.zeros(size)
        st_init = np.zeros(size, np.bool_)

        met = pos[0] == pos[1]
        viol = 0
        t = 0.0
        while True:
            best = np.inf
            best_site = np.int64(0)
            best_idx = -1
            for p in range(n_part):
                y = pos[p]
                idx = int(y) - base
                while idx < 1 or idx >= size - 1:
                    nbase = base - size
                    nsize = 3 * size
                    n_state = np.zeros(nsize, np.uint64)
                    n_time = np.zeros(nsize)
                    n_mark = np.zeros(nsize)
                    n_init = np.zeros(nsize, np.bool_)
                    n_state[size : 2 * size] = st_state
                    n_time[size : 2 * size] = st_time
                    n_mark[size : 2 * size] = st_mark
                    n_init[size : 2 * size] = st_init
                    base = nbase
                    size = nsize
                    st_state = n_state
                    st_time = n_time
                    st_mark = n_mark
                    st_init = n_init
                    idx = int(y) - base
                if not st_init[idx]:
                    s, tt, mk = _site_start(env_seed, y, xs, cumw, t_end)
                    st_state[idx] = s
                    st_time[idx] = tt
                    st_mark[idx] = mk
                    st_init[idx] = True
                while st_time[idx] <= t:
                    s, tt, mk = _site_next(st_state[idx], st_time[idx], xs, cumw, t_end)
                    st_state[idx] = s
                    st_time[idx] = tt
                    st_mark[idx] = mk
                if st_time[idx] < best or (st_time[idx] == best and y < best_site):
                    best = st_time[idx]
                    best_site = y
                    best_idx = idx
            if best > t_end:
                break
            t = best
            mark = st_mark[best_idx]
            for p in range(n_part):
                if pos[p] == best_site:
                    part_state, u = next_double(part_state)
                    pos[p] += 1 if u < mark else -1
            s, tt, mk = _site_next(st_state[best_idx], best, xs, cumw, t_end)
            st_state[best_idx] = s
            st_time[best_idx] = tt
            st_mark[best_idx] = mk
            if met and pos[0] != pos[1]:
                viol += 1
            if pos[0] == pos[1]:
                met = True
        i = r - lo
        out_met[i] = met
        out_viol[i] = viol
