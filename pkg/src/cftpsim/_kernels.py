"""Compiled inner loops for the coupling, CFTP and series samplers.

Everything here is numba-compiled over primitive arrays; the public API
wraps these in ``fk``, ``ising`` and ``coupon``.  The RNG routines are
bit-for-bit twins of the pure-Python ones in ``cftpsim.rng`` (pinned by
tests), so Python-level reference implementations and compiled runs can
share seeds and produce identical streams.

Graph connectivity is consumed in CSR incidence form: ``inc_ptr`` of
length n+1, with ``inc_edge[k]``/``inc_other[k]`` giving the edge index
and opposite endpoint of each incident slot.

Pivotality modes (fixed per run, never per step):
  0  generic graph: BFS over occupied edges with early exit
  1  every edge pivotal (trees)
  2  pivotality irrelevant (q == 1, both thresholds equal p)

Step cap semantics: kernels return status 1 instead of hanging; the
wrappers convert that into a structured error carrying partial state.
"""

from __future__ import annotations

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_UMAX = np.uint64(0xFFFFFFFFFFFFFFFF)
_INV53 = 2.0 ** -53
_ONE = np.uint64(1)

MODE_GENERIC = 0
MODE_ALL_PIVOTAL = 1
MODE_SKIP_PIVOTAL = 2

STATUS_OK = 0
STATUS_CAP = 1


@njit(cache=True, nogil=True, inline="always")
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


@njit(cache=True, nogil=True, inline="always")
def _next_u64(state):
    state = state + GOLDEN
    return state, _mix64(state)


@njit(cache=True, nogil=True, inline="always")
def _next_f64(state):
    state, z = _next_u64(state)
    return state, np.float64(z >> np.uint64(11)) * _INV53


@njit(cache=True, nogil=True, inline="always")
def _next_index(state, m):
    # exact uniformity: reject the top partial block of 2**64
    rem = (_UMAX % m + _ONE) % m
    lim = _UMAX - rem
    while True:
        state, z = _next_u64(state)
        if z <= lim:
            return state, np.int64(z % m)


@njit(cache=True, nogil=True)
def _bfs_pivotal(occ, e, inc_ptr, inc_edge, inc_other, edge_u, edge_v,
                 visited, queue, stamp):
    """True iff the endpoints of e are not connected in occ minus e."""
    src = edge_u[e]
    dst = edge_v[e]
    stamp += 1
    visited[src] = stamp
    queue[0] = src
    head = 0
    tail = 1
    while head < tail:
        v = queue[head]
        head += 1
        for k in range(inc_ptr[v], inc_ptr[v + 1]):
            f = inc_edge[k]
            if f == e or occ[f] == 0:
                continue
            w = inc_other[k]
            if visited[w] == stamp:
                continue
            if w == dst:
                return False, stamp
            visited[w] = stamp
            queue[tail] = w
            tail += 1
    return True, stamp


@njit(cache=True, nogil=True)
def _fk_pair_update(bottom, top, e, u, p, p_tilde, mode,
                    inc_ptr, inc_edge, inc_other, edge_u, edge_v,
                    visited, queue, stamp, n_diff):
    """One shared-noise heat-bath update of the ordered pair; returns
    (n_diff, stamp) with n_diff the number of edges where the chains differ."""
    if mode == MODE_SKIP_PIVOTAL:
        tb = p
        tt = p
    elif mode == MODE_ALL_PIVOTAL:
        tb = p_tilde
        tt = p_tilde
    else:
        # pivotal for top implies pivotal for bottom, so test bottom first
        pb, stamp = _bfs_pivotal(bottom, e, inc_ptr, inc_edge, inc_other,
                                 edge_u, edge_v, visited, queue, stamp)
        if not pb:
            tb = p
            tt = p
        else:
            tb = p_tilde
            pt, stamp = _bfs_pivotal(top, e, inc_ptr, inc_edge, inc_other,
                                     edge_u, edge_v, visited, queue, stamp)
            tt = p_tilde if pt else p
    nb = np.uint8(1) if u <= tb else np.uint8(0)
    nt = np.uint8(1) if u <= tt else np.uint8(0)
    was_diff = bottom[e] != top[e]
    bottom[e] = nb
    top[e] = nt
    if was_diff:
        if nb == nt:
            n_diff -= 1
    elif nb != nt:
        n_diff += 1
    return n_diff, stamp


@njit(cache=True, nogil=True)
def _fk_single_update(occ, e, u, p, p_tilde, mode,
                      inc_ptr, inc_edge, inc_other, edge_u, edge_v,
                      visited, queue, stamp):
    """One heat-bath update of a single chain; returns (occupancy delta, stamp)."""
    if mode == MODE_SKIP_PIVOTAL:
        thr = p
    elif mode == MODE_ALL_PIVOTAL:
        thr = p_tilde
    else:
        piv, stamp = _bfs_pivotal(occ, e, inc_ptr, inc_edge, inc_other,
                                  edge_u, edge_v, visited, queue, stamp)
        thr = p_tilde if piv else p
    new = np.uint8(1) if u <= thr else np.uint8(0)
    delta = np.int64(new) - np.int64(occ[e])
    occ[e] = new
    return delta, stamp


@njit(cache=True, nogil=True)
def fk_coupling_run(inc_ptr, inc_edge, inc_other, edge_u, edge_v,
                    p, p_tilde, mode, state, step_cap):
    """Coupled run from (empty, full) until coalescence.

    Returns (status, T, W, bottom, top, seen, state).
    """
    n = inc_ptr.shape[0] - 1
    m = edge_u.shape[0]
    um = np.uint64(m)
    bottom = np.zeros(m, np.uint8)
    top = np.ones(m, np.uint8)
    seen = np.zeros(m, np.uint8)
    visited = np.zeros(n, np.int64)
    queue = np.empty(n, np.int64)
    stamp = np.int64(0)
    n_seen = 0
    n_diff = m
    W = np.int64(0)
    t = np.int64(0)
    while n_diff > 0:
        if t >= step_cap:
            return STATUS_CAP, t, W, bottom, top, seen, state
        state, e = _next_index(state, um)
        state, u = _next_f64(state)
        t += 1
        if seen[e] == 0:
            seen[e] = 1
            n_seen += 1
            if n_seen == m:
                W = t
        n_diff, stamp = _fk_pair_update(bottom, top, e, u, p, p_tilde, mode,
                                        inc_ptr, inc_edge, inc_other,
                                        edge_u, edge_v, visited, queue,
                                        stamp, n_diff)
    return STATUS_OK, t, W, bottom, top, seen, state


@njit(cache=True, nogil=True)
def fk_cftp_run(inc_ptr, inc_edge, inc_other, edge_u, edge_v,
                p, p_tilde, mode, state, depth_cap):
    """Coupling from the past with doubling restart depths 1, 2, 4, ...

    The noise log is indexed so that entry s holds the map applied at time
    -s; restarts reuse the stored entries, so the backward composition is
    consistent across restarts.  Returns
    (status, config_at_time_0, backward_depth, total_steps_applied, state).
    """
    n = inc_ptr.shape[0] - 1
    m = edge_u.shape[0]
    um = np.uint64(m)
    cap = 64
    e_log = np.empty(cap, np.int64)
    u_log = np.empty(cap, np.float64)
    filled = 0
    bottom = np.zeros(m, np.uint8)
    top = np.ones(m, np.uint8)
    visited = np.zeros(n, np.int64)
    queue = np.empty(n, np.int64)
    stamp = np.int64(0)
    total = np.int64(0)
    depth = np.int64(1)
    while depth <= depth_cap:
        if depth > cap:
            while cap < depth:
                cap *= 2
            e_new = np.empty(cap, np.int64)
            u_new = np.empty(cap, np.float64)
            e_new[:filled] = e_log[:filled]
            u_new[:filled] = u_log[:filled]
            e_log = e_new
            u_log = u_new
        while filled < depth:
            state, e = _next_index(state, um)
            state, u = _next_f64(state)
            e_log[filled] = e
            u_log[filled] = u
            filled += 1
        for i in range(m):
            bottom[i] = 0
            top[i] = 1
        n_diff = m
        for s in range(depth - 1, -1, -1):
            total += 1
            if n_diff == 0:
                # chains already merged: evolve one copy to time 0
                _, stamp = _fk_single_update(bottom, e_log[s], u_log[s],
                                             p, p_tilde, mode,
                                             inc_ptr, inc_edge, inc_other,
                                             edge_u, edge_v,
                                             visited, queue, stamp)
                top[e_log[s]] = bottom[e_log[s]]
            else:
                n_diff, stamp = _fk_pair_update(bottom, top, e_log[s],
                                                u_log[s], p, p_tilde, mode,
                                                inc_ptr, inc_edge, inc_other,
                                                edge_u, edge_v, visited,
                                                queue, stamp, n_diff)
        if n_diff == 0:
            return STATUS_OK, bottom, depth, total, state
        depth *= 2
    return STATUS_CAP, bottom, depth, total, state


@njit(cache=True, nogil=True)
def fk_series_run(inc_ptr, inc_edge, inc_other, edge_u, edge_v,
                  p, p_tilde, mode, occ, length, state):
    """Evolve a single chain, recording the occupied-edge count after
    every update.  Mutates occ in place; returns (series, state)."""
    n = inc_ptr.shape[0] - 1
    m = edge_u.shape[0]
    um = np.uint64(m)
    visited = np.zeros(n, np.int64)
    queue = np.empty(n, np.int64)
    stamp = np.int64(0)
    series = np.empty(length, np.int64)
    n_occ = np.int64(0)
    for i in range(m):
        n_occ += occ[i]
    for i in range(length):
        state, e = _next_index(state, um)
        state, u = _next_f64(state)
        delta, stamp = _fk_single_update(occ, e, u, p, p_tilde, mode,
                                         inc_ptr, inc_edge, inc_other,
                                         edge_u, edge_v, visited, queue,
                                         stamp)
        n_occ += delta
        series[i] = n_occ
    return series, state


@njit(cache=True, nogil=True)
def coupon_run(m, state):
    """Coupon collector time over m items.

    Consumes one (index, uniform) pair per step, the same per-step noise
    layout as the coupling kernels, so a seed-matched FK run draws the
    identical item sequence.  Returns (W, state).
    """
    um = np.uint64(m)
    seen = np.zeros(m, np.uint8)
    n_seen = 0
    t = np.int64(0)
    while n_seen < m:
        state, e = _next_index(state, um)
        state, _u = _next_f64(state)
        t += 1
        if seen[e] == 0:
            seen[e] = 1
            n_seen += 1
    return t, state


@njit(cache=True, nogil=True)
def harmonic_sums(m):
    """(H_m, H_m^(2)) by Kahan-compensated summation from smallest terms."""
    s1 = 0.0
    c1 = 0.0
    s2 = 0.0
    c2 = 0.0
    for i in range(m, 0, -1):
        x = 1.0 / i
        y = x - c1
        t = s1 + y
        c1 = (t - s1) - y
        s1 = t
        x2 = x * x
        y2 = x2 - c2
        t2 = s2 + y2
        c2 = (t2 - s2) - y2
        s2 = t2
    return s1, s2


# ---------------------------------------------------------------------------
# Ising kernels: spins live in {-1, +1} (int8); thr_table[S + max_deg] is the
# probability of setting the spin to +1 given local magnetization S.
# ---------------------------------------------------------------------------


@njit(cache=True, nogil=True, inline="always")
def _local_field(spins, v, inc_ptr, inc_other):
    s = np.int64(0)
    for k in range(inc_ptr[v], inc_ptr[v + 1]):
        s += spins[inc_other[k]]
    return s


@njit(cache=True, nogil=True)
def ising_coupling_run(inc_ptr, inc_other, thr_table, max_deg, state, step_cap):
    """Coupled run from (all -1, all +1) until coalescence.

    Returns (status, T, W, bottom, top, seen, state).
    """
    n = inc_ptr.shape[0] - 1
    un = np.uint64(n)
    bottom = np.full(n, -1, np.int8)
    top = np.full(n, 1, np.int8)
    seen = np.zeros(n, np.uint8)
    n_seen = 0
    n_diff = n
    W = np.int64(0)
    t = np.int64(0)
    while n_diff > 0:
        if t >= step_cap:
            return STATUS_CAP, t, W, bottom, top, seen, state
        state, v = _next_index(state, un)
        state, u = _next_f64(state)
        t += 1
        if seen[v] == 0:
            seen[v] = 1
            n_seen += 1
            if n_seen == n:
                W = t
        tb = thr_table[_local_field(bottom, v, inc_ptr, inc_other) + max_deg]
        tt = thr_table[_local_field(top, v, inc_ptr, inc_other) + max_deg]
        nb = np.int8(1) if u <= tb else np.int8(-1)
        nt = np.int8(1) if u <= tt else np.int8(-1)
        was_diff = bottom[v] != top[v]
        bottom[v] = nb
        top[v] = nt
        if was_diff:
            if nb == nt:
                n_diff -= 1
        elif nb != nt:
            n_diff += 1
    return STATUS_OK, t, W, bottom, top, seen, state


@njit(cache=True, nogil=True)
def ising_cftp_run(inc_ptr, inc_other, thr_table, max_deg, state, depth_cap):
    """CFTP for the single-spin heat-bath map, doubling restart depths.

    Returns (status, spins_at_time_0, backward_depth, total_steps_applied,
    state).
    """
    n = inc_ptr.shape[0] - 1
    un = np.uint64(n)
    cap = 64
    v_log = np.empty(cap, np.int64)
    u_log = np.empty(cap, np.float64)
    filled = 0
    bottom = np.full(n, -1, np.int8)
    top = np.full(n, 1, np.int8)
    total = np.int64(0)
    depth = np.int64(1)
    while depth <= depth_cap:
        if depth > cap:
            while cap < depth:
                cap *= 2
            v_new = np.empty(cap, np.int64)
            u_new = np.empty(cap, np.float64)
            v_new[:filled] = v_log[:filled]
            u_new[:filled] = u_log[:filled]
            v_log = v_new
            u_log = u_new
        while filled < depth:
            state, v = _next_index(state, un)
            state, u = _next_f64(state)
            v_log[filled] = v
            u_log[filled] = u
            filled += 1
        for i in range(n):
            bottom[i] = -1
            top[i] = 1
        n_diff = n
        for s in range(depth - 1, -1, -1):
            total += 1
            v = v_log[s]
            u = u_log[s]
            tb = thr_table[_local_field(bottom, v, inc_ptr, inc_other) + max_deg]
            nb = np.int8(1) if u <= tb else np.int8(-1)
            if n_diff == 0:
                bottom[v] = nb
                top[v] = nb
            else:
                tt = thr_table[_local_field(top, v, inc_ptr, inc_other) + max_deg]
                nt = np.int8(1) if u <= tt else np.int8(-1)
                was_diff = bottom[v] != top[v]
                bottom[v] = nb
                top[v] = nt
                if was_diff:
                    if nb == nt:
                        n_diff -= 1
                elif nb != nt:
                    n_diff += 1
        if n_diff == 0:
            return STATUS_OK, bottom, depth, total, state
        depth *= 2
    return STATUS_CAP, bottom, depth, total, state


@njit(cache=True, nogil=True)
def ising_series_run(inc_ptr, inc_other, thr_table, max_deg, spins, length, state):
    """Evolve a single spin chain, recording total magnetization after
    every update.  Mutates spins in place; returns (series, state)."""
    n = inc_ptr.shape[0] - 1
    un = np.uint64(n)
    series = np.empty(length, np.int64)
    mag = np.int64(0)
    for i in range(n):
        mag += spins[i]
    for i in range(length):
        state, v = _next_index(state, un)
        state, u = _next_f64(state)
        thr = thr_table[_local_field(spins, v, inc_ptr, inc_other) + max_deg]
        new = np.int8(1) if u <= thr else np.int8(-1)
        mag += np.int64(new) - np.int64(spins[v])
        spins[v] = new
        series[i] = mag
    return series, state
