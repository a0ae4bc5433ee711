"""Numba kernels for exact continuous-time simulation.

State layout shared by all kernels:
  occ  int8[n+1]   occupancies of sites 1..n-1; slots 0 and n are unused and
                   stay 0 (reservoir densities enter through the rates only)
  W    int64[n]    signed cumulative current through bonds 0..n-1

Events are sampled in O(1) per event by partitioning active channels into
six classes with constant per-channel rates: interior forward, interior
backward, and the four reservoir channels. Swap-lists track the active
interior bonds. Waiting times consume one exponential draw; the channel
choice one uniform draw; a draw that overshoots the next observation time is
discarded, which is distribution-exact by memorylessness.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _build_lists(occ, n, fwd_list, fwd_pos, bwd_list, bwd_pos):
    nf = 0
    nb = 0
    for b in range(1, n - 1):
        if occ[b] == 1 and occ[b + 1] == 0:
            fwd_list[nf] = b
            fwd_pos[b] = nf
            nf += 1
        elif occ[b] == 0 and occ[b + 1] == 1:
            bwd_list[nb] = b
            bwd_pos[b] = nb
            nb += 1
    return nf, nb


@njit(cache=True, inline="always")
def _refresh_bond(occ, b, fwd_list, fwd_pos, bwd_list, bwd_pos, nf, nb):
    f_act = occ[b] == 1 and occ[b + 1] == 0
    b_act = occ[b] == 0 and occ[b + 1] == 1
    if f_act:
        if fwd_pos[b] < 0:
            fwd_list[nf] = b
            fwd_pos[b] = nf
            nf += 1
    elif fwd_pos[b] >= 0:
        k = fwd_pos[b]
        last = fwd_list[nf - 1]
        fwd_list[k] = last
        fwd_pos[last] = k
        fwd_pos[b] = -1
        nf -= 1
    if b_act:
        if bwd_pos[b] < 0:
            bwd_list[nb] = b
            bwd_pos[b] = nb
            nb += 1
    elif bwd_pos[b] >= 0:
        k = bwd_pos[b]
        last = bwd_list[nb - 1]
        bwd_list[k] = last
        bwd_pos[last] = k
        bwd_pos[b] = -1
        nb -= 1
    return nf, nb


@njit(cache=True)
def run_segment(occ, W, t0, t_end, e_field, alpha, beta, gen, record, ev_time, ev_bond, ev_dir):
    """Advance the state to t_end, optionally logging (time, bond, direction).

    Returns (reached_time, events_written, buffer_full). When the log buffer
    fills, the state is left mid-trajectory at the returned time and the call
    can be resumed with a fresh buffer.
    """
    n = W.shape[0]
    speed = float(n) * float(n)
    p = 1.0 + e_field / n
    rf = speed * p
    rb = speed
    rlc = speed * p * alpha
    rlr = speed * (1.0 - alpha)
    rrr = speed * p * (1.0 - beta)
    rrc = speed * beta

    fwd_list = np.empty(n, dtype=np.int32)
    fwd_pos = np.full(n, -1, dtype=np.int32)
    bwd_list = np.empty(n, dtype=np.int32)
    bwd_pos = np.full(n, -1, dtype=np.int32)
    nf, nb = _build_lists(occ, n, fwd_list, fwd_pos, bwd_list, bwd_pos)

    cap = ev_time.shape[0]
    count = 0
    t = t0
    while True:
        left = rlc if occ[1] == 0 else rlr
        right = rrr if occ[n - 1] == 1 else rrc
        total = nf * rf + nb * rb + left + right
        wait = gen.exponential(1.0) / total
        if t + wait >= t_end:
            return t_end, count, False
        t += wait
        u = gen.random() * total
        blk = nf * rf
        if u < blk:
            k = int(u / rf)
            if k >= nf:
                k = nf - 1
            bond = fwd_list[k]
            direction = 1
        else:
            u -= blk
            blk = nb * rb
            if u < blk:
                k = int(u / rb)
                if k >= nb:
                    k = nb - 1
                bond = bwd_list[k]
                direction = -1
            else:
                u -= blk
                if u < left:
                    bond = 0
                    direction = 1 if occ[1] == 0 else -1
                else:
                    bond = n - 1
                    direction = 1 if occ[n - 1] == 1 else -1
        if bond == 0:
            occ[1] = 1 - occ[1]
        elif bond == n - 1:
            occ[n - 1] = 1 - occ[n - 1]
        else:
            occ[bond] = 1 - occ[bond]
            occ[bond + 1] = 1 - occ[bond + 1]
        W[bond] += direction
        lo = bond - 1 if bond - 1 > 1 else 1
        hi = bond + 1 if bond + 1 < n - 2 else n - 2
        for b in range(lo, hi + 1):
            nf, nb = _refresh_bond(occ, b, fwd_list, fwd_pos, bwd_list, bwd_pos, nf, nb)
        if record:
            ev_time[count] = t
            ev_bond[count] = bond
            ev_dir[count] = direction
            count += 1
            if count == cap:
                return t, count, True


@njit(cache=True, inline="always")
def _site_terms(occ, W, S0, j, n, alpha, beta, e_field, gn, egn):
    """Current integrand pieces at site j: weight, jump intensity, drive."""
    a = alpha if j == 0 else float(occ[j])
    b = beta if j == n - 1 else float(occ[j + 1])
    xi = np.exp(gn * (W[j] - S0[j]))
    h = egn * a * (1.0 - b) + b * (1.0 - a)
    drive = e_field * n * (b - a)
    return xi, xi * xi * h, xi * drive


_EMPTY_F8 = np.empty(0, dtype=np.float64)
_EMPTY_I8 = np.empty(0, dtype=np.int64)
_EMPTY_I1 = np.empty(0, dtype=np.int8)


@njit(cache=True)
def run_instrumented(
    occ, W, S0, t0, obs, e_field, alpha, beta, gn, gen,
    out_eta, out_W, out_qv, out_drift, out_minexp,
    record=False, ev_time=_EMPTY_F8, ev_bond=_EMPTY_I8, ev_dir=_EMPTY_I1,
):
    """Advance while accumulating exact pathwise integrals, emitting at obs times.

    Between events all integrands are constant, so the integrals
        qv[j]    = int_0^t weight(j)^2 * intensity_j  ds
        drift[j] = int_0^t weight(j)   * drive_j      ds
    are computed without quadrature error via lazy per-site flushes (an event
    at bond b only changes the integrands at sites b-1, b, b+1). minexp
    tracks the running minimum of the integer exponent W - S0 per site, from
    which the running maximum of the weight is exact. gn is the per-site
    tilt (negative); the weight at site j is exp(gn*(W[j]-S0[j])).

    With record=True events are logged into the ev_* buffers; the return
    value is the event count, or -1 if the buffers filled before the final
    observation (callers retry with larger buffers; reruns are bit-identical
    for the same generator key).
    """
    n = W.shape[0]
    speed = float(n) * float(n)
    p = 1.0 + e_field / n
    egn = np.exp(gn)
    rf = speed * p
    rb = speed
    rlc = speed * p * alpha
    rlr = speed * (1.0 - alpha)
    rrr = speed * p * (1.0 - beta)
    rrc = speed * beta

    fwd_list = np.empty(n, dtype=np.int32)
    fwd_pos = np.full(n, -1, dtype=np.int32)
    bwd_list = np.empty(n, dtype=np.int32)
    bwd_pos = np.full(n, -1, dtype=np.int32)
    nf, nb = _build_lists(occ, n, fwd_list, fwd_pos, bwd_list, bwd_pos)

    acc_qv = np.zeros(n)
    acc_dr = np.zeros(n)
    cur_qv = np.empty(n)
    cur_dr = np.empty(n)
    last = np.full(n, t0)
    minexp = np.empty(n, dtype=np.int64)
    for j in range(n):
        _, q, d = _site_terms(occ, W, S0, j, n, alpha, beta, e_field, gn, egn)
        cur_qv[j] = q
        cur_dr[j] = d
        minexp[j] = W[j] - S0[j]

    n_obs = obs.shape[0]
    cap = ev_time.shape[0]
    count = 0
    t = t0
    m = 0
    while m < n_obs:
        t_next = obs[m]
        left = rlc if occ[1] == 0 else rlr
        right = rrr if occ[n - 1] == 1 else rrc
        total = nf * rf + nb * rb + left + right
        wait = gen.exponential(1.0) / total
        if t + wait >= t_next:
            for j in range(n):
                dt = t_next - last[j]
                acc_qv[j] += cur_qv[j] * dt
                acc_dr[j] += cur_dr[j] * dt
                last[j] = t_next
                out_qv[m, j] = acc_qv[j]
                out_drift[m, j] = acc_dr[j]
                out_W[m, j] = W[j]
                out_minexp[m, j] = minexp[j]
            for j in range(n + 1):
                out_eta[m, j] = occ[j]
            t = t_next
            m += 1
            continue
        t += wait
        u = gen.random() * total
        blk = nf * rf
        if u < blk:
            k = int(u / rf)
            if k >= nf:
                k = nf - 1
            bond = fwd_list[k]
            direction = 1
        else:
            u -= blk
            blk = nb * rb
            if u < blk:
                k = int(u / rb)
                if k >= nb:
                    k = nb - 1
                bond = bwd_list[k]
                direction = -1
            else:
                u -= blk
                if u < left:
                    bond = 0
                    direction = 1 if occ[1] == 0 else -1
                else:
                    bond = n - 1
                    direction = 1 if occ[n - 1] == 1 else -1
        jlo = bond - 1 if bond >= 1 else 0
        jhi = bond + 1 if bond + 1 <= n - 1 else n - 1
        for j in range(jlo, jhi + 1):
            dt = t - last[j]
            acc_qv[j] += cur_qv[j] * dt
            acc_dr[j] += cur_dr[j] * dt
            last[j] = t
        if bond == 0:
            occ[1] = 1 - occ[1]
        elif bond == n - 1:
            occ[n - 1] = 1 - occ[n - 1]
        else:
            occ[bond] = 1 - occ[bond]
            occ[bond + 1] = 1 - occ[bond + 1]
        W[bond] += direction
        e = W[bond] - S0[bond]
        if e < minexp[bond]:
            minexp[bond] = e
        lo = bond - 1 if bond - 1 > 1 else 1
        hi = bond + 1 if bond + 1 < n - 2 else n - 2
        for b in range(lo, hi + 1):
            nf, nb = _refresh_bond(occ, b, fwd_list, fwd_pos, bwd_list, bwd_pos, nf, nb)
        for j in range(jlo, jhi + 1):
            _, q, d = _site_terms(occ, W, S0, j, n, alpha, beta, e_field, gn, egn)
            cur_qv[j] = q
            cur_dr[j] = d
        if record:
            if count == cap:
                return -1
            ev_time[count] = t
            ev_bond[count] = bond
            ev_dir[count] = direction
            count += 1
    return count
