"""Pure-Python reference kernels.

Selected by :mod:`transcap._core` when the compiled extension is missing or
``TRANSCAP_PURE=1``.  Every routine here has a twin in ``_kernels.pyx`` with
the same signature and the same arithmetic order, so both backends produce
bit-identical traces for a given seed.
"""

import heapq
import math
from collections import deque

import numpy as np

from ._rng import FLOW_STREAM, uniform, uniform_array

ARR_FLUID = 0
ARR_BERNOULLI = 1
ARR_SATURATED = 2
ARR_EXPLICIT = 3

MAC_ALOHA = 0
MAC_CENTRALIZED = 1

EV_BACKOFF = 0
EV_SERVE = 1
EV_END = 2

_COIN_BLOCK = 4096


def minplus_convolve(a, table):
    n = a.shape[0]
    m = a[:, None] + table
    s_idx = np.arange(n)
    m = np.where(s_idx[:, None] <= s_idx[None, :], m, np.inf)
    return m.min(axis=0)


def minplus_compose(a, b):
    n = a.shape[0]
    out = np.zeros((n, n))
    idx = np.arange(n)
    for s in range(n):
        # rows u = s..n-1, columns t
        tmp = a[s, s:, None] + b[s:, :]
        tmp = np.where(idx[s:, None] <= idx[None, :], tmp, np.inf)
        out[s, s:] = tmp.min(axis=0)[s:]
    return out


def _arrivals(f, t, arr_mode, lam, acc, explicit, seed):
    if arr_mode == ARR_FLUID:
        acc[f] += lam
        k = int(acc[f])
        acc[f] -= k
        return k
    if arr_mode == ARR_BERNOULLI:
        return 1 if uniform(seed, FLOW_STREAM + f, t) < lam else 0
    if arr_mode == ARR_EXPLICIT:
        return int(explicit[t])
    return 0


def slotted_run(
    mac, adj_ptr, adj_idx, route_links, code_flow, code_last, sat_code,
    flow_first, p_link, sched_ptr, sched_links, loop_start,
    C, skip, arr_mode, lam, explicit, T, seed, cap, checkpoints,
    qlen, in_cum, out_cum, delivered, opp, empty_opp,
    ck_delivered, ck_opp, ck_empty,
):
    L = sat_code.shape[0]
    F = flow_first.shape[0]
    record = qlen.shape[0] > 0
    n_ck = checkpoints.shape[0]
    adj = [adj_idx[adj_ptr[l]:adj_ptr[l + 1]].tolist() for l in range(L)]
    route = route_links.tolist()
    cflow = code_flow.tolist()
    clast = code_last.tolist()
    sat = sat_code.tolist()
    first = flow_first.tolist()
    plink = p_link.tolist()
    K = sched_ptr.shape[0] - 1
    queues = [deque() for _ in range(L)]
    inc = [0] * L
    outc = [0] * L
    dlv = [0] * F
    acc = [0.0] * F
    attempt = [False] * L
    total = 0
    max_total = 0
    stop = -1
    n_opp = 0
    n_empty = 0
    ck = 0
    coins = None
    block_start = 0

    for t in range(1, T + 1):
        for f in range(F):
            k = _arrivals(f, t, arr_mode, lam, acc, explicit, seed)
            if k:
                code = first[f]
                l = route[code]
                queues[l].extend([code] * k)
                inc[l] += k
                total += k

        slot_opp = 0
        slot_empty = 0
        pending = []
        if mac == MAC_ALOHA:
            if coins is None or t - block_start >= _COIN_BLOCK:
                block_start = t
                ctr = np.arange(t, t + _COIN_BLOCK, dtype=np.uint64)
                coins = [uniform_array(seed, l, ctr).tolist() for l in range(L)]
            j = t - block_start
            for l in range(L):
                if skip and not queues[l] and sat[l] < 0:
                    attempt[l] = False
                else:
                    attempt[l] = coins[l][j] < plink[l]
            active = []
            for l in range(L):
                if attempt[l]:
                    ok = True
                    for m in adj[l]:
                        if attempt[m]:
                            ok = False
                            break
                    if ok:
                        active.append(l)
        else:
            i = t - 1
            pos = i if i < K else loop_start + (i - loop_start) % (K - loop_start)
            active = sched_links[sched_ptr[pos]:sched_ptr[pos + 1]].tolist()

        for l in active:
            slot_opp += 1
            served = 0
            q = queues[l]
            for _ in range(C):
                if q:
                    code = q.popleft()
                    total -= 1
                elif sat[l] >= 0:
                    code = sat[l]
                    inc[l] += 1
                else:
                    break
                outc[l] += 1
                served += 1
                if clast[code]:
                    dlv[cflow[code]] += 1
                else:
                    pending.append(code + 1)
            if served == 0:
                slot_empty += 1
        for code in pending:
            l = route[code]
            queues[l].append(code)
            inc[l] += 1
            total += 1

        n_opp += slot_opp
        n_empty += slot_empty
        if record:
            for l in range(L):
                qlen[t, l] = len(queues[l])
                in_cum[t, l] = inc[l]
                out_cum[t, l] = outc[l]
            for f in range(F):
                delivered[t, f] = dlv[f]
            opp[t] = slot_opp
            empty_opp[t] = slot_empty
        while ck < n_ck and checkpoints[ck] == t:
            for f in range(F):
                ck_delivered[ck, f] = dlv[f]
            ck_opp[ck] = n_opp
            ck_empty[ck] = n_empty
            ck += 1
        # backlog is measured at the end of the slot
        if total > max_total:
            max_total = total
        if cap > 0 and total >= cap:
            stop = t
            break

    return max_total, stop


def csma_run(
    adj_ptr, adj_idx, route_links, code_flow, code_last, sat_code, flow_first,
    nu, mu, C, skip, arr_mode, lam, explicit, T, seed, cap, checkpoints,
    init_active, track_occ,
    qlen, in_cum, out_cum, delivered, opp, empty_opp,
    ck_delivered, ck_opp, ck_empty,
):
    L = sat_code.shape[0]
    F = flow_first.shape[0]
    record = qlen.shape[0] > 0
    n_ck = checkpoints.shape[0]
    adj = [adj_idx[adj_ptr[l]:adj_ptr[l + 1]].tolist() for l in range(L)]
    route = route_links.tolist()
    cflow = code_flow.tolist()
    clast = code_last.tolist()
    sat = sat_code.tolist()
    first = flow_first.tolist()
    inv_c = 1.0 / C

    queues = [deque() for _ in range(L)]
    inc = [0] * L
    outc = [0] * L
    dlv = [0] * F
    acc = [0.0] * F
    active = [False] * L
    counting = [False] * L
    nb = [0] * L
    resid = [0.0] * L
    expiry = [0.0] * L
    next_srv = [0.0] * L
    ver = [0] * L
    draws = [0] * L
    heap = []
    seq = 0
    now = 0.0
    mask = 0
    occ = {}
    total = 0
    max_total = 0
    stop = -1
    n_opp = 0
    n_empty = 0
    slot_opp = 0
    slot_empty = 0
    ck = 0

    def draw_exp(l, rate):
        u = uniform(seed, l, draws[l])
        draws[l] += 1
        return -math.log(1.0 - u) / rate

    def has_data(l):
        return len(queues[l]) > 0 or sat[l] >= 0

    def refresh(l):
        nonlocal seq
        c = (not active[l]) and nb[l] == 0 and ((not skip) or has_data(l))
        if c and not counting[l]:
            expiry[l] = now + resid[l]
            ver[l] += 1
            counting[l] = True
            heapq.heappush(heap, (expiry[l], seq, EV_BACKOFF, l, ver[l]))
            seq += 1
        elif counting[l] and not c:
            resid[l] = expiry[l] - now
            ver[l] += 1
            counting[l] = False

    def activate(l):
        nonlocal seq, mask
        active[l] = True
        counting[l] = False
        ver[l] += 1
        end_t = now + draw_exp(l, mu)
        next_srv[l] = now + inv_c
        heapq.heappush(heap, (end_t, seq, EV_END, l, ver[l]))
        seq += 1
        heapq.heappush(heap, (next_srv[l], seq, EV_SERVE, l, ver[l]))
        seq += 1
        if track_occ:
            mask |= 1 << l
        for m in adj[l]:
            nb[m] += 1
            refresh(m)

    def deactivate(l):
        nonlocal mask
        active[l] = False
        ver[l] += 1
        resid[l] = draw_exp(l, nu)
        if track_occ:
            mask &= ~(1 << l)
        for m in adj[l]:
            nb[m] -= 1
            refresh(m)
        refresh(l)

    def advance(to):
        nonlocal now
        if track_occ and to > now:
            occ[mask] = occ.get(mask, 0.0) + (to - now)
        now = to

    for l in range(L):
        if init_active[l]:
            activate(l)
    for l in range(L):
        if not active[l]:
            resid[l] = draw_exp(l, nu)
    for l in range(L):
        refresh(l)

    for t in range(1, T + 1):
        # exogenous arrivals for slot t land at time t - 1
        for f in range(F):
            k = _arrivals(f, t, arr_mode, lam, acc, explicit, seed)
            if k:
                code = first[f]
                l = route[code]
                queues[l].extend([code] * k)
                inc[l] += k
                total += k
                if skip:
                    refresh(l)

        slot_opp = 0
        slot_empty = 0
        tf = float(t)
        while heap and heap[0][0] <= tf:
            when, _, kind, l, v = heapq.heappop(heap)
            if v != ver[l]:
                continue
            advance(when)
            if kind == EV_BACKOFF:
                counting[l] = False
                activate(l)
            elif kind == EV_END:
                deactivate(l)
            else:
                slot_opp += 1
                q = queues[l]
                code = -1
                if q:
                    code = q.popleft()
                    total -= 1
                elif sat[l] >= 0:
                    code = sat[l]
                    inc[l] += 1
                else:
                    slot_empty += 1
                if code >= 0:
                    outc[l] += 1
                    if clast[code]:
                        dlv[cflow[code]] += 1
                    else:
                        m = route[code + 1]
                        queues[m].append(code + 1)
                        inc[m] += 1
                        total += 1
                        if skip:
                            refresh(m)
                if skip and not has_data(l):
                    deactivate(l)
                else:
                    next_srv[l] += inv_c
                    heapq.heappush(heap, (next_srv[l], seq, EV_SERVE, l, ver[l]))
                    seq += 1
        advance(tf)

        n_opp += slot_opp
        n_empty += slot_empty
        if record:
            for l in range(L):
                qlen[t, l] = len(queues[l])
                in_cum[t, l] = inc[l]
                out_cum[t, l] = outc[l]
            for f in range(F):
                delivered[t, f] = dlv[f]
            opp[t] = slot_opp
            empty_opp[t] = slot_empty
        while ck < n_ck and checkpoints[ck] == t:
            for f in range(F):
                ck_delivered[ck, f] = dlv[f]
            ck_opp[ck] = n_opp
            ck_empty[ck] = n_empty
            ck += 1
        # backlog is measured at the end of the slot
        if total > max_total:
            max_total = total
        if cap > 0 and total >= cap:
            stop = t
            break

    return max_total, stop, occ
