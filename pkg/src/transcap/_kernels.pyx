# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled simulation and (min,+) kernels.

Mirror of ``_kernels_py``: same signatures, same arithmetic order, same
counter-based variates, hence bit-identical results.
"""

from libc.math cimport log, INFINITY
from libc.stdint cimport uint64_t, int64_t
from libcpp.deque cimport deque
from libcpp.vector cimport vector
from libcpp.unordered_map cimport unordered_map

import numpy as np

cdef uint64_t MIX_GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t MIX_M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t MIX_M2 = 0x94D049BB133111EBULL

cdef uint64_t FLOW_STREAM = (<uint64_t>1) << 40

cdef enum:
    ARR_FLUID = 0
    ARR_BERNOULLI = 1
    ARR_SATURATED = 2
    ARR_EXPLICIT = 3
    MAC_ALOHA = 0
    MAC_CENTRALIZED = 1
    EV_BACKOFF = 0
    EV_SERVE = 1
    EV_END = 2


cdef inline uint64_t _mix(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * MIX_M1
    z = (z ^ (z >> 27)) * MIX_M2
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t seed, uint64_t stream, uint64_t counter) noexcept nogil:
    cdef uint64_t h = _mix(seed + MIX_GOLDEN * (stream + 1))
    h = _mix(h ^ (counter * MIX_M1 + MIX_GOLDEN))
    return <double>(h >> 11) * (1.0 / 9007199254740992.0)


def uniform(seed, stream, counter):
    return _uniform(<uint64_t>seed, <uint64_t>stream, <uint64_t>counter)


def minplus_convolve(double[::1] a, double[:, ::1] table):
    cdef Py_ssize_t n = a.shape[0], s, t
    cdef double best, v
    out = np.empty(n)
    cdef double[::1] o = out
    for t in range(n):
        best = INFINITY
        for s in range(t + 1):
            v = a[s] + table[s, t]
            if v < best:
                best = v
        o[t] = best
    return out


def minplus_compose(double[:, ::1] a, double[:, ::1] b):
    cdef Py_ssize_t n = a.shape[0], s, u, t
    cdef double best, v
    out = np.zeros((n, n))
    cdef double[:, ::1] o = out
    for s in range(n):
        for t in range(s, n):
            best = INFINITY
            for u in range(s, t + 1):
                v = a[s, u] + b[u, t]
                if v < best:
                    best = v
            o[s, t] = best
    return out


cdef inline int64_t _arrivals(Py_ssize_t f, int64_t t, int arr_mode, double lam,
                              double* acc, const int64_t[::1] explicit,
                              uint64_t seed) noexcept nogil:
    cdef int64_t k
    if arr_mode == ARR_FLUID:
        acc[f] += lam
        k = <int64_t>acc[f]
        acc[f] -= k
        return k
    if arr_mode == ARR_BERNOULLI:
        return 1 if _uniform(seed, FLOW_STREAM + f, <uint64_t>t) < lam else 0
    if arr_mode == ARR_EXPLICIT:
        return explicit[t]
    return 0


def slotted_run(
    int mac, const int64_t[::1] adj_ptr, const int64_t[::1] adj_idx,
    const int64_t[::1] route_links, const int64_t[::1] code_flow,
    const int64_t[::1] code_last, const int64_t[::1] sat_code,
    const int64_t[::1] flow_first, const double[::1] p_link,
    const int64_t[::1] sched_ptr, const int64_t[::1] sched_links, int64_t loop_start,
    int64_t C, int skip, int arr_mode, double lam, const int64_t[::1] explicit,
    int64_t T, uint64_t seed, int64_t cap, const int64_t[::1] checkpoints,
    int64_t[:, ::1] qlen, int64_t[:, ::1] in_cum, int64_t[:, ::1] out_cum,
    int64_t[:, ::1] delivered, int64_t[::1] opp, int64_t[::1] empty_opp,
    int64_t[:, ::1] ck_delivered, int64_t[::1] ck_opp, int64_t[::1] ck_empty,
):
    cdef Py_ssize_t L = sat_code.shape[0], F = flow_first.shape[0]
    cdef bint record = qlen.shape[0] > 0
    cdef Py_ssize_t n_ck = checkpoints.shape[0]
    cdef int64_t K = sched_ptr.shape[0] - 1
    cdef vector[deque[int64_t]] queues = vector[deque[int64_t]](L)
    cdef vector[int64_t] inc = vector[int64_t](L, 0)
    cdef vector[int64_t] outc = vector[int64_t](L, 0)
    cdef vector[int64_t] dlv = vector[int64_t](F, 0)
    cdef vector[double] acc = vector[double](F, 0.0)
    cdef vector[char] attempt = vector[char](L, 0)
    cdef vector[int64_t] active
    cdef vector[int64_t] pending
    cdef int64_t total = 0, max_total = 0, stop = -1
    cdef int64_t n_opp = 0, n_empty = 0, slot_opp, slot_empty
    cdef Py_ssize_t ck = 0, f, l, m, j, idx
    cdef int64_t t, k, code, served, i, pos, c
    cdef bint ok

    with nogil:
        for t in range(1, T + 1):
            for f in range(F):
                k = _arrivals(f, t, arr_mode, lam, &acc[0], explicit, seed)
                if k:
                    code = flow_first[f]
                    l = route_links[code]
                    for j in range(k):
                        queues[l].push_back(code)
                    inc[l] += k
                    total += k

            slot_opp = 0
            slot_empty = 0
            pending.clear()
            active.clear()
            if mac == MAC_ALOHA:
                for l in range(L):
                    if skip and queues[l].empty() and sat_code[l] < 0:
                        attempt[l] = 0
                    else:
                        attempt[l] = _uniform(seed, <uint64_t>l, <uint64_t>t) < p_link[l]
                for l in range(L):
                    if attempt[l]:
                        ok = True
                        for idx in range(adj_ptr[l], adj_ptr[l + 1]):
                            if attempt[adj_idx[idx]]:
                                ok = False
                                break
                        if ok:
                            active.push_back(l)
            else:
                i = t - 1
                if i < K:
                    pos = i
                else:
                    pos = loop_start + (i - loop_start) % (K - loop_start)
                for idx in range(sched_ptr[pos], sched_ptr[pos + 1]):
                    active.push_back(sched_links[idx])

            for j in range(<Py_ssize_t>active.size()):
                l = active[j]
                slot_opp += 1
                served = 0
                for c in range(C):
                    if not queues[l].empty():
                        code = queues[l].front()
                        queues[l].pop_front()
                        total -= 1
                    elif sat_code[l] >= 0:
                        code = sat_code[l]
                        inc[l] += 1
                    else:
                        break
                    outc[l] += 1
                    served += 1
                    if code_last[code]:
                        dlv[code_flow[code]] += 1
                    else:
                        pending.push_back(code + 1)
                if served == 0:
                    slot_empty += 1
            for j in range(<Py_ssize_t>pending.size()):
                code = pending[j]
                l = route_links[code]
                queues[l].push_back(code)
                inc[l] += 1
                total += 1

            n_opp += slot_opp
            n_empty += slot_empty
            if record:
                for l in range(L):
                    qlen[t, l] = queues[l].size()
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


cdef struct Event:
    double time
    int64_t seq
    int kind
    int64_t link
    int64_t ver


cdef inline bint _ev_less(Event* a, Event* b) noexcept nogil:
    if a.time < b.time:
        return True
    if a.time > b.time:
        return False
    return a.seq < b.seq


cdef void _heap_push(vector[Event]& h, Event e) noexcept nogil:
    h.push_back(e)
    cdef Py_ssize_t i = h.size() - 1, parent
    cdef Event tmp
    while i > 0:
        parent = (i - 1) >> 1
        if _ev_less(&h[i], &h[parent]):
            tmp = h[i]
            h[i] = h[parent]
            h[parent] = tmp
            i = parent
        else:
            break


cdef Event _heap_pop(vector[Event]& h) noexcept nogil:
    cdef Event top = h[0]
    cdef Event last = h.back()
    h.pop_back()
    cdef Py_ssize_t n = h.size(), i = 0, c, r
    cdef Event tmp
    if n == 0:
        return top
    h[0] = last
    while True:
        c = 2 * i + 1
        if c >= n:
            break
        r = c + 1
        if r < n and _ev_less(&h[r], &h[c]):
            c = r
        if _ev_less(&h[c], &h[i]):
            tmp = h[i]
            h[i] = h[c]
            h[c] = tmp
            i = c
        else:
            break
    return top


cdef class _Csma:
    cdef Py_ssize_t L, F
    cdef const int64_t[::1] adj_ptr
    cdef const int64_t[::1] adj_idx
    cdef const int64_t[::1] route_links
    cdef const int64_t[::1] code_flow
    cdef const int64_t[::1] code_last
    cdef const int64_t[::1] sat_code
    cdef double nu, mu, inv_c
    cdef int skip
    cdef bint track_occ
    cdef uint64_t seed
    cdef vector[deque[int64_t]] queues
    cdef vector[int64_t] inc, outc, dlv, nb, ver, draws
    cdef vector[char] active, counting
    cdef vector[double] resid, expiry, next_srv
    cdef vector[Event] heap
    cdef int64_t seq, total
    cdef double now
    cdef uint64_t mask
    cdef unordered_map[uint64_t, double] occ

    cdef inline double draw_exp(self, Py_ssize_t l, double rate) noexcept nogil:
        cdef double u = _uniform(self.seed, <uint64_t>l, <uint64_t>self.draws[l])
        self.draws[l] += 1
        return -log(1.0 - u) / rate

    cdef inline bint has_data(self, Py_ssize_t l) noexcept nogil:
        return (not self.queues[l].empty()) or self.sat_code[l] >= 0

    cdef void push(self, double time, int kind, Py_ssize_t l) noexcept nogil:
        cdef Event e
        e.time = time
        e.seq = self.seq
        e.kind = kind
        e.link = l
        e.ver = self.ver[l]
        self.seq += 1
        _heap_push(self.heap, e)

    cdef void refresh(self, Py_ssize_t l) noexcept nogil:
        cdef bint c = (not self.active[l]) and self.nb[l] == 0 and ((not self.skip) or self.has_data(l))
        if c and not self.counting[l]:
            self.expiry[l] = self.now + self.resid[l]
            self.ver[l] += 1
            self.counting[l] = 1
            self.push(self.expiry[l], EV_BACKOFF, l)
        elif self.counting[l] and not c:
            self.resid[l] = self.expiry[l] - self.now
            self.ver[l] += 1
            self.counting[l] = 0

    cdef void activate(self, Py_ssize_t l) noexcept nogil:
        cdef Py_ssize_t idx, m
        cdef double end_t
        self.active[l] = 1
        self.counting[l] = 0
        self.ver[l] += 1
        end_t = self.now + self.draw_exp(l, self.mu)
        self.next_srv[l] = self.now + self.inv_c
        self.push(end_t, EV_END, l)
        self.push(self.next_srv[l], EV_SERVE, l)
        if self.track_occ:
            self.mask |= (<uint64_t>1) << l
        for idx in range(self.adj_ptr[l], self.adj_ptr[l + 1]):
            m = self.adj_idx[idx]
            self.nb[m] += 1
            self.refresh(m)

    cdef void deactivate(self, Py_ssize_t l) noexcept nogil:
        cdef Py_ssize_t idx, m
        self.active[l] = 0
        self.ver[l] += 1
        self.resid[l] = self.draw_exp(l, self.nu)
        if self.track_occ:
            self.mask &= ~((<uint64_t>1) << l)
        for idx in range(self.adj_ptr[l], self.adj_ptr[l + 1]):
            m = self.adj_idx[idx]
            self.nb[m] -= 1
            self.refresh(m)
        self.refresh(l)

    cdef void advance(self, double to) noexcept nogil:
        if self.track_occ and to > self.now:
            self.occ[self.mask] += to - self.now
        self.now = to


def csma_run(
    const int64_t[::1] adj_ptr, const int64_t[::1] adj_idx,
    const int64_t[::1] route_links, const int64_t[::1] code_flow,
    const int64_t[::1] code_last, const int64_t[::1] sat_code,
    const int64_t[::1] flow_first,
    double nu, double mu, double C, int skip, int arr_mode, double lam,
    const int64_t[::1] explicit, int64_t T, uint64_t seed, int64_t cap,
    const int64_t[::1] checkpoints, const int64_t[::1] init_active, bint track_occ,
    int64_t[:, ::1] qlen, int64_t[:, ::1] in_cum, int64_t[:, ::1] out_cum,
    int64_t[:, ::1] delivered, int64_t[::1] opp, int64_t[::1] empty_opp,
    int64_t[:, ::1] ck_delivered, int64_t[::1] ck_opp, int64_t[::1] ck_empty,
):
    cdef _Csma s = _Csma()
    cdef Py_ssize_t L = sat_code.shape[0], F = flow_first.shape[0]
    s.L = L
    s.F = F
    s.adj_ptr = adj_ptr
    s.adj_idx = adj_idx
    s.route_links = route_links
    s.code_flow = code_flow
    s.code_last = code_last
    s.sat_code = sat_code
    s.nu = nu
    s.mu = mu
    s.inv_c = 1.0 / C
    s.skip = skip
    s.track_occ = track_occ
    s.seed = seed
    s.queues = vector[deque[int64_t]](L)
    s.inc = vector[int64_t](L, 0)
    s.outc = vector[int64_t](L, 0)
    s.dlv = vector[int64_t](F, 0)
    s.nb = vector[int64_t](L, 0)
    s.ver = vector[int64_t](L, 0)
    s.draws = vector[int64_t](L, 0)
    s.active = vector[char](L, 0)
    s.counting = vector[char](L, 0)
    s.resid = vector[double](L, 0.0)
    s.expiry = vector[double](L, 0.0)
    s.next_srv = vector[double](L, 0.0)
    s.seq = 0
    s.total = 0
    s.now = 0.0
    s.mask = 0

    cdef bint record = qlen.shape[0] > 0
    cdef Py_ssize_t n_ck = checkpoints.shape[0]
    cdef vector[double] acc = vector[double](F, 0.0)
    cdef int64_t max_total = 0, stop = -1, n_opp = 0, n_empty = 0
    cdef int64_t slot_opp, slot_empty, t, k, code, j
    cdef Py_ssize_t l, f, m, ck = 0
    cdef double tf
    cdef Event ev

    with nogil:
        for l in range(L):
            if init_active[l]:
                s.activate(l)
        for l in range(L):
            if not s.active[l]:
                s.resid[l] = s.draw_exp(l, nu)
        for l in range(L):
            s.refresh(l)

        for t in range(1, T + 1):
            for f in range(F):
                k = _arrivals(f, t, arr_mode, lam, &acc[0], explicit, seed)
                if k:
                    code = flow_first[f]
                    l = route_links[code]
                    for j in range(k):
                        s.queues[l].push_back(code)
                    s.inc[l] += k
                    s.total += k
                    if skip:
                        s.refresh(l)

            slot_opp = 0
            slot_empty = 0
            tf = <double>t
            while s.heap.size() > 0 and s.heap[0].time <= tf:
                ev = _heap_pop(s.heap)
                l = ev.link
                if ev.ver != s.ver[l]:
                    continue
                s.advance(ev.time)
                if ev.kind == EV_BACKOFF:
                    s.counting[l] = 0
                    s.activate(l)
                elif ev.kind == EV_END:
                    s.deactivate(l)
                else:
                    slot_opp += 1
                    code = -1
                    if not s.queues[l].empty():
                        code = s.queues[l].front()
                        s.queues[l].pop_front()
                        s.total -= 1
                    elif sat_code[l] >= 0:
                        code = sat_code[l]
                        s.inc[l] += 1
                    else:
                        slot_empty += 1
                    if code >= 0:
                        s.outc[l] += 1
                        if code_last[code]:
                            s.dlv[code_flow[code]] += 1
                        else:
                            m = route_links[code + 1]
                            s.queues[m].push_back(code + 1)
                            s.inc[m] += 1
                            s.total += 1
                            if skip:
                                s.refresh(m)
                    if skip and not s.has_data(l):
                        s.deactivate(l)
                    else:
                        s.next_srv[l] += s.inv_c
                        s.push(s.next_srv[l], EV_SERVE, l)
            s.advance(tf)

            n_opp += slot_opp
            n_empty += slot_empty
            if record:
                for l in range(L):
                    qlen[t, l] = s.queues[l].size()
                    in_cum[t, l] = s.inc[l]
                    out_cum[t, l] = s.outc[l]
                for f in range(F):
                    delivered[t, f] = s.dlv[f]
                opp[t] = slot_opp
                empty_opp[t] = slot_empty
            while ck < n_ck and checkpoints[ck] == t:
                for f in range(F):
                    ck_delivered[ck, f] = s.dlv[f]
                ck_opp[ck] = n_opp
                ck_empty[ck] = n_empty
                ck += 1
            # backlog is measured at the end of the slot
            if s.total > max_total:
                max_total = s.total
            if cap > 0 and s.total >= cap:
                stop = t
                break

    occ = {}
    for kv in s.occ:
        occ[kv.first] = kv.second
    return max_total, stop, occ
