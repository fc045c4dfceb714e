"""Discrete-event simulation of Aloha, centralized and CSMA multi-hop networks.

Queues are FIFO per directed link, i.e. a node buffer split by next hop.
Exogenous arrivals enter at the start of a slot and may leave in that slot;
relayed packets become eligible from the next slot on.  Slotted MACs
(Aloha, centralized) run slot by slot; CSMA runs on an event calendar in
continuous time and is sampled at integer times.  All randomness comes from
counter-based per-link streams, so a run is a pure function of its config.
"""

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from . import _core
from ._kernels_py import (
    ARR_BERNOULLI, ARR_EXPLICIT, ARR_FLUID, ARR_SATURATED, MAC_ALOHA,
    MAC_CENTRALIZED,
)
from ._rng import INIT_STREAM, uniform
from .contention import independent_sets
from .errors import ModelError, ParameterError
from .mmtp import product_form
from .schedule import Schedule

MACS = ("aloha", "centralized", "csma")
ARRIVALS = {
    "fluid": ARR_FLUID,
    "bernoulli": ARR_BERNOULLI,
    "saturated": ARR_SATURATED,
    "explicit": ARR_EXPLICIT,
}
POLICIES = ("hold", "skip")


@dataclass(frozen=True)
class SimConfig:
    """Everything a run depends on besides the topology.

    ``schedule`` uses the text form of :class:`Schedule` (``"0,1,2,0+3"``).
    ``explicit`` lists per-slot exogenous arrivals ``a(1..T)`` shared by every
    flow.  ``cap`` stops the run once the end-of-slot network backlog reaches
    it (0 disables).  ``record=False`` keeps only decade checkpoints.
    """

    mac: str = "aloha"
    T: int = 1000
    seed: int = 0
    C: float = 1.0
    arrival: str = "fluid"
    lam: float = 0.0
    explicit: Optional[tuple] = None
    p: float = 0.2
    schedule: Optional[str] = None
    loop_start: int = 0
    nu: float = 0.1
    mu: float = 0.1
    policy: str = "hold"
    cap: int = 0
    record: bool = True
    csma_stationary_start: bool = False
    track_occupancy: bool = False

    def __post_init__(self):
        if self.mac not in MACS:
            raise ParameterError(f"unknown mac {self.mac!r}; expected one of {MACS}")
        if self.arrival not in ARRIVALS:
            raise ParameterError(f"unknown arrival model {self.arrival!r}")
        if self.policy not in POLICIES:
            raise ParameterError(f"policy must be 'hold' or 'skip', got {self.policy!r}")
        if self.T < 1:
            raise ParameterError(f"T must be >= 1, got {self.T}")
        if self.lam < 0:
            raise ParameterError(f"lam must be >= 0, got {self.lam}")
        if self.arrival == "bernoulli" and self.lam > 1:
            raise ParameterError(f"Bernoulli arrival probability must be <= 1, got {self.lam}")
        if self.C <= 0:
            raise ParameterError(f"C must be positive, got {self.C}")
        if self.mac != "csma" and float(self.C) != int(self.C):
            raise ParameterError("slotted MACs serve an integer number of packets per slot")
        if self.mac == "aloha" and not 0.0 < self.p < 1.0:
            raise ParameterError(f"Aloha p must lie in (0,1), got {self.p}")
        if self.mac == "centralized" and not self.schedule:
            raise ParameterError("centralized MAC needs a schedule")
        if self.mac == "csma" and (self.nu <= 0 or self.mu <= 0):
            raise ParameterError("CSMA rates nu and mu must be positive")
        if self.cap < 0:
            raise ParameterError(f"cap must be >= 0, got {self.cap}")
        if self.arrival == "explicit":
            if self.explicit is None or len(self.explicit) != self.T:
                raise ParameterError("explicit arrivals need exactly T per-slot counts")
            if any(int(a) < 0 for a in self.explicit):
                raise ParameterError("explicit arrival counts must be nonnegative")
            object.__setattr__(self, "explicit", tuple(int(a) for a in self.explicit))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def to_dict(self):
        d = dataclasses.asdict(self)
        if d["explicit"] is not None:
            d["explicit"] = list(d["explicit"])
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        if data.get("explicit") is not None:
            data["explicit"] = tuple(data["explicit"])
        return cls(**data)

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


class _Flows(NamedTuple):
    route_links: np.ndarray
    code_flow: np.ndarray
    code_last: np.ndarray
    flow_first: np.ndarray


def _compile_flows(topology):
    route_links, code_flow, code_last, first = [], [], [], []
    for f, route in enumerate(topology.routes):
        first.append(len(route_links))
        for h, l in enumerate(route):
            route_links.append(l)
            code_flow.append(f)
            code_last.append(1 if h == len(route) - 1 else 0)
    as64 = lambda x: np.asarray(x, dtype=np.int64)  # noqa: E731
    return _Flows(as64(route_links), as64(code_flow), as64(code_last), as64(first))


def decade_checkpoints(T):
    ck = [10**e for e in range(1, int(math.log10(T)) + 1) if 10**e <= T]
    if not ck or ck[-1] != T:
        ck.append(T)
    return np.asarray(ck, dtype=np.int64)


@dataclass(frozen=True, eq=False)
class SimTrace:
    """Result of :func:`run`.

    Per-slot arrays have one row per integer time ``0..T_run`` (row 0 is the
    empty initial state) and are empty when the run was not recorded.
    ``checkpoints`` hold cumulative deliveries and opportunity counts at
    decades of ``T``.
    """

    config: SimConfig
    topology: object
    T_run: int
    stopped_at: Optional[int]
    max_backlog: int
    link_backlog: np.ndarray
    link_in: np.ndarray
    link_out: np.ndarray
    delivered: np.ndarray
    opportunities: np.ndarray
    empty_opportunities: np.ndarray
    checkpoints: np.ndarray
    ck_delivered: np.ndarray
    ck_opportunities: np.ndarray
    ck_empty: np.ndarray
    occupancy: dict = field(default_factory=dict)

    @property
    def recorded(self):
        return self.link_backlog.shape[0] > 0

    def _node_sum(self, per_link):
        src = self.topology.link_sources()
        out = np.zeros((per_link.shape[0], self.topology.n_nodes), dtype=np.int64)
        for l, node in enumerate(src):
            out[:, node] += per_link[:, l]
        return out

    def node_backlog(self):
        return self._node_sum(self.link_backlog)

    def node_arrivals(self):
        return self._node_sum(self.link_in)

    def node_departures(self):
        return self._node_sum(self.link_out)

    def total_backlog(self):
        return self.link_backlog.sum(axis=1)

    def nonempty_fraction(self):
        """Running ``1 - f`` after every slot (NaN before the first opportunity)."""
        opp = np.cumsum(self.opportunities)
        busy = opp - np.cumsum(self.empty_opportunities)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(opp > 0, busy / np.maximum(opp, 1), np.nan)

    def throughput(self, flow=0):
        """``D(t)/t`` at the checkpoints."""
        return self.ck_delivered[:, flow] / self.checkpoints

    def to_csv(self, path_or_file, times=None):
        """Rows ``t,node,backlog,delivered,nonempty_fraction``.

        ``delivered`` is the cumulative number of packets a node has sent.
        """
        if not self.recorded:
            raise ModelError("trace was run with record=False; nothing to export")
        times = range(1, self.T_run + 1) if times is None else times
        backlog, sent = self.node_backlog(), self.node_departures()
        nef = self.nonempty_fraction()
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="") if own else path_or_file
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "node", "backlog", "delivered", "nonempty_fraction"])
            for t in times:
                frac = "" if np.isnan(nef[t]) else repr(float(nef[t]))
                for node in range(self.topology.n_nodes):
                    w.writerow([t, node, backlog[t, node], sent[t, node], frac])
        finally:
            if own:
                fh.close()


def _csma_init(graph, cfg):
    L = graph.n_links
    init = np.zeros(L, dtype=np.int64)
    if cfg.csma_stationary_start:
        states = independent_sets(graph)
        cdf = np.cumsum(product_form(states, cfg.nu, cfg.mu))
        u = uniform(cfg.seed, INIT_STREAM, 0)
        s = states[min(int(np.searchsorted(cdf, u, side="right")), len(states) - 1)]
        init[list(s)] = 1
    return init


def run(topology, graph, cfg, backend=None):
    """Simulate ``cfg`` on ``topology`` whose links are the vertices of ``graph``."""
    if graph.n_links != topology.n_links:
        raise ModelError(
            f"contention graph has {graph.n_links} links, topology {topology.n_links}"
        )
    kern = _core if backend is None else _core.backends()[backend]
    L, F = topology.n_links, len(topology.routes)
    T = int(cfg.T)
    flows = _compile_flows(topology)
    adj_ptr, adj_idx = graph.csr()

    sat = np.full(L, -1, dtype=np.int64)
    if cfg.arrival == "saturated":
        for f in range(F - 1, -1, -1):
            sat[flows.route_links[flows.flow_first[f]]] = flows.flow_first[f]
    explicit = np.zeros(T + 1, dtype=np.int64)
    if cfg.arrival == "explicit":
        explicit[1:] = cfg.explicit

    rows = T + 1 if cfg.record else 0
    qlen = np.zeros((rows, L), dtype=np.int64)
    in_cum = np.zeros((rows, L), dtype=np.int64)
    out_cum = np.zeros((rows, L), dtype=np.int64)
    delivered = np.zeros((rows, F), dtype=np.int64)
    opp = np.zeros(rows, dtype=np.int64)
    empty = np.zeros(rows, dtype=np.int64)
    ck = decade_checkpoints(T)
    ck_del = np.zeros((len(ck), F), dtype=np.int64)
    ck_opp = np.zeros(len(ck), dtype=np.int64)
    ck_empty = np.zeros(len(ck), dtype=np.int64)
    outputs = (qlen, in_cum, out_cum, delivered, opp, empty, ck_del, ck_opp, ck_empty)
    arr_mode = ARRIVALS[cfg.arrival]
    skip = 1 if cfg.policy == "skip" else 0
    seed = int(cfg.seed) & 0xFFFFFFFFFFFFFFFF
    occ = {}

    if cfg.mac == "csma":
        track = bool(cfg.track_occupancy)
        if track and L > 62:
            raise ModelError("occupancy tracking supports at most 62 links")
        max_total, stop, occ = kern.csma_run(
            adj_ptr, adj_idx, *flows[:3], sat, flows.flow_first,
            float(cfg.nu), float(cfg.mu), float(cfg.C), skip, arr_mode, float(cfg.lam),
            explicit, T, seed, int(cfg.cap), ck, _csma_init(graph, cfg), track, *outputs,
        )
    else:
        if cfg.mac == "aloha":
            mac = MAC_ALOHA
            p_link = np.full(L, float(cfg.p))
            sched = Schedule(({0},))
        else:
            mac = MAC_CENTRALIZED
            p_link = np.zeros(L)
            sched = Schedule.parse(cfg.schedule, cfg.loop_start)
            bad = [l for l in sched.links() if not 0 <= l < L]
            if bad:
                raise ModelError(f"schedule names links {bad} outside 0..{L - 1}")
        sp = np.zeros(len(sched.slots) + 1, dtype=np.int64)
        sl = []
        for i, s in enumerate(sched.slots):
            sl.extend(sorted(s))
            sp[i + 1] = len(sl)
        max_total, stop = kern.slotted_run(
            mac, adj_ptr, adj_idx, *flows[:3], sat, flows.flow_first, p_link,
            sp, np.asarray(sl, dtype=np.int64), int(sched.loop_start),
            int(cfg.C), skip, arr_mode, float(cfg.lam), explicit, T, seed, int(cfg.cap),
            ck, *outputs,
        )

    T_run = T if stop < 0 else int(stop)
    if cfg.record:
        cut = T_run + 1
        qlen, in_cum, out_cum = qlen[:cut], in_cum[:cut], out_cum[:cut]
        delivered, opp, empty = delivered[:cut], opp[:cut], empty[:cut]
    keep = ck <= T_run
    occ = {int(k): float(v) for k, v in sorted(occ.items())}
    return SimTrace(
        cfg, topology, T_run, None if stop < 0 else int(stop), int(max_total),
        qlen, in_cum, out_cum, delivered, opp, empty,
        ck[keep], ck_del[keep], ck_opp[keep], ck_empty[keep], occ,
    )


def occupancy_by_state(trace, states):
    """Fraction of ``[0, T]`` spent in each independent set of ``states``."""
    total = float(trace.T_run)
    out = np.zeros(len(states))
    index = {sum(1 << l for l in s): i for i, s in enumerate(states)}
    for mask, dur in trace.occupancy.items():
        out[index[mask]] += dur / total
    return out


def empty_fraction(trace):
    """Cumulative ``1 - f(n, T)`` at each decade checkpoint.

    The share of transmission opportunities (a link holding the channel in a
    slot, or one CSMA service instant) that found a nonempty buffer.
    Returns ``(T, value)`` pairs; ``value`` is NaN with no opportunity yet.
    """
    out = []
    for t, o, e in zip(trace.checkpoints, trace.ck_opportunities, trace.ck_empty):
        out.append((int(t), (o - e) / o if o > 0 else math.nan))
    return out


class CapacityResult(NamedTuple):
    lam: float
    history: tuple


def default_backlog_cap(T):
    """Backlog threshold keeping the ratio 10^6 : 10^8 of the full-scale runs."""
    return max(1, T // 100)


def capacity_search(topology, graph, cfg, T=None, backlog_cap=None, iterations=12):
    """Largest per-flow rate (to ``C / 2^iterations``) keeping backlog below the cap.

    Bisection over ``[0, C]`` with fluid arrivals; every candidate reuses the
    seed of ``cfg``.  ``C`` itself is tested first so that a link served
    every slot reports exactly ``C``.
    """
    T = cfg.T if T is None else int(T)
    cap = default_backlog_cap(T) if backlog_cap is None else int(backlog_cap)
    if T < 1 or cap < 1:
        raise ParameterError("T and backlog_cap must be positive")
    base = cfg.replace(T=T, cap=cap, arrival="fluid", record=False, track_occupancy=False)

    def feasible(lam):
        tr = run(topology, graph, base.replace(lam=lam))
        return tr.stopped_at is None

    history = []
    hi = float(cfg.C)
    ok = feasible(hi)
    history.append((hi, ok))
    if ok:
        return CapacityResult(hi, tuple(history))
    lo = 0.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        ok = feasible(mid)
        history.append((mid, ok))
        if ok:
            lo = mid
        else:
            hi = mid
    return CapacityResult(lo, tuple(history))


@dataclass(frozen=True)
class FactorReport:
    n: int
    lam: float
    nonempty_fraction: float
    h: float
    x: float
    l: float
    c: float
    upper_untightened: float
    upper_tightened: float
    lower_factor: float
    lower_factor_infinite: bool
    lower_untightened: float
    lower_tightened: float


def tightened_factor_report(trace, h, x, l, c, n=None, lam=None):
    """Capacity-calculus bounds with and without the ``1 - f`` correction.

    Upper: ``n lam h <= (1-f) x`` gives ``lam <= (1-f) x / (n h)`` against
    ``x / (n h)``.  Lower: ``lam l (1-f) <= c`` gives ``lam <= c / (l (1-f))``,
    i.e. the factor ``1 / (1-f)`` on ``c / l``.
    """
    pairs = empty_fraction(trace)
    frac = pairs[-1][1] if pairs else math.nan
    if math.isnan(frac):
        frac = 0.0
    n = trace.topology.n_nodes if n is None else n
    lam = trace.config.lam if lam is None else lam
    return factor_report(frac, n, lam, h, x, l, c)


def factor_report(nonempty, n, lam, h, x, l, c):
    """:class:`FactorReport` from a given ``1 - f`` value."""
    for name, v in (("h", h), ("x", x), ("l", l), ("c", c)):
        if not v > 0:
            raise ParameterError(f"{name} must be positive, got {v}")
    if not 0.0 <= nonempty <= 1.0:
        raise ParameterError(f"1 - f must lie in [0,1], got {nonempty}")
    infinite = nonempty == 0.0
    factor = math.inf if infinite else 1.0 / nonempty
    return FactorReport(
        n=n, lam=lam, nonempty_fraction=nonempty, h=h, x=x, l=l, c=c,
        upper_untightened=x / (n * h),
        upper_tightened=nonempty * x / (n * h),
        lower_factor=factor,
        lower_factor_infinite=infinite,
        lower_untightened=c / l,
        lower_tightened=c / l * factor,
    )
