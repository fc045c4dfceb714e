import io
import math

import numpy as np
import pytest

from transcap._rng import uniform
from transcap.contention import (
    ContentionGraph, Topology, independent_sets, line_network, random_network,
)
from transcap.errors import ModelError, ParameterError
from transcap.mmtp import product_form
from transcap.sim import (
    SimConfig, capacity_search, decade_checkpoints, empty_fraction, factor_report,
    occupancy_by_state, run, tightened_factor_report,
)

from oracles import packet_pipeline_departures


def single_link():
    top = Topology([(0, 0), (1, 0)], ((0, 1),), ((0, 1),), ((0,),), 1.0)
    return top, ContentionGraph.empty(1)


def check_conservation(tr):
    q, i, o = tr.link_backlog, tr.link_in, tr.link_out
    assert np.array_equal(q, i - o)
    nb, na, nd = tr.node_backlog(), tr.node_arrivals(), tr.node_departures()
    assert np.array_equal(np.diff(nb, axis=0), np.diff(na, axis=0) - np.diff(nd, axis=0))
    assert np.all(np.diff(tr.delivered, axis=0) >= 0)


@pytest.mark.parametrize("cfg", [
    SimConfig(mac="aloha", T=3000, lam=0.05, p=0.3, seed=1),
    SimConfig(mac="aloha", T=3000, lam=0.3, p=0.3, seed=2, arrival="bernoulli", policy="skip"),
    SimConfig(mac="centralized", T=500, lam=0.3, schedule="0,1,2,0+3", loop_start=1),
    SimConfig(mac="csma", T=3000, lam=0.1, seed=4),
    SimConfig(mac="csma", T=3000, lam=0.1, seed=4, policy="skip", arrival="bernoulli"),
])
def test_conservation_line(cfg):
    top, g = line_network(5, 3)
    check_conservation(run(top, g, cfg))


def test_conservation_random_network():
    top, g, _ = random_network(10, 7)
    for mac in ("aloha", "csma"):
        tr = run(top, g, SimConfig(mac=mac, T=2000, lam=0.01, seed=3))
        check_conservation(tr)


def test_deterministic():
    top, g = line_network(5, 3)
    for mac in ("aloha", "csma"):
        cfg = SimConfig(mac=mac, T=2000, lam=0.05, seed=11)
        a, b = run(top, g, cfg), run(top, g, cfg)
        for name in ("link_backlog", "link_in", "link_out", "delivered", "opportunities",
                     "empty_opportunities", "ck_delivered"):
            assert np.array_equal(getattr(a, name), getattr(b, name))
        c = run(top, g, cfg.replace(seed=12))
        assert not np.array_equal(a.delivered, c.delivered)


def test_centralized_single_packet_departs_at_4():
    top, g = line_network(5, 3)
    T = 8
    cfg = SimConfig(mac="centralized", T=T, arrival="explicit",
                    explicit=(1,) + (0,) * (T - 1), schedule="0,1,2,0+3", loop_start=1)
    D = run(top, g, cfg).delivered[:, 0]
    assert D[3] == 0 and D[4] == 1
    ref = packet_pipeline_departures([{0}, {1}, {2}, {0, 3}], 1, 4, [0, 1] + [0] * (T - 1), T)
    assert list(D) == ref


def test_centralized_matches_pipeline_oracle():
    top, g = line_network(5, 3)
    rng = np.random.default_rng(0)
    T = 200
    arr = tuple(int(x) for x in rng.integers(0, 2, T))
    cfg = SimConfig(mac="centralized", T=T, arrival="explicit", explicit=arr,
                    schedule="0,1,2,0+3", loop_start=1)
    D = run(top, g, cfg).delivered[:, 0]
    assert list(D) == packet_pipeline_departures(
        [{0}, {1}, {2}, {0, 3}], 1, 4, (0,) + arr, T)


def test_aloha_single_link_bernoulli_mean():
    top, g = single_link()
    T = 10**5
    tr = run(top, g, SimConfig(mac="aloha", T=T, p=0.3, arrival="saturated", seed=5))
    rate = tr.ck_delivered[-1, 0] / T
    assert abs(rate - 0.3) <= 3 * math.sqrt(0.3 * 0.7 / T)


def one_hop_flows(n, c_r):
    """Line links, each carrying its own saturated one-hop flow."""
    top, g = line_network(n, c_r)
    m = n - 1
    top = Topology(top.positions, top.links, tuple((i, i + 1) for i in range(m)),
                   tuple((i,) for i in range(m)), 1.0)
    return top, g


def test_aloha_link_success_matches_pi_on():
    top, g = one_hop_flows(5, 3)
    T, p = 10**6, 0.2
    tr = run(top, g, SimConfig(mac="aloha", T=T, p=p, arrival="saturated", seed=2,
                               record=False))
    for l in range(4):
        q = p * (1 - p) ** g.degree(l)
        rate = tr.ck_delivered[-1, l] / T
        assert abs(rate - q) <= 3 * math.sqrt(q * (1 - q) / T)


def test_csma_single_link_busy_half():
    top, g = single_link()
    T = 10**5
    tr = run(top, g, SimConfig(mac="csma", T=T, arrival="saturated", seed=3,
                               track_occupancy=True, record=False))
    busy = occupancy_by_state(tr, [(), (0,)])[1]
    # busy periods have mean 10, so about T/20 independent cycles
    assert abs(busy - 0.5) < 3 * math.sqrt(0.25 * 2 / (T / 20))


def test_empty_fraction_trivial():
    top, g = single_link()
    tr = run(top, g, SimConfig(mac="aloha", T=1000, p=0.5, arrival="saturated"))
    assert all(v == 1.0 for _, v in empty_fraction(tr))
    tr = run(top, g, SimConfig(mac="aloha", T=1000, p=0.5, lam=0.0))
    assert all(v == 0.0 for _, v in empty_fraction(tr))


def test_empty_fraction_trace_replay():
    top, g = line_network(5, 3)
    T, p, lam, seed = 10**5, 0.2, 0.08, 0
    tr = run(top, g, SimConfig(mac="aloha", T=T, p=p, lam=lam, seed=seed))
    L = g.n_links
    coins = np.array([[uniform(seed, l, t) for l in range(L)] for t in range(1, T + 1)])
    acc, opp, busy = 0.0, 0, 0
    series = {}
    for t in range(1, T + 1):
        acc += lam
        k = int(acc)
        acc -= k
        att = coins[t - 1] < p
        for l in range(L):
            if att[l] and not any(att[m] for m in g.neighbors(l)):
                opp += 1
                start = tr.link_backlog[t - 1, l] + (k if l == 0 else 0)
                busy += start > 0
        series[t] = busy / opp if opp else math.nan
    for t, v in empty_fraction(tr):
        assert v == pytest.approx(series[t], abs=1e-15)
    assert tr.nonempty_fraction()[T] == pytest.approx(series[T], abs=1e-15)


def test_occupancy_product_form_smoke():
    top, g = line_network(5, 3)
    tr = run(top, g, SimConfig(mac="csma", T=20000, arrival="saturated", seed=1,
                               track_occupancy=True, csma_stationary_start=True,
                               record=False))
    states = independent_sets(g)
    occ = occupancy_by_state(tr, states)
    assert occ.sum() == pytest.approx(1.0)
    assert np.abs(occ - product_form(states, 0.1, 0.1)).max() < 0.08


def test_capacity_single_centralized_link():
    top, g = single_link()
    cfg = SimConfig(mac="centralized", T=10**4, schedule="0")
    res = capacity_search(top, g, cfg)
    assert res.lam == 1.0 and res.history == ((1.0, True),)


def test_capacity_search_bisection_shape():
    top, g = line_network(5, 3)
    res = capacity_search(top, g, SimConfig(mac="aloha", T=10**4, p=0.2))
    assert len(res.history) == 13 and res.history[0] == (1.0, False)
    feas = [lam for lam, ok in res.history if ok]
    assert res.lam == max(feas)
    assert 0.05 < res.lam < 0.15


def test_cap_stops_run():
    top, g = line_network(5, 3)
    tr = run(top, g, SimConfig(mac="aloha", T=5000, p=0.2, lam=0.5, cap=50))
    assert tr.stopped_at is not None and tr.T_run == tr.stopped_at
    assert tr.total_backlog()[-1] >= 50 > tr.total_backlog()[-2]


def test_factor_report_arithmetic():
    r = factor_report(0.5, 4, 0.1, 1, 4, 1, 1)
    assert r.upper_tightened == 0.5 and r.upper_untightened == 1.0
    r = factor_report(1.0, 4, 0.1, 1, 4, 2, 3)
    assert r.upper_tightened == r.upper_untightened and r.lower_tightened == r.lower_untightened
    r = factor_report(0.0, 4, 0.1, 1, 4, 2, 3)
    assert r.lower_factor_infinite and math.isinf(r.lower_factor)
    with pytest.raises(ParameterError):
        factor_report(0.5, 4, 0.1, 0, 4, 1, 1)


def test_factor_report_from_trace():
    top, g = line_network(5, 3)
    tr = run(top, g, SimConfig(mac="aloha", T=10**4, p=0.2, lam=0.08))
    r = tightened_factor_report(tr, 1.0, 1.0, 1.0, 1.0)
    assert r.n == 5 and r.lam == 0.08
    assert 0 < r.nonempty_fraction < 1
    assert r.upper_tightened < r.upper_untightened


def test_config_json_roundtrip_and_validation():
    cfg = SimConfig(mac="csma", T=50, lam=0.2, nu=0.3, arrival="explicit",
                    explicit=tuple(range(50)))
    assert SimConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ParameterError):
        SimConfig.from_dict({"mac": "aloha", "bogus": 1})
    bad = [dict(mac="tdma"), dict(T=0), dict(lam=-1), dict(p=1.0), dict(policy="drop"),
           dict(mac="centralized"), dict(arrival="explicit", T=3, explicit=(1,)),
           dict(arrival="bernoulli", lam=2.0), dict(C=1.5)]
    for kw in bad:
        with pytest.raises(ParameterError):
            SimConfig(**kw)


def test_trace_csv():
    top, g = line_network(3, 2)
    tr = run(top, g, SimConfig(mac="aloha", T=20, p=0.5, lam=0.3))
    buf = io.StringIO()
    tr.to_csv(buf, times=[1, 20])
    lines = buf.getvalue().splitlines()
    assert lines[0] == "t,node,backlog,delivered,nonempty_fraction"
    assert len(lines) == 1 + 2 * 3
    with pytest.raises(ModelError):
        run(top, g, SimConfig(mac="aloha", T=20, record=False)).to_csv(io.StringIO())


def test_decade_checkpoints():
    assert list(decade_checkpoints(1000)) == [10, 100, 1000]
    assert list(decade_checkpoints(2500)) == [10, 100, 1000, 2500]


def test_graph_topology_mismatch():
    top, _ = line_network(5, 3)
    with pytest.raises(ModelError):
        run(top, ContentionGraph.empty(2), SimConfig())
