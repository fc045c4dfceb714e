import itertools
import json

import numpy as np
import pytest

from transcap.contention import (
    ContentionGraph, Topology, aloha_probability, independent_sets, line_network,
    max_node_degree, minimum_range, protocol_contention, random_network, shortest_routes,
)
from transcap.errors import CapacityError, ConnectivityError, ModelError

from oracles import independent_subsets, min_range_scan


def test_line_5_cr3():
    top, g = line_network(5, 3)
    assert top.n_links == 4 and g.n_links == 4
    non_edges = [p for p in itertools.combinations(range(4), 2) if not g.adjacent(*p)]
    assert non_edges == [(0, 3)]
    assert top.routes == ((0, 1, 2, 3),)
    assert top.route_nodes(0) == [0, 1, 2, 3, 4]


def test_line_2_and_6():
    top, g = line_network(2, 3)
    assert top.n_links == 1 and g.edges == frozenset()
    _, g6 = line_network(6, 2)
    assert g6.edges == {(0, 1), (1, 2), (2, 3), (3, 4)}
    with pytest.raises(ModelError):
        line_network(1, 2)


def test_graph_validation_and_csr():
    with pytest.raises(ModelError):
        ContentionGraph(2, frozenset({(0, 0)}))
    with pytest.raises(ModelError):
        ContentionGraph(2, frozenset({(0, 2)}))
    g = ContentionGraph(3, frozenset({(1, 0), (2, 1)}))
    assert g.edges == {(0, 1), (1, 2)}
    ptr, idx = g.csr()
    assert list(ptr) == [0, 1, 3, 4] and list(idx) == [1, 0, 2, 1]
    assert g.is_independent([0, 2]) and not g.is_independent([0, 1])
    assert g == ContentionGraph(3, frozenset({(0, 1), (1, 2)}))


def test_independent_sets_examples():
    _, g = line_network(5, 3)
    assert independent_sets(g) == [(), (0,), (1,), (2,), (3,), (0, 3)]
    assert len(independent_sets(ContentionGraph.complete(7))) == 8
    _, g6 = line_network(6, 2)
    assert len(independent_sets(g6)) == 13
    with pytest.raises(CapacityError) as exc:
        independent_sets(ContentionGraph.empty(12), max_states=100)
    assert exc.value.count > 100


def test_independent_sets_match_power_set_oracle():
    rng = np.random.default_rng(3)
    for _ in range(30):
        m = int(rng.integers(1, 13))
        edges = {(i, j) for i in range(m) for j in range(i + 1, m) if rng.random() < 0.3}
        got = independent_sets(ContentionGraph(m, frozenset(edges)))
        want = sorted(independent_subsets(m, edges), key=lambda s: (len(s), s))
        assert got == want


def test_square_corner_routing():
    pos = [(0, 0), (1, 0), (0, 1), (1, 1)]
    top = Topology.from_paths(pos, [(0, 3)], [[0, 1, 3]], 1.0)
    assert shortest_routes(top, 1.0) == [[0, 1, 3]]
    with pytest.raises(ConnectivityError) as exc:
        shortest_routes(top, 0.5)
    assert exc.value.pair == (0, 3)


def test_line_route_is_chain():
    top, _ = line_network(6, 2)
    assert shortest_routes(top, 1.0) == [[0, 1, 2, 3, 4, 5]]


def test_random_network_two_nodes():
    top, g, r = random_network(2, seed=5)
    assert r == pytest.approx(np.linalg.norm(top.positions[0] - top.positions[1]))
    assert sorted(top.links) == [(0, 1), (1, 0)]
    assert g.edges == {(0, 1)}


@pytest.mark.parametrize("seed", [0, 7, 11])
def test_random_network_range_oracle_and_feasibility(seed):
    top, g, r = random_network(10, seed)
    assert r == min_range_scan(top.positions, top.sd_pairs)
    for a, b in top.links:
        assert np.linalg.norm(top.positions[a] - top.positions[b]) <= r
    assert g == protocol_contention(top, r)
    assert minimum_range(top.positions, top.sd_pairs) == r


def test_random_network_deterministic():
    a = random_network(10, 7)
    b = random_network(10, 7)
    assert a[0].to_json() == b[0].to_json() and a[1] == b[1] and a[2] == b[2]
    assert a[0].routes == b[0].routes


def test_topology_json_roundtrip():
    top, g, r = random_network(10, 7)
    top2, g2 = Topology.from_json(top.to_json())
    assert np.array_equal(top.positions, top2.positions)
    assert top.routes == top2.routes and top.links == top2.links and g == g2
    with pytest.raises(ModelError):
        Topology.from_json(json.dumps({"nodes": [[0, 0]], "sd_pairs": [], "extra": 1}))


def test_topology_rejects_broken_routes():
    pos = [(0, 0), (1, 0), (2, 0)]
    with pytest.raises(ModelError):
        Topology(pos, ((0, 1), (1, 2)), ((0, 2),), ((0,),))
    with pytest.raises(ModelError):
        Topology(pos, ((0, 1), (1, 2)), ((0, 0),), ((0,),))


def test_protocol_contention_line():
    top, _ = line_network(5, 3)
    g = protocol_contention(top, 1.0)
    # endpoints within one unit: links sharing a node or one apart
    assert g.edges == {(0, 1), (1, 2), (2, 3), (0, 2), (1, 3)}


def test_aloha_probability_from_degree():
    top, _ = line_network(5, 3)
    assert max_node_degree(top) == 2
    assert aloha_probability(top) == 0.5
    top, _, r = random_network(10, 7)
    assert aloha_probability(top) == pytest.approx(1.0 / max(2, max_node_degree(top, r)))
