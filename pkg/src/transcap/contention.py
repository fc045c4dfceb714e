"""Topologies, contention graphs, independent sets and hop-count routing."""

import json
from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import CapacityError, ConnectivityError, ModelError

DEFAULT_MAX_STATES = 20_000


@dataclass(frozen=True, eq=False)
class ContentionGraph:
    """Undirected conflict relation on link indices ``0..n_links-1``."""

    n_links: int
    edges: frozenset

    def __post_init__(self):
        norm = set()
        for a, b in self.edges:
            a, b = int(a), int(b)
            if a == b:
                raise ModelError(f"self-loop on link {a}")
            if not (0 <= a < self.n_links and 0 <= b < self.n_links):
                raise ModelError(f"edge ({a},{b}) outside 0..{self.n_links - 1}")
            norm.add((min(a, b), max(a, b)))
        object.__setattr__(self, "edges", frozenset(norm))
        nbrs = [[] for _ in range(self.n_links)]
        for a, b in norm:
            nbrs[a].append(b)
            nbrs[b].append(a)
        object.__setattr__(self, "_nbrs", tuple(tuple(sorted(x)) for x in nbrs))

    @classmethod
    def complete(cls, m):
        return cls(m, frozenset((i, j) for i in range(m) for j in range(i + 1, m)))

    @classmethod
    def empty(cls, m):
        return cls(m, frozenset())

    def neighbors(self, i):
        return self._nbrs[i]

    def degree(self, i):
        return len(self._nbrs[i])

    def adjacent(self, i, j):
        return (min(i, j), max(i, j)) in self.edges

    def is_independent(self, links):
        links = sorted(links)
        return all(
            not self.adjacent(a, b) for k, a in enumerate(links) for b in links[k + 1:]
        )

    def csr(self):
        """Adjacency as ``(ptr, idx)`` int64 arrays for the kernels."""
        ptr = np.zeros(self.n_links + 1, dtype=np.int64)
        for i, nb in enumerate(self._nbrs):
            ptr[i + 1] = ptr[i] + len(nb)
        idx = np.fromiter(
            (j for nb in self._nbrs for j in nb), dtype=np.int64, count=int(ptr[-1])
        )
        return ptr, idx

    def __eq__(self, other):
        if not isinstance(other, ContentionGraph):
            return NotImplemented
        return self.n_links == other.n_links and self.edges == other.edges


@dataclass(frozen=True, eq=False)
class Topology:
    """Nodes, directed links and one route (list of link indices) per flow."""

    positions: np.ndarray
    links: tuple
    sd_pairs: tuple
    routes: tuple
    range: float = None

    def __post_init__(self):
        pos = np.asarray(self.positions, dtype=float)
        pos.flags.writeable = False
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "links", tuple(tuple(map(int, l)) for l in self.links))
        object.__setattr__(self, "sd_pairs", tuple(tuple(map(int, p)) for p in self.sd_pairs))
        object.__setattr__(self, "routes", tuple(tuple(map(int, r)) for r in self.routes))
        if len(self.routes) != len(self.sd_pairs):
            raise ModelError("every sd pair needs exactly one route")
        for (s, d), route in zip(self.sd_pairs, self.routes):
            if s == d:
                raise ModelError(f"flow from node {s} to itself")
            if not route:
                raise ModelError(f"empty route for pair ({s},{d})")
            if self.links[route[0]][0] != s or self.links[route[-1]][1] != d:
                raise ModelError(f"route for ({s},{d}) does not join its endpoints")
            for a, b in zip(route, route[1:]):
                if self.links[a][1] != self.links[b][0]:
                    raise ModelError(f"route for ({s},{d}) is not connected")

    @property
    def n_nodes(self):
        return len(self.positions)

    @property
    def n_links(self):
        return len(self.links)

    def link_sources(self):
        return np.array([a for a, _ in self.links], dtype=np.int64)

    def route_nodes(self, flow):
        route = self.routes[flow]
        return [self.links[route[0]][0]] + [self.links[l][1] for l in route]

    @classmethod
    def from_paths(cls, positions, sd_pairs, paths, radius=None):
        """Collect the directed links used by node paths and index them."""
        links = sorted({(a, b) for p in paths for a, b in zip(p, p[1:])})
        index = {l: i for i, l in enumerate(links)}
        routes = [[index[(a, b)] for a, b in zip(p, p[1:])] for p in paths]
        return cls(positions, tuple(links), tuple(sd_pairs), tuple(routes), radius)

    def to_json(self):
        data = {
            "nodes": [[float(x), float(y)] for x, y in self.positions],
            "sd_pairs": [[s, d] for s, d in self.sd_pairs],
            "range": None if self.range is None else float(self.range),
        }
        return json.dumps(data)

    @classmethod
    def from_json(cls, text, interference_factor=1.0):
        """Rebuild topology and contention graph from ``to_json`` output.

        Routes and contention edges are recomputed from positions and range.
        """
        data = json.loads(text)
        unknown = set(data) - {"nodes", "sd_pairs", "range"}
        if unknown:
            raise ModelError(f"unknown topology keys: {sorted(unknown)}")
        pos = np.asarray(data["nodes"], dtype=float)
        pairs = [tuple(p) for p in data["sd_pairs"]]
        radius = data.get("range")
        if radius is None:
            radius = minimum_range(pos, pairs)
        paths = _shortest_paths(pos, pairs, radius)
        top = cls.from_paths(pos, pairs, paths, radius)
        return top, protocol_contention(top, radius * interference_factor)


def line_network(n, c_r):
    """``n`` nodes in a row, link ``i`` is ``i -> i+1``; conflict iff ``0<|i-j|<c_r``."""
    if n < 2:
        raise ModelError(f"a line network needs at least 2 nodes, got {n}")
    if c_r < 1:
        raise ModelError(f"contention range must be >= 1, got {c_r}")
    m = n - 1
    pos = np.column_stack([np.arange(n, dtype=float), np.zeros(n)])
    links = tuple((i, i + 1) for i in range(m))
    top = Topology(pos, links, ((0, n - 1),), (tuple(range(m)),), 1.0)
    edges = frozenset((i, j) for i in range(m) for j in range(i + 1, m) if j - i < c_r)
    return top, ContentionGraph(m, edges)


def independent_sets(g, max_states=DEFAULT_MAX_STATES):
    """All independent sets of ``g`` (empty set included), by size then lexicographic."""
    m = g.n_links
    nbr_mask = [0] * m
    for a, b in g.edges:
        nbr_mask[a] |= 1 << b
        nbr_mask[b] |= 1 << a
    found = []

    def grow(start, chosen, blocked):
        found.append(tuple(chosen))
        if len(found) > max_states:
            raise CapacityError(
                f"independent-set enumeration exceeded max_states={max_states}",
                count=len(found),
            )
        for v in range(start, m):
            if not (blocked >> v) & 1:
                chosen.append(v)
                grow(v + 1, chosen, blocked | nbr_mask[v])
                chosen.pop()

    grow(0, [], 0)
    found.sort(key=lambda s: (len(s), s))
    return found


def _pairwise(pos):
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt((diff ** 2).sum(axis=-1))


def _bfs_path(adj, s, d):
    # neighbours are visited in index order, so ties go to the lowest index
    parent = {s: None}
    queue = deque([s])
    while queue:
        u = queue.popleft()
        if u == d:
            break
        for v in adj[u]:
            if v not in parent:
                parent[v] = u
                queue.append(v)
    if d not in parent:
        return None
    path = [d]
    while parent[path[-1]] is not None:
        path.append(parent[path[-1]])
    return path[::-1]


def _unit_disk(pos, radius):
    dist = _pairwise(pos)
    n = len(pos)
    return [[v for v in range(n) if v != u and dist[u, v] <= radius] for u in range(n)]


def _connected(pos, pairs, radius):
    adj = _unit_disk(pos, radius)
    label = [-1] * len(pos)
    comp = 0
    for s in range(len(pos)):
        if label[s] >= 0:
            continue
        label[s] = comp
        queue = deque([s])
        while queue:
            u = queue.popleft()
            for v in adj[u]:
                if label[v] < 0:
                    label[v] = comp
                    queue.append(v)
        comp += 1
    return all(label[s] == label[d] for s, d in pairs)


def minimum_range(positions, sd_pairs):
    """Smallest pairwise distance at which every sd pair is connected."""
    pos = np.asarray(positions, dtype=float)
    n = len(pos)
    iu = np.triu_indices(n, k=1)
    cand = np.unique(_pairwise(pos)[iu])
    lo, hi = 0, len(cand) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _connected(pos, sd_pairs, cand[mid]):
            hi = mid
        else:
            lo = mid + 1
    return float(cand[lo])


def _shortest_paths(pos, pairs, radius):
    adj = _unit_disk(pos, radius)
    paths = []
    for s, d in pairs:
        p = _bfs_path(adj, s, d)
        if p is None:
            raise ConnectivityError(f"no path from {s} to {d} at range {radius}", (s, d))
        paths.append(p)
    return paths


def shortest_routes(topology, radius):
    """Minimum-hop node paths for every sd pair of ``topology`` at ``radius``."""
    return _shortest_paths(topology.positions, topology.sd_pairs, radius)


def protocol_contention(topology, radius):
    """Two links conflict iff some endpoint of one lies within ``radius`` of the other."""
    pos = topology.positions
    dist = _pairwise(pos)
    ends = [np.array(l) for l in topology.links]
    m = topology.n_links
    edges = set()
    for i in range(m):
        for j in range(i + 1, m):
            if dist[np.ix_(ends[i], ends[j])].min() <= radius:
                edges.add((i, j))
    return ContentionGraph(m, frozenset(edges))


def random_network(n, seed, interference_factor=1.0):
    """Uniform nodes on the unit square with one uniform destination per source.

    Returns ``(topology, graph, r_star)`` where ``r_star`` is the minimum
    transmission range connecting every pair.
    """
    if n < 2:
        raise ModelError(f"a random network needs at least 2 nodes, got {n}")
    rng = np.random.default_rng(seed)
    pos = rng.random((n, 2))
    pairs = []
    for s in range(n):
        d = int(rng.integers(n - 1))
        pairs.append((s, d + 1 if d >= s else d))
    r_star = minimum_range(pos, pairs)
    paths = _shortest_paths(pos, pairs, r_star)
    top = Topology.from_paths(pos, pairs, paths, r_star)
    return top, protocol_contention(top, r_star * interference_factor), r_star


def max_node_degree(topology, radius=None):
    """Largest number of neighbours any node has within ``radius``."""
    radius = topology.range if radius is None else radius
    if radius is None:
        raise ModelError("topology has no range; pass one explicitly")
    return max(len(nb) for nb in _unit_disk(topology.positions, radius))


def aloha_probability(topology, radius=None):
    """Transmit probability ``1 / max node degree``, kept below 1."""
    return 1.0 / max(2, max_node_degree(topology, radius))
