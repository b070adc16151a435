import random
from collections import deque

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrestore.network import (
    DistributionNetwork,
    Line,
    TransportGraph,
    orient_power_flow,
    tree_parents,
    validate_radial,
)


def chain(*extra):
    lines = [Line(1, 2), Line(2, 3), Line(3, 4), *extra]
    return DistributionNetwork.from_lines(lines, source=1)


def test_chain_is_radial():
    assert validate_radial(chain()).ok


def test_extra_edge_closes_cycle():
    report = validate_radial(chain(Line(1, 4)))
    assert report.kinds() == {"cycle"}


def test_disjoint_edges_disconnected():
    net = DistributionNetwork.from_lines([Line(1, 2), Line(3, 4)], source=1)
    assert "disconnected" in validate_radial(net).kinds()


def test_multiple_sources_reported():
    report = validate_radial(chain(), sources=[1, 3])
    assert "source" in report.kinds()


def test_parallel_lines_are_a_cycle():
    net = DistributionNetwork.from_lines([Line(1, 2), Line(2, 1)], source=1)
    assert validate_radial(net).kinds() == {"cycle"}


def test_undamaged_line_attributes_checked():
    with pytest.raises(ValueError):
        Line(1, 2, repair_time=5.0)
    with pytest.raises(ValueError):
        Line(1, 2, reward=1.0)
    with pytest.raises(ValueError):
        Line(1, 1)
    with pytest.raises(ValueError):
        Line(1, 2, length=-1)
    assert Line(1, 2, damaged=True, repair_time=5.0, reward=1.0).key == frozenset({1, 2})


def test_chain_orientation():
    assert orient_power_flow(chain()) == [(1, 2), (2, 3), (3, 4)]


def test_reverse_stored_lines_are_oriented_from_source():
    net = DistributionNetwork.from_lines([Line(2, 1), Line(3, 2), Line(4, 3)], source=1)
    assert orient_power_flow(net) == [(1, 2), (2, 3), (3, 4)]


def test_star_from_center():
    net = DistributionNetwork.from_lines([Line(k, 0) for k in range(1, 6)], source=0)
    assert orient_power_flow(net) == [(0, k) for k in range(1, 6)]


def test_orientation_rejects_cycles():
    with pytest.raises(ValueError, match="not radial"):
        orient_power_flow(chain(Line(1, 4)))


def test_transport_mirror_and_negative_length():
    net = chain()
    tg = TransportGraph.from_network(net)
    assert tg.nodes == net.nodes and len(tg.edges) == 3
    with pytest.raises(ValueError):
        TransportGraph({1, 2}, [(1, 2, -3.0)])


def _bfs_oracle(edges, source):
    adj = {}
    for u, v in edges:
        adj.setdefault(u, []).append(v)
        adj.setdefault(v, []).append(u)
    depth = {source: 0}
    q = deque([source])
    while q:
        b = q.popleft()
        for nb in adj[b]:
            if nb not in depth:
                depth[nb] = depth[b] + 1
                q.append(nb)
    return [(u, v) if depth[u] < depth[v] else (v, u) for u, v in edges]


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 40), st.integers(0, 10_000))
def test_random_tree_orientation_matches_bfs(n, seed):
    rng = random.Random(seed)
    edges = []
    for v in range(1, n):
        u = rng.randrange(v)
        edges.append((u, v) if rng.random() < 0.5 else (v, u))
    rng.shuffle(edges)
    source = rng.randrange(n)
    net = DistributionNetwork.from_lines([Line(u, v) for u, v in edges], source)
    arcs = orient_power_flow(net)
    assert len(arcs) == len(edges)
    assert arcs == _bfs_oracle(edges, source)
    parent = tree_parents(net)
    assert all(parent[c] == p for p, c in arcs)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 12), st.lists(st.tuples(st.integers(0, 11), st.integers(0, 11)), max_size=16))
def test_radial_iff_tree(n, pairs):
    edges = [(u % n, v % n) for u, v in pairs if u % n != v % n]
    net = DistributionNetwork.from_lines([Line(u, v) for u, v in edges], 0, nodes=range(n))
    # connectivity by union of BFS reach
    adj = {b: set() for b in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    seen, q = {0}, deque([0])
    while q:
        b = q.popleft()
        for nb in adj[b] - seen:
            seen.add(nb)
            q.append(nb)
    expected = len(edges) == n - 1 and len(seen) == n
    assert validate_radial(net).ok == expected
