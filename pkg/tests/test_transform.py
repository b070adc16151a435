import random
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrestore.feeders import load_feeder, read_feeder
from gridrestore.network import DistributionNetwork, Line, TransportGraph
from gridrestore.transform import (
    ROOT,
    PrecedenceDag,
    UnreachableError,
    WorkingGraph,
    apsp,
    build_working_graphs,
    collapse_undamaged,
)

from oracles import dijkstra_all, nearest_damaged_ancestor_arcs, random_out_tree

FIG4_ARCS = ((0, 1), (1, 6), (6, 11), (0, 2), (2, 7), (2, 10), (0, 3), (3, 8), (8, 12),
             (0, 4), (4, 9), (9, 13), (13, 14), (0, 5))
FIG4_DAMAGED = {3, 4, 5, 7, 12, 14}


# ---------------------------------------------------------------- apsp

def test_triangle_takes_direct_side():
    d = apsp(TransportGraph("abc", [("a", "b", 3), ("b", "c", 4), ("a", "c", 5)]))
    assert d("a", "c") == 5.0


def test_path_sums_lengths():
    d = apsp(TransportGraph({1, 2, 3}, [(1, 2, 10), (2, 3, 20)]))
    assert d(1, 3) == 30.0 and d(3, 1) == 30.0


def test_zero_length_edges_are_kept():
    d = apsp(TransportGraph({1, 2, 3}, [(1, 2, 0), (2, 3, 5)]))
    assert d(1, 2) == 0.0 and d(1, 3) == 5.0


def test_unreachable_pair_is_named():
    with pytest.raises(UnreachableError) as err:
        apsp(TransportGraph({1, 2, 3}, [(1, 2, 1.0)]))
    assert 3 in err.value.pair


def test_random_graph_matches_heap_dijkstra():
    rng = random.Random(5)
    nodes = list(range(50))
    edges = [(v, rng.randrange(v), rng.uniform(0, 100)) for v in range(1, 50)]
    edges += [(rng.randrange(50), rng.randrange(50), rng.uniform(0, 100)) for _ in range(80)]
    edges = [(u, v, d) for u, v, d in edges if u != v]
    table = apsp(TransportGraph(nodes, edges))
    oracle = dijkstra_all(nodes, edges)
    for a in nodes:
        for b in nodes:
            assert table(a, b) == pytest.approx(oracle[(a, b)], rel=1e-12, abs=1e-12)
    assert np.array_equal(table.matrix, table.matrix.T)


# ---------------------------------------------------------------- collapse

def test_fig4_collapse():
    dag = PrecedenceDag(FIG4_ARCS)
    damaged = {v: v in FIG4_DAMAGED for v in range(1, 15)}
    out, deleted = collapse_undamaged(dag, damaged)
    assert set(out.arcs) == {(0, 7), (0, 3), (3, 12), (0, 4), (4, 14), (0, 5)}
    assert deleted == frozenset(range(1, 15)) - FIG4_DAMAGED


def test_fully_damaged_is_identity():
    dag = PrecedenceDag(FIG4_ARCS)
    out, deleted = collapse_undamaged(dag, {v: True for v in range(1, 15)})
    assert set(out.arcs) == set(FIG4_ARCS) and not deleted


def test_cyclic_input_rejected():
    with pytest.raises(ValueError):
        collapse_undamaged(PrecedenceDag(((0, 1), (1, 2), (2, 1))), {1: True, 2: True})


def test_multiple_parents_rejected():
    with pytest.raises(ValueError):
        collapse_undamaged(PrecedenceDag(((0, 1), (0, 2), (1, 3), (2, 3))), {3: True})


@settings(max_examples=150, deadline=None)
@given(st.integers(1, 30), st.integers(0, 2**32 - 1), st.floats(0.0, 1.0))
def test_collapse_matches_ancestor_walk(k, seed, p):
    rng = random.Random(seed)
    parent = random_out_tree(rng, k)
    damaged = {v: rng.random() < p for v in parent}
    dag = PrecedenceDag(tuple((parent[v], v) for v in parent))
    out, deleted = collapse_undamaged(dag, damaged)
    assert set(out.arcs) == nearest_damaged_ancestor_arcs(parent, damaged)
    assert len(out.arcs) == sum(damaged.values())
    assert deleted == frozenset(v for v in parent if not damaged[v])
    again, _ = collapse_undamaged(out, {v: True for v in out.nodes if v != ROOT})
    assert set(again.arcs) == set(out.arcs)


# ---------------------------------------------------------------- working graphs

def fig2():
    spec = read_feeder("fig2")
    net, tr = load_feeder("fig2")
    return net, tr, spec.energized


def test_fig2_working_graph_size():
    net, tr, energized = fig2()
    gw, dag, jobs = build_working_graphs(net, tr, energized)
    assert gw.n == 7
    assert len(list(combinations(range(gw.n), 2))) == 21
    assert gw.collapsed and len(jobs) == 6
    labels = {jobs.line(j) for j in gw.jobs}
    assert labels == {(2, 4), (2, 5), (3, 6), (3, 7), (4, 8), (7, 9)}
    root_kids = {jobs.line(j) for i, j in dag.arcs if i == ROOT}
    assert root_kids == {(2, 4), (2, 5), (3, 6), (3, 7)}
    assert (jobs.node(2, 4), jobs.node(4, 8)) in dag.arcs
    assert (jobs.node(3, 7), jobs.node(7, 9)) in dag.arcs


def test_chain_precedence():
    net, tr = load_feeder("chain4")
    gw, dag, jobs = build_working_graphs(net, tr)
    assert gw.n == 4
    assert dag.arcs == ((0, 1), (1, 2), (2, 3))
    assert [jobs.line(j) for j in (1, 2, 3)] == [(1, 2), (2, 3), (3, 4)]


def test_travel_is_exact_distance_over_speed():
    net, tr = load_feeder("ieee13")
    dmg = net.replace_lines([Line(ln.u, ln.v, ln.length, True, 40.0, 1.0) for ln in net.lines])
    gw, _, jobs = build_working_graphs(dmg, tr, speed=141)
    table = apsp(tr)
    for i in gw.jobs:
        for j in gw.jobs:
            expect = table(jobs.line(i)[1], jobs.line(j)[1]) / 141 if i != j else 0.0
            assert gw.travel[i, j] == expect
    assert not gw.travel[ROOT].any() and not gw.travel[:, ROOT].any()
    assert np.array_equal(gw.travel, gw.travel.T)
    off = gw.travel[1:, 1:][~np.eye(gw.n - 1, dtype=bool)]
    # the 1 ft link (633, 634) sets the shortest hop
    assert off.min() == pytest.approx(0.0071, abs=5e-5)


def test_speed_scales_inversely():
    net, tr = load_feeder("ieee13")
    dmg = net.replace_lines([Line(ln.u, ln.v, ln.length, True, 40.0, 1.0) for ln in net.lines])
    a, _, _ = build_working_graphs(dmg, tr, speed=100)
    b, _, _ = build_working_graphs(dmg, tr, speed=200)
    assert np.allclose(a.travel, 2 * b.travel, rtol=1e-15, atol=0)


def test_star_precedence_all_from_root():
    lines = [Line(0, k, 10.0, True, 5.0, 1.0) for k in range(1, 8)]
    net = DistributionNetwork.from_lines(lines, source=0)
    gw, dag, _ = build_working_graphs(net)
    assert all(i == ROOT for i, _ in dag.arcs) and len(dag.arcs) == 7


def test_partial_damage_is_collapsed_away():
    # 1-2 undamaged, 2-3 damaged, 2-4 undamaged leaf
    lines = [Line(1, 2, 5.0), Line(2, 3, 5.0, True, 10.0, 1.0), Line(2, 4, 5.0)]
    net = DistributionNetwork.from_lines(lines, 1)
    gw, dag, jobs = build_working_graphs(net)
    assert gw.n == 2 and dag.arcs == ((0, 1),) and jobs.line(1) == (2, 3)
    full, dag_full, _ = build_working_graphs(net, collapse=False)
    assert full.n == 4 and not full.collapsed


def test_energized_region_checks():
    net, tr, _ = fig2()
    with pytest.raises(ValueError, match="inside the energized region"):
        build_working_graphs(net, tr, energized={1, 2, 3, 4})
    with pytest.raises(ValueError, match="source"):
        build_working_graphs(net, tr, energized={2})
    with pytest.raises(ValueError, match="not connected"):
        build_working_graphs(net, tr, energized={1, 4})


def test_working_graph_validation():
    with pytest.raises(ValueError):
        WorkingGraph(repair=[0, 1], reward=[0, 1], travel=[[0, 0], [1, 0]])
    with pytest.raises(ValueError):
        WorkingGraph(repair=[0, 1, 1], reward=[0, 1, 1], travel=[[0, 1, 0], [1, 0, 1], [0, 1, 0]])
    with pytest.raises(ValueError):
        WorkingGraph(repair=[1, 1], reward=[0, 1], travel=np.zeros((2, 2)))


def test_dummy_parking_node():
    net, tr = load_feeder("ieee13")
    dmg = net.replace_lines([Line(ln.u, ln.v, ln.length, True, 40.0, 1.0) for ln in net.lines])
    gw, _, _ = build_working_graphs(dmg, tr, speed=141)
    g = gw.with_dummy()
    d = g.dummy
    assert d == gw.n and g.n == gw.n + 1
    assert g.repair[d] == 0 and g.reward[d] == 0 and g.travel[ROOT, d] == 0
    # triangle inequality through the parking node
    for i in gw.jobs:
        for j in gw.jobs:
            assert g.travel[i, j] <= g.travel[i, d] + g.travel[d, j] + 1e-9
