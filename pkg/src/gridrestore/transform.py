"""Graph pipeline: distribution network -> job graph (G_w) + precedence dag (G_wd).

Each line outside the energized region becomes a job node.  Node 0 is the
root (the contracted energized region plus the auxiliary home node); its
travel time to every job is zero.  A job's site is the downstream bus of
its line, and inter-job travel is the transport shortest-path distance
between sites divided by the crew speed.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Hashable, Iterable, Mapping

import numpy as np
from scipy.sparse.csgraph import csgraph_from_dense, dijkstra

from .network import DistributionNetwork, Line, TransportGraph, orient_power_flow, validate_radial

ROOT = 0


class UnreachableError(ValueError):
    """Two sites have no transport path between them."""

    def __init__(self, a, b):
        super().__init__(f"no transport path between {a!r} and {b!r}")
        self.pair = (a, b)


@dataclass(frozen=True, eq=False)
class DistanceTable:
    nodes: tuple
    matrix: np.ndarray

    @cached_property
    def _index(self) -> dict:
        return {b: i for i, b in enumerate(self.nodes)}

    def index(self, bus) -> int:
        return self._index[bus]

    def __call__(self, a, b) -> float:
        return float(self.matrix[self._index[a], self._index[b]])

    def __contains__(self, bus) -> bool:
        return bus in self._index


def apsp(transport: TransportGraph) -> DistanceTable:
    """All-pairs shortest-path lengths over the transport graph."""
    nodes = tuple(sorted(transport.nodes, key=repr))
    idx = {b: i for i, b in enumerate(nodes)}
    dense = np.full((len(nodes), len(nodes)), np.inf)
    for u, v, d in transport.edges:
        i, j = idx[u], idx[v]
        if d < dense[i, j]:
            dense[i, j] = dense[j, i] = d
    if len(nodes) == 0:
        return DistanceTable(nodes, np.zeros((0, 0)))
    dist = dijkstra(csgraph_from_dense(dense, null_value=np.inf), directed=False)
    if not np.all(np.isfinite(dist)):
        i, j = np.argwhere(~np.isfinite(dist))[0]
        raise UnreachableError(nodes[i], nodes[j])
    # symmetric by construction; enforce bitwise symmetry against float noise
    dist = np.minimum(dist, dist.T)
    return DistanceTable(nodes, dist)


@dataclass(frozen=True, eq=False)
class WorkingGraph:
    """Complete doubly weighted job graph.

    Arrays are indexed by job node; index 0 is the root.  `travel` holds
    minutes with a zero root row/column.  `root_travel` keeps the raw travel
    time from the energized region's site to each job (used only for the
    parking node of the dummy-node mitigation).
    """

    repair: np.ndarray
    reward: np.ndarray
    travel: np.ndarray
    penalty: np.ndarray | None = None
    damaged: np.ndarray | None = None
    root_travel: np.ndarray | None = None
    dummy: int | None = None
    labels: tuple = ()

    def __post_init__(self):
        rep = np.asarray(self.repair, dtype=float)
        n = rep.shape[0]
        rew = np.asarray(self.reward, dtype=float)
        trv = np.array(self.travel, dtype=float)
        pen = np.zeros(n) if self.penalty is None else np.asarray(self.penalty, dtype=float)
        dmg = np.ones(n, dtype=bool) if self.damaged is None else np.asarray(self.damaged, dtype=bool).copy()
        dmg[ROOT] = False
        rt = np.zeros(n) if self.root_travel is None else np.asarray(self.root_travel, dtype=float)
        if n < 1:
            raise ValueError("working graph needs at least the root node")
        if rew.shape != (n,) or pen.shape != (n,) or trv.shape != (n, n) or rt.shape != (n,):
            raise ValueError("inconsistent working-graph array shapes")
        if rep[ROOT] != 0 or rew[ROOT] != 0:
            raise ValueError("root must have zero repair time and reward")
        if (rep < 0).any() or (rew < 0).any() or (pen < 0).any() or (trv < 0).any():
            raise ValueError("negative repair time, reward, penalty or travel")
        if not np.array_equal(trv, trv.T):
            raise ValueError("travel matrix must be symmetric")
        if trv[ROOT].any() or np.diag(trv).any():
            raise ValueError("travel to/from the root and on the diagonal must be zero")
        for name, arr in (("repair", rep), ("reward", rew), ("travel", trv), ("penalty", pen),
                          ("damaged", dmg), ("root_travel", rt)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        labels = tuple(self.labels) if self.labels else tuple(range(n))
        if len(labels) != n:
            raise ValueError("one label per node required")
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.repair.shape[0]

    @property
    def jobs(self) -> range:
        return range(1, self.n)

    @property
    def damaged_nodes(self) -> list[int]:
        return [i for i in self.jobs if self.damaged[i]]

    @property
    def collapsed(self) -> bool:
        return bool(self.damaged[1:].all())

    def with_dummy(self) -> "WorkingGraph":
        """Append a zero-reward, zero-repair parking node next to the root.

        Travel from the parking node to job j equals the raw travel from the
        energized region to j, so routing through it never shortens a tour.
        """
        n = self.n
        trv = np.zeros((n + 1, n + 1))
        trv[:n, :n] = self.travel
        trv[n, 1:n] = trv[1:n, n] = self.root_travel[1:]
        return WorkingGraph(
            repair=np.append(self.repair, 0.0),
            reward=np.append(self.reward, 0.0),
            travel=trv,
            penalty=np.append(self.penalty, 0.0),
            damaged=np.append(self.damaged, True),
            root_travel=np.append(self.root_travel, 0.0),
            dummy=n,
            labels=self.labels + ("dummy",),
        )


@dataclass(frozen=True)
class PrecedenceDag:
    arcs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "arcs", tuple((int(i), int(j)) for i, j in self.arcs))

    @cached_property
    def parents(self) -> dict[int, tuple[int, ...]]:
        out: dict[int, list[int]] = {}
        for i, j in self.arcs:
            out.setdefault(j, []).append(i)
        return {j: tuple(ps) for j, ps in out.items()}

    @cached_property
    def nodes(self) -> frozenset:
        return frozenset(x for arc in self.arcs for x in arc)

    def ancestors(self, j: int) -> frozenset:
        seen = set()
        stack = list(self.parents.get(j, ()))
        while stack:
            a = stack.pop()
            if a not in seen:
                seen.add(a)
                stack.extend(self.parents.get(a, ()))
        return frozenset(seen)

    def topological_order(self, extra: Iterable[int] = ()) -> list[int]:
        """Kahn ordering; raises ValueError on a cycle."""
        nodes = set(self.nodes) | set(extra)
        indeg = {v: 0 for v in nodes}
        children: dict[int, list[int]] = {v: [] for v in nodes}
        for i, j in self.arcs:
            indeg[j] += 1
            children[i].append(j)
        queue = deque(sorted(v for v in nodes if indeg[v] == 0))
        order = []
        while queue:
            v = queue.popleft()
            order.append(v)
            for c in children[v]:
                indeg[c] -= 1
                if indeg[c] == 0:
                    queue.append(c)
        if len(order) != len(nodes):
            raise ValueError("precedence graph contains a cycle")
        return order


@dataclass(frozen=True)
class JobMap:
    """Job node <-> damaged line, lines oriented (upstream bus, downstream bus)."""

    lines: Mapping[int, tuple] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "lines", dict(self.lines))

    def line(self, node: int) -> tuple:
        return self.lines[node]

    @cached_property
    def _inverse(self) -> dict:
        return {frozenset(uv): node for node, uv in self.lines.items()}

    def node(self, u, v) -> int:
        return self._inverse[frozenset((u, v))]

    def __len__(self) -> int:
        return len(self.lines)


def collapse_undamaged(dag: PrecedenceDag, damaged: Mapping[int, bool]) -> tuple[PrecedenceDag, frozenset]:
    """Remove undamaged non-root nodes, rewiring each damaged node to its
    nearest damaged ancestor (or the root when there is none).

    `dag` must be a rooted out-tree with root 0.
    """
    nodes = set(dag.nodes) | set(damaged) | {ROOT}
    dag.topological_order(nodes)
    parent: dict[int, int] = {}
    for i, j in dag.arcs:
        if j in parent:
            raise ValueError(f"node {j} has more than one parent; expected an out-tree")
        parent[j] = i
    if ROOT in parent:
        raise ValueError("root node must have no parent")
    orphans = sorted(v for v in nodes if v != ROOT and v not in parent)
    if orphans:
        raise ValueError(f"nodes {orphans} are not connected to the root")

    def is_damaged(v):
        return v != ROOT and bool(damaged.get(v, False))

    # prune undamaged leaves repeatedly
    children: dict[int, set] = {v: set() for v in nodes}
    for j, i in parent.items():
        children[i].add(j)
    alive = set(nodes)
    leaves = deque(sorted(v for v in nodes if v != ROOT and not children[v] and not is_damaged(v)))
    while leaves:
        v = leaves.popleft()
        alive.discard(v)
        p = parent[v]
        children[p].discard(v)
        if p != ROOT and not children[p] and not is_damaged(p):
            leaves.append(p)

    # nearest damaged ancestor for every surviving damaged node
    arcs = []
    for j in sorted(v for v in alive if is_damaged(v)):
        a = parent[j]
        while a != ROOT and not is_damaged(a):
            a = parent[a]
        arcs.append((a, j))
    deleted = frozenset(v for v in nodes if v != ROOT and not is_damaged(v))
    return PrecedenceDag(tuple(arcs)), deleted


def _check_energized(net: DistributionNetwork, parent: dict, energized: frozenset):
    if net.source not in energized:
        raise ValueError("energized region must contain the source")
    unknown = energized - net.nodes
    if unknown:
        raise ValueError(f"energized buses not in network: {sorted(unknown, key=repr)!r}")
    for b in energized:
        if b != net.source and parent[b] not in energized:
            raise ValueError(f"energized region is not connected at bus {b!r}")


def build_working_graphs(
    net: DistributionNetwork,
    transport: TransportGraph | None = None,
    energized: Iterable[Hashable] | None = None,
    speed: float = 1.0,
    *,
    collapse: bool = True,
    distances: DistanceTable | None = None,
) -> tuple[WorkingGraph, PrecedenceDag, JobMap]:
    """Build (G_w, G_wd, job map) for the lines outside the energized region."""
    if speed <= 0:
        raise ValueError("speed must be positive")
    report = validate_radial(net)
    if not report.ok:
        raise ValueError(f"network is not radial: {report.violations[0].detail}")
    energized = frozenset([net.source] if energized is None else energized)
    arcs_by_line = dict(zip(net.lines, orient_power_flow(net)))
    parent_bus = {c: p for p, c in arcs_by_line.values()}
    _check_energized(net, parent_bus, energized)

    # BFS from the energized region so that upstream lines get smaller ids
    child_lines: dict = {}
    for ln in net.lines:
        p, c = arcs_by_line[ln]
        child_lines.setdefault(p, []).append((ln, c))
    external: list[tuple[Line, tuple]] = []
    queue = deque([net.source])
    while queue:
        b = queue.popleft()
        for ln, c in child_lines.get(b, ()):
            queue.append(c)
            if b in energized and c in energized:
                if ln.damaged:
                    raise ValueError(f"damaged line ({ln.u}, {ln.v}) lies inside the energized region")
                continue
            external.append((ln, (b, c)))

    pre_id = {uv[1]: k + 1 for k, (_, uv) in enumerate(external)}  # keyed by downstream bus
    pre_arcs = []
    for ln, (p, c) in external:
        pre_arcs.append((ROOT if p in energized else pre_id[p], pre_id[c]))
    damaged = {pre_id[c]: ln.damaged for ln, (_, c) in external}

    if collapse:
        dag, deleted = collapse_undamaged(PrecedenceDag(tuple(pre_arcs)), damaged)
        keep = [k + 1 for k in range(len(external)) if (k + 1) not in deleted]
        renum = {ROOT: ROOT, **{old: new for new, old in enumerate(keep, start=1)}}
        dag = PrecedenceDag(tuple(sorted((renum[i], renum[j]) for i, j in dag.arcs)))
    else:
        keep = [k + 1 for k in range(len(external))]
        dag = PrecedenceDag(tuple(sorted(pre_arcs)))

    chosen = [external[k - 1] for k in keep]
    n = len(chosen) + 1
    if transport is None:
        transport = TransportGraph.from_network(net)
    table = distances if distances is not None else apsp(transport)
    sites = [c for _, (_, c) in chosen]
    for s in sites + [net.source]:
        if s not in table:
            raise UnreachableError(s, net.source)
    idx = np.array([table.index(s) for s in sites], dtype=int)
    dist = np.zeros((n, n))
    if len(sites):
        dist[1:, 1:] = table.matrix[np.ix_(idx, idx)]
    travel = dist / speed
    np.fill_diagonal(travel, 0.0)
    root_travel = np.zeros(n)
    if len(sites):
        root_travel[1:] = table.matrix[table.index(net.source), idx] / speed

    gw = WorkingGraph(
        repair=np.array([0.0] + [ln.repair_time for ln, _ in chosen]),
        reward=np.array([0.0] + [ln.reward for ln, _ in chosen]),
        travel=travel,
        penalty=np.array([0.0] + [ln.penalty for ln, _ in chosen]),
        damaged=np.array([False] + [ln.damaged for ln, _ in chosen]),
        root_travel=root_travel,
        labels=("root",) + tuple(uv for _, uv in chosen),
    )
    jobs = JobMap({k: uv for k, (_, uv) in enumerate(chosen, start=1) if gw.damaged[k]})
    return gw, dag, jobs
