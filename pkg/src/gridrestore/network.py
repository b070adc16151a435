"""Physical distribution network and its transportation counterpart."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

Bus = Hashable


@dataclass(frozen=True)
class Line:
    u: Bus
    v: Bus
    length: float = 1.0
    damaged: bool = False
    repair_time: float = 0.0
    reward: float = 0.0
    penalty: float = 0.0

    def __post_init__(self):
        if self.u == self.v:
            raise ValueError(f"self-loop on bus {self.u!r}")
        if self.length < 0:
            raise ValueError(f"line ({self.u}, {self.v}) has negative length")
        if min(self.repair_time, self.reward, self.penalty) < 0:
            raise ValueError(f"line ({self.u}, {self.v}) has a negative attribute")
        if not self.damaged and (self.repair_time != 0 or self.reward != 0):
            raise ValueError(
                f"undamaged line ({self.u}, {self.v}) must have zero repair time and reward"
            )

    @property
    def key(self) -> frozenset:
        return frozenset((self.u, self.v))


@dataclass(frozen=True)
class DistributionNetwork:
    """Radial network of buses and lines fed from a single source bus.

    Lines are stored undirected; `orient_power_flow` derives directions.
    """

    nodes: frozenset
    lines: tuple[Line, ...]
    source: Bus

    def __post_init__(self):
        object.__setattr__(self, "nodes", frozenset(self.nodes))
        object.__setattr__(self, "lines", tuple(self.lines))

    @classmethod
    def from_lines(cls, lines: Iterable[Line], source: Bus, nodes: Iterable[Bus] = ()):
        lines = tuple(lines)
        buses = set(nodes)
        for ln in lines:
            buses.update((ln.u, ln.v))
        buses.add(source)
        return cls(frozenset(buses), lines, source)

    @property
    def damaged_lines(self) -> tuple[Line, ...]:
        return tuple(ln for ln in self.lines if ln.damaged)

    def line(self, u: Bus, v: Bus) -> Line:
        key = frozenset((u, v))
        for ln in self.lines:
            if ln.key == key:
                return ln
        raise KeyError(f"no line between {u!r} and {v!r}")

    def replace_lines(self, lines: Iterable[Line]) -> "DistributionNetwork":
        return DistributionNetwork(self.nodes, tuple(lines), self.source)


@dataclass(frozen=True)
class TransportGraph:
    nodes: frozenset
    edges: tuple[tuple[Bus, Bus, float], ...]

    def __post_init__(self):
        object.__setattr__(self, "nodes", frozenset(self.nodes))
        object.__setattr__(self, "edges", tuple((u, v, float(d)) for u, v, d in self.edges))
        for u, v, d in self.edges:
            if d < 0:
                raise ValueError(f"transport edge ({u}, {v}) has negative length")

    @classmethod
    def from_network(cls, net: DistributionNetwork) -> "TransportGraph":
        return cls(net.nodes, tuple((ln.u, ln.v, ln.length) for ln in net.lines))


@dataclass(frozen=True)
class Violation:
    kind: str  # "cycle" | "disconnected" | "source"
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}

    def __bool__(self) -> bool:
        return self.ok


def _adjacency(nodes: Iterable[Bus], lines: Sequence[Line]) -> dict:
    adj: dict = {b: [] for b in nodes}
    for ln in lines:
        adj.setdefault(ln.u, []).append(ln.v)
        adj.setdefault(ln.v, []).append(ln.u)
    return adj


def validate_radial(net: DistributionNetwork, sources: Iterable[Bus] | None = None) -> ValidationReport:
    """Check that `net` is a single-source tree.

    `sources` lets callers pass every bus flagged as a source in the raw data;
    more than one is reported as a violation.
    """
    report = ValidationReport()
    srcs = [net.source] if sources is None else list(dict.fromkeys(sources))
    if len(srcs) != 1:
        report.violations.append(Violation("source", f"expected one source, got {srcs!r}"))
    if net.source not in net.nodes:
        report.violations.append(Violation("source", f"source {net.source!r} is not a bus"))

    # union-find over lines detects both parallel lines and longer cycles
    parent = {b: b for b in net.nodes}

    def find(b):
        while parent[b] != b:
            parent[b] = parent[parent[b]]
            b = parent[b]
        return b

    for ln in net.lines:
        for b in (ln.u, ln.v):
            if b not in parent:
                parent[b] = b
        ru, rv = find(ln.u), find(ln.v)
        if ru == rv:
            report.violations.append(Violation("cycle", f"line ({ln.u}, {ln.v}) closes a cycle"))
        else:
            parent[ru] = rv

    roots = {find(b) for b in parent}
    if len(roots) > 1:
        anchor = find(net.source) if net.source in parent else None
        stray = sorted((b for b in parent if find(b) != anchor), key=repr)
        report.violations.append(
            Violation("disconnected", f"{len(roots)} components; unreachable from source: {stray[:10]!r}")
        )
    return report


def orient_power_flow(net: DistributionNetwork) -> list[tuple[Bus, Bus]]:
    """Direct every line away from the source, in the order of `net.lines`."""
    report = validate_radial(net)
    if not report.ok:
        raise ValueError(f"network is not radial: {report.violations[0].detail}")
    parent = tree_parents(net)
    arcs = []
    for ln in net.lines:
        arcs.append((ln.u, ln.v) if parent.get(ln.v) == ln.u else (ln.v, ln.u))
    return arcs


def tree_parents(net: DistributionNetwork, root: Bus | None = None) -> dict:
    """BFS parent map of a radial network rooted at `root` (default: source)."""
    root = net.source if root is None else root
    adj = _adjacency(net.nodes, net.lines)
    parent = {root: None}
    queue = deque([root])
    while queue:
        b = queue.popleft()
        for nb in adj[b]:
            if nb not in parent:
                parent[nb] = b
                queue.append(nb)
    return parent
