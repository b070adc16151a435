"""Exact schedule search, a brute-force oracle, and a domain-level checker.

A crew's tour starts and ends at the root; both of those legs are free, so
the cost of a crew schedule j1 -> j2 -> ... -> jk is
    w(j1) + c(j1, j2) + w(j2) + ... + c(j(k-1), jk) + w(jk).
"""

from __future__ import annotations

import math
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations, permutations
from typing import Iterator, NamedTuple, Sequence

from .model import TOL, CrewSpec, HomeDegree, MilpInstance, ModelOptions, Objective, effective_graph
from .transform import ROOT, PrecedenceDag, WorkingGraph

BIG = 1 << 30


class Status(str, Enum):
    OPTIMAL = "Optimal"
    FEASIBLE = "Feasible"
    INFEASIBLE = "Infeasible"
    LIMIT = "Limit"


@dataclass(frozen=True)
class Schedule:
    """Ordered job list per crew (crew k is `tours[k]`)."""

    tours: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "tours", tuple(tuple(int(j) for j in t) for t in self.tours))

    @property
    def m(self) -> int:
        return len(self.tours)

    def jobs(self) -> list[int]:
        return [j for t in self.tours for j in t]

    def spent(self, gw: WorkingGraph) -> list[float]:
        return [tour_cost(gw, t) for t in self.tours]

    def reward(self, gw: WorkingGraph) -> float:
        return float(sum(gw.reward[j] for j in set(self.jobs())))


def tour_cost(gw: WorkingGraph, tour: Sequence[int]) -> float:
    cost = 0.0
    prev = ROOT
    for j in tour:
        cost += gw.travel[prev, j] + gw.repair[j]
        prev = j
    return float(cost)


@dataclass
class SearchLimits:
    time_limit: float | None = None  # seconds
    node_limit: int | None = None
    gap: float = 0.0  # absolute UB - LB at which the search may stop
    rel_gap: float = 0.0  # (UB - LB) / |LB|

    def __post_init__(self):
        for name in ("time_limit", "node_limit"):
            v = getattr(self, name)
            if v is not None and v < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.gap < 0 or self.rel_gap < 0:
            raise ValueError("gap targets must be non-negative")


@dataclass
class Solution:
    schedule: Schedule | None
    objective: float
    reward: float
    lower_bound: float
    upper_bound: float
    status: Status
    nodes: int = 0
    elapsed: float = 0.0
    stats: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        if self.status is Status.INFEASIBLE or self.schedule is None:
            return math.nan
        return self.upper_bound - self.lower_bound

    @property
    def feasible(self) -> bool:
        return self.schedule is not None


@dataclass(frozen=True)
class ScheduleViolation:
    kind: str  # "budget" | "duplicate" | "continuity" | "idle"
    crew: int | None
    job: int | None
    detail: str


@dataclass
class ScheduleReport:
    violations: list[ScheduleViolation]
    reward: float
    spent: list[float]

    @property
    def ok(self) -> bool:
        return not self.violations

    def kinds(self) -> set[str]:
        return {v.kind for v in self.violations}


def check_schedule(
    gw: WorkingGraph,
    gwd: PrecedenceDag,
    crews: CrewSpec,
    sched: Schedule,
    *,
    mode: HomeDegree | str | None = None,
) -> ScheduleReport:
    """Budget, single-crew and aggregate electrical-continuity checks.

    Reports the first violation of each kind.  With `mode` strict (or
    dummy_node), an idle crew is also reported.
    """
    if sched.m != crews.m:
        raise ValueError(f"schedule has {sched.m} crews, crew spec has {crews.m}")
    for j in sched.jobs():
        if j <= ROOT or j >= gw.n:
            raise ValueError(f"unknown job id {j}")
    found: dict[str, ScheduleViolation] = {}

    def note(v: ScheduleViolation):
        found.setdefault(v.kind, v)

    spent = sched.spent(gw)
    for c, (s, b) in enumerate(zip(spent, crews.effective)):
        if s > b + TOL:
            note(ScheduleViolation("budget", c, None, f"crew {c + 1} spends {s:.6g} > budget {b:.6g}"))
    seen: dict[int, int] = {}
    for c, tour in enumerate(sched.tours):
        for j in tour:
            if j == gw.dummy:
                continue
            if j in seen:
                note(ScheduleViolation("duplicate", c, j, f"job {j} scheduled by crews {seen[j] + 1} and {c + 1}"))
            else:
                seen[j] = c
    done = set(seen)
    for i, j in gwd.arcs:
        if j in done and i != ROOT and i not in done:
            note(ScheduleViolation("continuity", seen[j], j, f"job {j} needs job {i} repaired first"))
    if mode is not None and HomeDegree.parse(mode) is not HomeDegree.RELAXED:
        for c, tour in enumerate(sched.tours):
            if not tour:
                note(ScheduleViolation("idle", c, None, f"crew {c + 1} never leaves home"))
                break
    order = ("budget", "duplicate", "continuity", "idle")
    return ScheduleReport([found[k] for k in order if k in found], sched.reward(gw), spent)


def encode_schedule(instance: MilpInstance, gw: WorkingGraph, sched: Schedule) -> dict[str, float]:
    """Variable assignment for `instance` realizing `sched`.

    Flows send one unit from the root to every scheduled job along its tour.
    `gw` must be the graph the instance was assembled on (including any
    parking node).
    """
    n, m = instance.n, instance.m
    if gw.n != n or sched.m != m:
        raise ValueError("schedule does not match the model dimensions")
    values = {v.name: 0.0 for v in instance.variables}
    for c, tour in enumerate(sched.tours, start=1):
        values[f"y_{ROOT}_{c}"] = 1.0
        for j in tour:
            values[f"y_{j}_{c}"] = 1.0
        if not tour:
            continue
        path = [ROOT, *tour, ROOT]
        for a, b in zip(path, path[1:]):
            i, j = min(a, b), max(a, b)
            values[f"x_{i}_{j}_{c}"] += 1.0
        k = len(tour)
        for step, (a, b) in enumerate(zip(path, path[1:-1])):
            values[f"f_{a}_{b}"] += float(k - step)
    return values


def _objective_terms(g: WorkingGraph, opts: ModelOptions, m: int) -> tuple[list[float], float]:
    if opts.objective is Objective.PROFIT:
        value = [float(g.reward[j] + g.penalty[j]) for j in range(g.n)]
        constant = -m * float(sum(g.penalty[j] for j in g.damaged_nodes))
    else:
        value = [float(r) for r in g.reward]
        constant = 0.0
    value[ROOT] = 0.0
    return value, constant


def _solution(g, sched, value, constant, lb, ub, status, nodes, started, **stats) -> Solution:
    if sched is None:
        return Solution(None, math.nan, 0.0, lb, ub, status, nodes, time.perf_counter() - started, stats)
    objective = constant + sum(value[j] for j in sched.jobs())
    return Solution(sched, objective, sched.reward(g), lb, ub, status, nodes, time.perf_counter() - started, stats)


# ---------------------------------------------------------------- brute force


def solve_bruteforce(
    gw: WorkingGraph,
    gwd: PrecedenceDag,
    crews: CrewSpec,
    opts: ModelOptions | None = None,
    *,
    max_jobs: int = 10,
) -> Solution:
    """Exhaustive oracle: every disjoint assignment of job sets to crews,
    each set costed by trying every visiting order."""
    started = time.perf_counter()
    opts = opts or ModelOptions()
    if len(gw.damaged_nodes) > max_jobs:
        raise ValueError(f"brute force is limited to {max_jobs} jobs, got {len(gw.damaged_nodes)}")
    g = effective_graph(gw, opts)
    jobs = [j for j in g.damaged_nodes if j != g.dummy]
    value, constant = _objective_terms(g, opts, crews.m)
    must_leave = opts.home_degree is not HomeDegree.RELAXED
    parents = {j: [i for i in gwd.parents.get(j, ()) if i != ROOT] for j in jobs}

    best_order: dict[frozenset, tuple[float, tuple[int, ...]]] = {}

    def cheapest(subset: frozenset) -> tuple[float, tuple[int, ...]]:
        if subset not in best_order:
            best = (math.inf, ())
            for perm in permutations(sorted(subset)):
                cost = tour_cost(g, perm)
                if cost < best[0]:
                    best = (cost, perm)
            best_order[subset] = best
        return best_order[subset]

    max_budget = max(crews.effective)
    candidates: list[frozenset] = []
    for k in range(0, len(jobs) + 1):
        for combo in combinations(jobs, k):
            if sum(g.repair[j] for j in combo) <= max_budget + TOL:
                candidates.append(frozenset(combo))
    per_crew = []
    for budget in crews.effective:
        fits = [s for s in candidates if (s or not must_leave) and cheapest(s)[0] <= budget + TOL]
        if g.dummy is not None:
            fits.append(frozenset((g.dummy,)))
        per_crew.append(fits)

    best_val, best_sets = -math.inf, None
    explored = 0

    parked = frozenset(() if g.dummy is None else (g.dummy,))

    def closed(union: frozenset) -> bool:
        return all(p in union for j in union for p in parents[j])

    def rec(c: int, used: frozenset, chosen: list):
        nonlocal best_val, best_sets, explored
        if c == crews.m:
            explored += 1
            if closed(used):
                val = constant + sum(value[j] for j in used)
                if val > best_val + TOL:
                    best_val, best_sets = val, list(chosen)
            return
        for s in per_crew[c]:
            if not (s & used):
                chosen.append(s)
                rec(c + 1, used | (s - parked), chosen)
                chosen.pop()

    rec(0, frozenset(), [])
    if best_sets is None:
        return _solution(g, None, value, constant, -math.inf, -math.inf, Status.INFEASIBLE, explored, started)
    sched = Schedule(tuple(cheapest(s)[1] for s in best_sets))
    return _solution(g, sched, value, constant, best_val, best_val, Status.OPTIMAL, explored, started)


# ----------------------------------------------------------- branch and bound


class SearchNode(NamedTuple):
    crew: int  # crew being extended; == m at a leaf
    last: int  # last job of the current crew, ROOT if none yet
    spent: float
    mask: int  # bit j set when job j is scheduled
    need: int  # unscheduled precedence ancestors of scheduled jobs
    earned: float
    low: int  # smallest job id of the current crew (BIG if empty)
    floor: int  # current crew may only take ids above this; BIG forbids any
    tours: tuple


class BranchAndBound:
    """Depth-first search over (crew, next job) extensions.

    Crews are filled in index order; at each node the current crew either
    takes one more job or is closed.  Precedence (electrical continuity) is
    an aggregate condition checked on the final job set, with partial
    pruning on the repair time still owed to unscheduled ancestors.

    A parking node (dummy_node mode) is offered only as a crew's sole stop.
    With shortest-path travel times a detour through it never saves time,
    so nothing is lost.
    """

    def __init__(
        self,
        gw: WorkingGraph,
        gwd: PrecedenceDag,
        crews: CrewSpec,
        opts: ModelOptions | None = None,
        *,
        symmetry: bool = True,
        dominance: bool = True,
        tree_bound: bool = True,
    ):
        self.opts = opts or ModelOptions()
        g = effective_graph(gw, self.opts)
        self.g = g
        self.m = crews.m
        self.budgets = list(crews.effective)
        self.strict = self.opts.home_degree is not HomeDegree.RELAXED
        self.value, self.constant = _objective_terms(g, self.opts, crews.m)
        self.dummy = g.dummy
        self.jobs = [j for j in g.damaged_nodes if j != g.dummy]
        self.repair = [float(w) for w in g.repair]
        self.travel = [[float(t) for t in row] for row in g.travel]
        self.dominance = dominance
        self.tree_bound = tree_bound

        self.parent: dict[int, int] = {}
        for i, j in gwd.arcs:
            if j in self.parent and self.parent[j] != i:
                raise ValueError(f"job {j} has several precedence parents")
            self.parent[j] = i
        self.anc = [0] * g.n
        for j in self.jobs:
            a, mask = self.parent.get(j, ROOT), 0
            seen = set()
            while a != ROOT:
                if a in seen:
                    raise ValueError("precedence graph contains a cycle")
                seen.add(a)
                mask |= 1 << a
                a = self.parent.get(a, ROOT)
            self.anc[j] = mask
        self.children: dict[int, list[int]] = {ROOT: []}
        for j in self.jobs:
            self.children.setdefault(self.parent.get(j, ROOT), []).append(j)

        self.subtree = [0] * g.n  # bit set of v and its descendants
        for j in reversed(PrecedenceDag(tuple((self.parent.get(j, ROOT), j) for j in self.jobs)).topological_order()):
            if j != ROOT:
                self.subtree[j] |= 1 << j
                self.subtree[self.parent.get(j, ROOT)] |= self.subtree[j]
        self.order = sorted(self.jobs, key=lambda j: (-self.value[j], j))
        self.by_repair = sorted(self.jobs, key=lambda j: (self.repair[j], j))
        self.prev_same: list[int | None] = []
        for c, b in enumerate(self.budgets):
            prev = None
            if symmetry:
                for p in range(c - 1, -1, -1):
                    if self.budgets[p] == b:
                        prev = p
                        break
            self.prev_same.append(prev)

    # -- tree helpers

    def weight(self, mask: int) -> float:
        return sum(self.repair[j] for j in self.jobs if mask >> j & 1)

    def closed(self, mask: int) -> bool:
        return all(not (self.anc[j] & ~mask) for j in self.jobs if mask >> j & 1)

    def root(self) -> SearchNode:
        return SearchNode(0, ROOT, 0.0, 0, 0, 0.0, BIG, -1, ((),))

    def capacities(self, node: SearchNode) -> list[float]:
        if node.crew >= self.m:
            return []
        open_crew = node.floor < BIG and (node.last != self.dummy or self.dummy is None)
        first = self.budgets[node.crew] - node.spent if open_crew else 0.0
        return [max(first, 0.0)] + self.budgets[node.crew + 1:]

    # -- bounding

    def bound(self, node: SearchNode, threshold: float | None = None) -> float:
        """Admissible upper bound on the objective of any leaf below `node`.

        When the cheap cardinality bound already falls to `threshold` or below,
        the precedence-aware refinement is skipped.
        """
        if node.crew >= self.m:
            return node.earned + self.constant if self.closed(node.mask) else -math.inf
        caps = self.capacities(node)
        total_cap = sum(caps)
        if node.need and self.weight(node.need) > total_cap + TOL:
            return -math.inf
        biggest = max(caps)
        cum, acc = [], 0.0
        for j in self.by_repair:
            if not node.mask >> j & 1:
                acc += self.repair[j]
                cum.append(acc)
        k = sum(bisect_right(cum, cap + TOL) for cap in caps)
        if self.tree_bound and (threshold is None or self._top(node, k, biggest) > threshold):
            reach = self._tree_count(node.mask, total_cap, k)
            if reach < 0:
                return -math.inf
            k = min(k, reach)
        return self._top(node, k, biggest)

    def _top(self, node: SearchNode, k: int, biggest: float) -> float:
        extra, taken = 0.0, 0
        if k > 0:
            for j in self.order:
                if taken >= k:
                    break
                if not node.mask >> j & 1 and self.repair[j] <= biggest + TOL:
                    extra += self.value[j]
                    taken += 1
        return node.earned + extra + self.constant

    def _tree_count(self, mask: int, capacity: float, cap_count: int) -> int:
        """Most new jobs (at most `cap_count`) a closed extension of `mask` can
        add within `capacity`; -1 if none fits.

        Min-plus knapsack over the precedence forest: for a subtree rooted at
        v, entry k is the least repair time that adds k new jobs there with v
        selected.  Scheduled jobs cost nothing and force their ancestors in.
        Dropping an unforced leaf keeps a selection closed and cheaper, so
        every count up to the maximum is attainable and arrays may stop at
        `cap_count`.
        """
        limit = capacity + TOL
        inf = math.inf
        width = cap_count + 1

        def merge(left: list[float], right: list[float], may_skip: bool) -> list[float]:
            out = [inf] * min(len(left) + len(right) - 1, width)
            for a, wa in enumerate(left[:width]):
                if wa == inf:
                    continue
                if may_skip and wa < out[a]:
                    out[a] = wa
                for b, wb in enumerate(right[: width - a]):
                    w = wa + wb
                    if w <= limit and w < out[a + b]:
                        out[a + b] = w
            while len(out) > 1 and out[-1] == inf:
                out.pop()
            return out

        def solve(v: int, above: float) -> tuple[list[float], bool]:
            forced = bool(mask & self.subtree[v])
            here = 0.0 if mask >> v & 1 else self.repair[v]
            if not forced and above + here > limit:
                return [inf], False
            best = [0.0] if mask >> v & 1 else ([inf, here] if here <= limit else [inf])
            for ch in self.children.get(v, ()):
                sub, sub_forced = solve(ch, above + here)
                best = merge(best, sub, not sub_forced)
            return best, forced

        total = [0.0]
        for ch in self.children.get(ROOT, ()):
            sub, sub_forced = solve(ch, 0.0)
            total = merge(total, sub, not sub_forced)
        feasible = [k for k, w in enumerate(total) if w <= limit]
        return max(feasible) if feasible else -1

    # -- branching

    def branch(self, node: SearchNode) -> Iterator[SearchNode]:
        """Children in preference order: extensions (best value first), then close."""
        if node.crew >= self.m:
            return
        c = node.crew
        budget = self.budgets[c]
        later_caps = self.budgets[c + 1:]
        later_total = sum(later_caps)
        later_max = max(later_caps, default=0.0)
        if node.floor < BIG and (node.last != self.dummy or self.dummy is None):
            trow = self.travel[node.last]
            for j in self.order:
                if node.mask >> j & 1 or j <= node.floor:
                    continue
                spent = node.spent + (trow[j] if node.last != ROOT else 0.0) + self.repair[j]
                if spent > budget + TOL:
                    continue
                mask = node.mask | (1 << j)
                need = (node.need | self.anc[j]) & ~mask
                if need:
                    room = budget - spent
                    owed = self.weight(need)
                    if owed > room + later_total + TOL:
                        continue
                    top = max(room, later_max)
                    if any(self.repair[a] > top + TOL for a in self.jobs if need >> a & 1):
                        continue
                yield SearchNode(c, j, spent, mask, need, node.earned + self.value[j],
                                 min(node.low, j), node.floor, node.tours[:-1] + (node.tours[-1] + (j,),))
        if self.dummy is not None and node.last == ROOT:
            # parking keeps an idle crew legal; it never shares a tour with real jobs
            yield SearchNode(c, self.dummy, 0.0, node.mask, node.need, node.earned, BIG, node.floor,
                             node.tours[:-1] + ((self.dummy,),))
        if self.strict and node.last == ROOT:
            return
        if node.need and self.weight(node.need) > later_total + TOL:
            return
        nxt = c + 1
        if nxt < self.m:
            p = self.prev_same[nxt]
            if p is None:
                floor = -1
            else:
                real = [j for j in node.tours[p] if j != self.dummy]
                floor = min(real) if real else BIG
            yield SearchNode(nxt, ROOT, 0.0, node.mask, node.need, node.earned, BIG, floor, node.tours + ((),))
        else:
            yield SearchNode(nxt, ROOT, 0.0, node.mask, node.need, node.earned, BIG, BIG, node.tours)

    def leaf_value(self, node: SearchNode) -> float | None:
        if node.crew < self.m or node.need or not self.closed(node.mask):
            return None
        return node.earned + self.constant

    # -- driver

    def run(self, limits: SearchLimits | None = None) -> Solution:
        limits = limits or SearchLimits()
        started = time.perf_counter()
        deadline = None if limits.time_limit is None else started + limits.time_limit
        best_val, best_node = -math.inf, None
        pruned_ub = -math.inf
        seen: dict[tuple, float] = {}
        seen_cap = 4_000_000
        nodes = 0
        root = self.root()
        stack: list[tuple[float, SearchNode]] = [(self.bound(root), root)]
        hit_limit = False
        best_bound = stack[0][0]

        def slack(val: float) -> float:
            return max(limits.gap, limits.rel_gap * abs(val), TOL)

        while stack:
            if limits.node_limit is not None and nodes >= limits.node_limit:
                hit_limit = True
                break
            if deadline is not None and nodes % 256 == 0 and time.perf_counter() > deadline:
                hit_limit = True
                break
            bnd, node = stack.pop()
            if bnd == -math.inf:
                continue
            if best_node is not None and bnd <= best_val + slack(best_val):
                if bnd > best_val + TOL:
                    pruned_ub = max(pruned_ub, bnd)
                continue
            nodes += 1
            if node.crew >= self.m:
                val = self.leaf_value(node)
                if val is not None and val > best_val + TOL:
                    best_val, best_node = val, node
                continue
            kids = []
            for child in self.branch(node):
                if self.dominance and child.crew < self.m:
                    key = (child.crew, child.mask, child.last, child.low, child.floor)
                    prev = seen.get(key)
                    if prev is not None and prev <= child.spent + TOL:
                        continue
                    if prev is not None or len(seen) < seen_cap:
                        seen[key] = child.spent
                b = self.bound(child, best_val + slack(best_val) if best_node is not None else None)
                if b == -math.inf:
                    continue
                kids.append((b, child))
            stack.extend(reversed(kids))

        open_ub = max((b for b, _ in stack), default=-math.inf)
        if best_node is None:
            if hit_limit:
                ub = max(open_ub, pruned_ub)
                return _solution(self.g, None, self.value, self.constant, -math.inf, ub, Status.LIMIT,
                                 nodes, started, root_bound=best_bound)
            return _solution(self.g, None, self.value, self.constant, -math.inf, -math.inf,
                             Status.INFEASIBLE, nodes, started, root_bound=best_bound)
        ub = max(best_val, open_ub, pruned_ub)
        sched = Schedule(tuple(best_node.tours) + ((),) * (self.m - len(best_node.tours)))
        status = Status.OPTIMAL if ub <= best_val + TOL else Status.FEASIBLE
        if status is Status.OPTIMAL:
            ub = best_val
        return _solution(self.g, sched, self.value, self.constant, best_val, ub, status, nodes, started,
                         root_bound=best_bound, limit_hit=hit_limit)


def solve_exact(
    gw: WorkingGraph,
    gwd: PrecedenceDag,
    crews: CrewSpec,
    opts: ModelOptions | None = None,
    limits: SearchLimits | None = None,
    **search_options,
) -> Solution:
    """Branch-and-bound optimum (or best found within `limits`)."""
    return BranchAndBound(gw, gwd, crews, opts, **search_options).run(limits)
