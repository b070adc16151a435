"""Rolling-horizon restoration: plan a window, execute it, energize, repeat.

Ground truth: every line named in an arrival is damaged from the start and
becomes known to the planner in its arrival window.  At each window end the
energized region is recomputed from the source over lines that are intact or
repaired, so damage the planner has not yet learnt about still blocks power.
"""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .feeders import FeederFormatError, apply_patches, build_network, parse_feeder, read_feeder
from .model import CrewSpec, ModelOptions, effective_graph
from .network import DistributionNetwork, TransportGraph, tree_parents
from .solve import SearchLimits, Solution, solve_exact
from .transform import UnreachableError, apsp, build_working_graphs


class ScenarioError(ValueError):
    pass


class HorizonError(RuntimeError):
    def __init__(self, window: int, message: str):
        super().__init__(f"window {window}: {message}")
        self.window = window


@dataclass(frozen=True)
class WindowSpec:
    length: float
    budgets: tuple[float, ...]

    def crews(self) -> CrewSpec:
        return CrewSpec(self.budgets, self.length)


@dataclass(frozen=True)
class Arrival:
    window: int
    line: tuple
    repair_time: float
    reward: float = 1.0
    penalty: float = 0.0
    actual: float | None = None

    @property
    def key(self) -> frozenset:
        return frozenset(self.line)


@dataclass(frozen=True)
class Scenario:
    network: DistributionNetwork
    transport: TransportGraph
    windows: tuple[WindowSpec, ...]
    arrivals: tuple[Arrival, ...] = ()
    speed: float = 1.0
    energized: frozenset = frozenset()
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "energized", frozenset(self.energized or {self.network.source}))
        validate_scenario(self)

    def arrivals_for(self, k: int) -> list[Arrival]:
        """Jobs learnt in window k (arrivals tagged 0 are known before window 1)."""
        return [a for a in self.arrivals if a.window == k or (k == 1 and a.window == 0)]


def validate_scenario(sc: Scenario) -> None:
    if sc.speed <= 0:
        raise ScenarioError("speed must be positive")
    for k, w in enumerate(sc.windows, start=1):
        if w.length <= 0 or not w.budgets or min(w.budgets) < 0:
            raise ScenarioError(f"window {k} needs a positive length and non-negative crew budgets")
    lines = {ln.key: ln for ln in sc.network.lines}
    seen = set()
    for a in sc.arrivals:
        if a.window < 0:
            raise ScenarioError(f"arrival {a.line!r} has a negative window index")
        if a.key not in lines:
            raise ScenarioError(f"arrival names unknown line {a.line!r}")
        if a.key in seen:
            raise ScenarioError(f"line {a.line!r} arrives twice")
        seen.add(a.key)
        if a.repair_time < 0 or a.reward < 0 or a.penalty < 0:
            raise ScenarioError(f"arrival {a.line!r} has a negative attribute")
        if a.actual is not None and a.actual <= 0:
            raise ScenarioError(f"arrival {a.line!r} has a non-positive actual repair time")
        if set(a.line) <= sc.energized:
            raise ScenarioError(f"arrival {a.line!r} lies inside the initially energized region")
    try:
        table = apsp(sc.transport)
    except UnreachableError as e:
        raise ScenarioError(f"job site unreachable over the transport network: {e}") from None
    for a in sc.arrivals:
        for b in a.line:
            if b not in table:
                raise ScenarioError(f"job site {b!r} of {a.line!r} is not on the transport network")


@dataclass(frozen=True)
class PendingJob:
    line: tuple  # (upstream, downstream)
    residual: float  # estimated minutes still needed
    actual: float  # true minutes still needed
    reward: float
    penalty: float

    @property
    def key(self) -> frozenset:
        return frozenset(self.line)

    @property
    def repaired(self) -> bool:
        return self.actual <= 0


@dataclass(frozen=True)
class RestorationState:
    window: int  # next window to run (1-based)
    energized: frozenset  # buses
    pending: tuple[PendingJob, ...]
    repaired: frozenset = frozenset()  # keys of lines repaired so far
    cumulative_reward: float = 0.0


@dataclass(frozen=True)
class Visit:
    crew: int
    line: tuple
    start: float
    end: float
    finished: bool
    residual: float  # true minutes left after this window


@dataclass
class WindowResult:
    # `energized` may include lines repaired in an earlier window that only
    # now connect to the energized region
    window: int
    solution: Solution | None
    visits: list[Visit]
    completed: list[tuple]
    energized: list[tuple]
    carried: list[PendingJob]
    energized_buses: frozenset
    reward: float
    plan: list[list[tuple]] = field(default_factory=list)  # planned line order per crew
    planned_spent: list[float] = field(default_factory=list)

    @property
    def timelines(self) -> dict[int, list[Visit]]:
        out: dict[int, list[Visit]] = {}
        for v in self.visits:
            out.setdefault(v.crew, []).append(v)
        return out


@dataclass
class Timeline:
    results: list[WindowResult] = field(default_factory=list)

    @property
    def cumulative_rewards(self) -> list[float]:
        out, acc = [], 0.0
        for r in self.results:
            acc += r.reward
            out.append(acc)
        return out


def initial_state(sc: Scenario) -> RestorationState:
    """State before window 1, holding the jobs known at that point."""
    pending = _pending_from_arrivals(sc, sc.arrivals_for(1), tree_parents(sc.network))
    return RestorationState(1, sc.energized, tuple(pending), frozenset(), 0.0)


def _orient(net: DistributionNetwork, line: tuple, parent: dict) -> tuple:
    u, v = line
    return (u, v) if parent.get(v) == u else (v, u)


def energized_region(sc: Scenario, broken: set) -> frozenset:
    """Buses reachable from the source over lines not in `broken`."""
    adj: dict = {}
    for ln in sc.network.lines:
        if ln.key in broken:
            continue
        adj.setdefault(ln.u, []).append(ln.v)
        adj.setdefault(ln.v, []).append(ln.u)
    seen = {sc.network.source}
    queue = deque(seen)
    while queue:
        b = queue.popleft()
        for nb in adj.get(b, ()):
            if nb not in seen:
                seen.add(nb)
                queue.append(nb)
    return frozenset(seen)


def _pending_from_arrivals(sc: Scenario, arrivals: Sequence[Arrival], parent: dict) -> list[PendingJob]:
    out = []
    for a in arrivals:
        actual = a.repair_time if a.actual is None else a.actual
        out.append(PendingJob(_orient(sc.network, a.line, parent), a.repair_time, actual, a.reward, a.penalty))
    return out


def run_window(
    state: RestorationState,
    sc: Scenario,
    opts: ModelOptions | None = None,
    limits: SearchLimits | None = None,
) -> WindowResult:
    k = state.window
    if k < 1 or k > len(sc.windows):
        raise HorizonError(k, "no such window in the scenario")
    spec = sc.windows[k - 1]
    crews = spec.crews()
    budgets = crews.effective
    pending = {p.key: p for p in state.pending}

    solution = None
    visits: list[Visit] = []
    plan: list[list[tuple]] = []
    planned_spent: list[float] = []
    if pending:
        lines = []
        for ln in sc.network.lines:
            p = pending.get(ln.key)
            if p is None:
                lines.append(replace(ln, damaged=False, repair_time=0.0, reward=0.0, penalty=0.0))
            else:
                lines.append(replace(ln, damaged=True, repair_time=p.residual, reward=p.reward, penalty=p.penalty))
        net = sc.network.replace_lines(lines)
        gw, dag, jobs = build_working_graphs(net, sc.transport, state.energized, sc.speed)
        solution = solve_exact(gw, dag, crews, opts, limits)
        if solution.schedule is None:
            raise HorizonError(k, f"planning failed with status {solution.status.value}")
        travel = gw.travel
        plan = [[jobs.line(j) for j in tour if j in jobs.lines] for tour in solution.schedule.tours]
        planned_spent = solution.schedule.spent(effective_graph(gw, opts or ModelOptions()))
        for c, tour in enumerate(solution.schedule.tours):
            t, prev = 0.0, None
            for node in tour:
                if node not in jobs.lines:
                    continue  # parking stop
                job = pending[frozenset(jobs.line(node))]
                leg = 0.0 if prev is None else float(travel[prev, node])
                start = t + leg
                if start > budgets[c]:
                    break
                end = start + job.actual
                if end <= budgets[c] + 1e-9:
                    visits.append(Visit(c, job.line, start, end, True, 0.0))
                    pending[job.key] = replace(job, residual=0.0, actual=0.0)
                    t, prev = end, node
                else:
                    worked = budgets[c] - start
                    left = job.actual - worked
                    visits.append(Visit(c, job.line, start, budgets[c], False, left))
                    pending[job.key] = replace(job, residual=left, actual=left)
                    break

    repaired = set(state.repaired) | {k_ for k_, p in pending.items() if p.repaired}
    broken = {a.key for a in sc.arrivals} - repaired
    region = energized_region(sc, broken) | state.energized
    energized = [p for p in pending.values() if p.repaired and set(p.line) <= region]
    carried = [p for p in pending.values() if not (p.repaired and set(p.line) <= region)]
    completed = [v.line for v in visits if v.finished]
    return WindowResult(
        window=k,
        solution=solution,
        visits=visits,
        completed=completed,
        energized=[p.line for p in energized],
        carried=carried,
        energized_buses=frozenset(region),
        reward=float(sum(p.reward for p in energized)),
        plan=plan,
        planned_spent=planned_spent,
    )


def advance(state: RestorationState, result: WindowResult, arrivals: Sequence[Arrival], sc: Scenario) -> RestorationState:
    if result.window != state.window:
        raise ValueError("result does not belong to this state's window")
    parent = tree_parents(sc.network)
    energized_keys = {frozenset(line) for line in result.energized}
    repaired = set(state.repaired) | energized_keys | {p.key for p in result.carried if p.repaired}
    known = {p.key for p in result.carried} | energized_keys | set(state.repaired)
    fresh = [p for p in _pending_from_arrivals(sc, arrivals, parent) if p.key not in known]
    return RestorationState(
        window=state.window + 1,
        energized=result.energized_buses,
        pending=tuple(result.carried) + tuple(fresh),
        repaired=frozenset(repaired),
        cumulative_reward=state.cumulative_reward + result.reward,
    )


def simulate(sc: Scenario, opts: ModelOptions | None = None, limits: SearchLimits | None = None) -> Timeline:
    timeline = Timeline()
    if not sc.windows:
        return timeline
    state = initial_state(sc)
    for k in range(1, len(sc.windows) + 1):
        result = run_window(state, sc, opts, limits)
        timeline.results.append(result)
        if k < len(sc.windows):
            state = advance(state, result, sc.arrivals_for(k + 1), sc)
    return timeline


# ------------------------------------------------------------------ I/O


def _network_from(doc, base: Path) -> tuple[DistributionNetwork, TransportGraph]:
    if isinstance(doc, str):
        target = base / doc if not Path(doc).is_absolute() and (base / doc).exists() else doc
        spec = read_feeder(target)
    elif isinstance(doc, dict):
        spec = parse_feeder(json.dumps(doc), "<scenario network>")
    else:
        raise ScenarioError("'network' must be a feeder name, a path, or an inline feeder object")
    spec = apply_patches(spec)
    spec = replace(spec, edges=tuple(replace(e, damaged=False, repair_time=0.0, reward=0.0, penalty=0.0)
                                     for e in spec.edges))
    return build_network(spec)


def scenario_from_dict(doc: dict, base: Path | str = ".") -> Scenario:
    base = Path(base)
    try:
        net, transport = _network_from(doc["network"], base)
        if "transport" in doc:
            transport = TransportGraph(
                set(net.nodes) | {b for e in doc["transport"]["edges"] for b in e[:2]},
                tuple((u, v, float(d)) for u, v, d in doc["transport"]["edges"]),
            )
        windows = tuple(WindowSpec(float(w["length"]), tuple(float(b) for b in w["budgets"]))
                        for w in doc.get("windows", ()))
        arrivals = tuple(
            Arrival(int(a["window"]), tuple(a["line"]), float(a["repair_time"]), float(a.get("reward", 1.0)),
                    float(a.get("penalty", 0.0)), None if a.get("actual") is None else float(a["actual"]))
            for a in doc.get("arrivals", ())
        )
        return Scenario(net, transport, windows, arrivals, float(doc.get("speed", 1.0)),
                        frozenset(doc.get("energized", ())), int(doc.get("seed", 0)))
    except FeederFormatError as e:
        raise ScenarioError(str(e)) from None
    except (KeyError, TypeError) as e:
        raise ScenarioError(f"malformed scenario ({type(e).__name__}: {e})") from None


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except OSError as e:
        raise ScenarioError(f"cannot read scenario {str(path)!r}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise ScenarioError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    return scenario_from_dict(doc, path.parent)
