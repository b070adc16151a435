"""Solver-neutral MILP for multi-crew repair scheduling.

Variable naming is stable and shared by every export format:

    y_i_c     crew c repairs node i (i = 0 is the root)
    x_i_j_c   crew c travels the undirected edge (i, j), i < j
    f_i_j     single-commodity flow on the directed edge i -> j

Crews are numbered from 1 in names; node ids follow the working graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from itertools import combinations
from typing import Iterable, Mapping

import numpy as np
from scipy import sparse

from .transform import ROOT, PrecedenceDag, WorkingGraph

TOL = 1e-9


class Objective(str, Enum):
    REWARD = "reward"
    PROFIT = "profit"


class HomeDegree(str, Enum):
    STRICT = "strict"
    RELAXED = "relaxed"
    DUMMY = "dummy_node"

    @classmethod
    def parse(cls, value) -> "HomeDegree":
        if isinstance(value, cls):
            return value
        return {"dummy": cls.DUMMY}.get(value) or cls(value)


@dataclass(frozen=True)
class CrewSpec:
    """Per-crew time budgets (minutes) and the restoration window length."""

    budgets: tuple[float, ...]
    window: float = math.inf

    def __post_init__(self):
        object.__setattr__(self, "budgets", tuple(float(b) for b in self.budgets))
        if not self.budgets:
            raise ValueError("at least one crew is required")
        if min(self.budgets) <= 0 or self.window <= 0:
            raise ValueError("budgets and window length must be positive")

    @classmethod
    def uniform(cls, m: int, budget: float, window: float = math.inf) -> "CrewSpec":
        return cls((budget,) * m, window)

    @property
    def m(self) -> int:
        return len(self.budgets)

    @property
    def effective(self) -> tuple[float, ...]:
        return tuple(min(b, self.window) for b in self.budgets)


@dataclass(frozen=True)
class ModelOptions:
    objective: Objective = Objective.REWARD
    home_degree: HomeDegree = HomeDegree.STRICT
    valid_inequalities: bool = False
    skip_root_precedence: bool = True

    def __post_init__(self):
        object.__setattr__(self, "objective", Objective(self.objective))
        object.__setattr__(self, "home_degree", HomeDegree.parse(self.home_degree))


def effective_graph(gw: WorkingGraph, opts: ModelOptions) -> WorkingGraph:
    """The graph the model is built on: `gw` plus a parking node in dummy mode."""
    if opts.home_degree is HomeDegree.DUMMY and gw.dummy is None:
        return gw.with_dummy()
    return gw


@dataclass(frozen=True)
class Variable:
    name: str
    lower: float
    upper: float
    integer: bool
    group: str


@dataclass(frozen=True)
class Constraint:
    name: str
    group: str
    coeffs: tuple[tuple[int, float], ...]
    sense: str  # "<=", ">=", "="
    rhs: float


@dataclass(frozen=True)
class RowViolation:
    group: str
    name: str
    amount: float


@dataclass(frozen=True, eq=False)
class MilpInstance:
    variables: tuple[Variable, ...]
    constraints: tuple[Constraint, ...]
    objective: tuple[tuple[int, float], ...]
    objective_constant: float = 0.0
    sense: str = "max"
    n: int = 0
    m: int = 0
    meta: Mapping = field(default_factory=dict)

    @cached_property
    def _index(self) -> dict[str, int]:
        return {v.name: k for k, v in enumerate(self.variables)}

    def index(self, name: str) -> int:
        return self._index[name]

    def group(self, group: str) -> list[Constraint]:
        return [r for r in self.constraints if r.group == group]

    def count(self, prefix: str) -> int:
        """Number of variables whose name starts with `prefix` + '_'."""
        return sum(1 for v in self.variables if v.name.startswith(prefix + "_"))

    def group_sizes(self) -> dict[str, int]:
        sizes: dict[str, int] = {}
        for r in self.constraints:
            sizes[r.group] = sizes.get(r.group, 0) + 1
        return sizes

    def drop_groups(self, groups: Iterable[str]) -> "MilpInstance":
        groups = set(groups)
        return replace(self, constraints=tuple(r for r in self.constraints if r.group not in groups))

    def objective_value(self, values: np.ndarray) -> float:
        return self.objective_constant + sum(c * values[k] for k, c in self.objective)

    def to_arrays(self):
        """Dense objective / sparse rows in `scipy.optimize.milp` form (maximize sense)."""
        nv = len(self.variables)
        obj = np.zeros(nv)
        for k, c in self.objective:
            obj[k] = c
        rows, cols, vals = [], [], []
        lo = np.empty(len(self.constraints))
        hi = np.empty(len(self.constraints))
        for r, con in enumerate(self.constraints):
            for k, c in con.coeffs:
                rows.append(r)
                cols.append(k)
                vals.append(c)
            lo[r] = con.rhs if con.sense in ("=", ">=") else -np.inf
            hi[r] = con.rhs if con.sense in ("=", "<=") else np.inf
        a = sparse.csr_array((vals, (rows, cols)), shape=(len(self.constraints), nv))
        lb = np.array([v.lower for v in self.variables])
        ub = np.array([v.upper for v in self.variables])
        integrality = np.array([1 if v.integer else 0 for v in self.variables])
        return obj, a, lo, hi, lb, ub, integrality


def _y(i, c):
    return f"y_{i}_{c}"


def _x(i, j, c):
    i, j = min(i, j), max(i, j)
    return f"x_{i}_{j}_{c}"


def _f(i, j):
    return f"f_{i}_{j}"


def assemble(gw: WorkingGraph, gwd: PrecedenceDag, crews: CrewSpec, opts: ModelOptions | None = None) -> MilpInstance:
    opts = opts or ModelOptions()
    if not gw.collapsed:
        raise ValueError("working graph must be collapsed (every non-root node damaged)")
    g = effective_graph(gw, opts)
    n, m = g.n, crews.m
    damaged = g.damaged_nodes
    if not gw.damaged_nodes:
        raise ValueError("nothing to schedule: no damaged nodes")
    crews_ix = range(1, m + 1)

    variables: list[Variable] = []
    for c in crews_ix:
        for i in range(n):
            variables.append(Variable(_y(i, c), 0.0, 1.0, True, "const2"))
    for c in crews_ix:
        for i, j in combinations(range(n), 2):
            if i == ROOT:
                variables.append(Variable(_x(i, j, c), 0.0, 2.0, True, "const5"))
            else:
                variables.append(Variable(_x(i, j, c), 0.0, 1.0, True, "const6"))
    for i in range(n):
        for j in range(n):
            if i != j:
                variables.append(Variable(_f(i, j), 0.0, math.inf, False, "scf5"))
    idx = {v.name: k for k, v in enumerate(variables)}

    def terms(pairs):
        return tuple((idx[name], float(coef)) for name, coef in pairs)

    rows: list[Constraint] = []

    def add(name, group, pairs, sense, rhs):
        rows.append(Constraint(name, group, terms(pairs), sense, float(rhs)))

    for c in crews_ix:
        add(f"const1_{c}", "const1", [(_y(ROOT, c), 1)], "=", 1)
    for i in damaged:
        if i == g.dummy:
            continue  # every idle crew may park at the dummy
        add(f"const7_{i}", "const7", [(_y(i, c), 1) for c in crews_ix], "<=", 1)
    for c in crews_ix:
        for i in [ROOT] + damaged:
            pairs = [(_x(i, j, c), 1) for j in range(n) if j != i] + [(_y(i, c), -2)]
            relaxed = i == ROOT and opts.home_degree is HomeDegree.RELAXED
            add(f"const8_{i}_{c}", "const8", pairs, "<=" if relaxed else "=", 0)
    for c, budget in zip(crews_ix, crews.effective):
        pairs = [(_y(i, c), g.repair[i]) for i in damaged if g.repair[i] != 0]
        pairs += [(_x(i, j, c), g.travel[i, j]) for i, j in combinations(range(n), 2) if g.travel[i, j] != 0]
        add(f"const10_{c}", "const10", pairs, "<=", budget)
    for i, j in gwd.arcs:
        if i == ROOT and opts.skip_root_precedence:
            continue
        pairs = [(_y(i, c), 1) for c in crews_ix] + [(_y(j, c), -1) for c in crews_ix]
        add(f"const11_{i}_{j}", "const11", pairs, ">=", 0)

    visited = [(_y(i, c), 1) for c in crews_ix for i in damaged]
    add("scf1", "scf1",
        [(_f(ROOT, j), 1) for j in range(1, n)] + [(_f(j, ROOT), -1) for j in range(1, n)]
        + [(name, -1) for name, _ in visited], "=", 0)
    for i in damaged:
        pairs = [(_f(i, j), 1) for j in range(n) if j != i] + [(_f(j, i), -1) for j in range(n) if j != i]
        pairs += [(_y(i, c), 1) for c in crews_ix]
        add(f"scf2_{i}", "scf2", pairs, "=", 0)
    for i, j in combinations(range(n), 2):
        for a, b in ((i, j), (j, i)):
            add(f"scf3_{a}_{b}", "scf3", [(_f(a, b), 1)] + [(_x(i, j, c), -n) for c in crews_ix], "<=", 0)
    for i, j in combinations(range(n), 2):
        for a, b in ((i, j), (j, i)):
            add(f"scf4_{a}_{b}", "scf4", [(_f(a, b), 1)] + [(name, -1) for name, _ in visited], "<=", 0)

    if opts.valid_inequalities:
        for c in crews_ix:
            for i, j, k in combinations(range(1, n), 3):
                lhs = [(_x(i, j, c), 1), (_x(j, k, c), 1), (_x(i, k, c), 1)]
                for tag, (a, b) in zip("123", ((i, j), (j, k), (i, k))):
                    add(f"vi_{i}_{j}_{k}_{c}_{tag}", "vi", lhs + [(_y(a, c), -1), (_y(b, c), -1)], "<=", 0)

    objective = []
    constant = 0.0
    for c in crews_ix:
        for i in damaged:
            coef = g.reward[i]
            if opts.objective is Objective.PROFIT:
                coef += g.penalty[i]
            if coef != 0:
                objective.append((idx[_y(i, c)], float(coef)))
    if opts.objective is Objective.PROFIT:
        # penalty term sums (1 - y_ic) over every crew
        constant = -m * float(sum(g.penalty[i] for i in damaged))

    return MilpInstance(
        variables=tuple(variables),
        constraints=tuple(rows),
        objective=tuple(objective),
        objective_constant=constant,
        n=n,
        m=m,
        meta={"options": opts, "dummy": g.dummy},
    )


def evaluate(instance: MilpInstance, assignment: Mapping[str, float], tol: float = TOL) -> list[RowViolation]:
    """Every domain or row violation of `assignment` beyond `tol`."""
    values = np.empty(len(instance.variables))
    for k, var in enumerate(instance.variables):
        try:
            values[k] = float(assignment[var.name])
        except KeyError:
            raise ValueError(f"missing value for variable {var.name}") from None
    out: list[RowViolation] = []
    for var, val in zip(instance.variables, values):
        excess = max(var.lower - val, val - var.upper, 0.0)
        if var.integer:
            excess = max(excess, abs(val - round(val)))
        if excess > tol:
            out.append(RowViolation(var.group, var.name, excess))
    for con in instance.constraints:
        lhs = sum(c * values[k] for k, c in con.coeffs)
        if con.sense == "<=":
            excess = lhs - con.rhs
        elif con.sense == ">=":
            excess = con.rhs - lhs
        else:
            excess = abs(lhs - con.rhs)
        if excess > tol:
            out.append(RowViolation(con.group, con.name, excess))
    return out


def _num(v: float) -> str:
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def _to_mps(inst: MilpInstance) -> str:
    out = ["NAME gridrestore", "OBJSENSE", "    MAX" if inst.sense == "max" else "    MIN", "ROWS"]
    has_obj = bool(inst.objective)
    if has_obj:
        out.append(" N obj")
    code = {"<=": "L", ">=": "G", "=": "E"}
    for con in inst.constraints:
        out.append(f" {code[con.sense]} {con.name}")
    by_col: dict[int, list[tuple[str, float]]] = {k: [] for k in range(len(inst.variables))}
    if has_obj:
        for k, c in inst.objective:
            by_col[k].append(("obj", c))
    for con in inst.constraints:
        for k, c in con.coeffs:
            by_col[k].append((con.name, c))
    out.append("COLUMNS")
    in_int = False
    for k, var in enumerate(inst.variables):
        if var.integer and not in_int:
            out.append("    MARKER 'MARKER' 'INTORG'")
            in_int = True
        elif not var.integer and in_int:
            out.append("    MARKER 'MARKER' 'INTEND'")
            in_int = False
        for row, c in by_col[k]:
            out.append(f"    {var.name} {row} {_num(c)}")
    if in_int:
        out.append("    MARKER 'MARKER' 'INTEND'")
    out.append("RHS")
    if has_obj and inst.objective_constant:
        out.append(f"    RHS obj {_num(-inst.objective_constant)}")
    for con in inst.constraints:
        if con.rhs != 0:
            out.append(f"    RHS {con.name} {_num(con.rhs)}")
    out.append("BOUNDS")
    for var in inst.variables:
        if var.integer and var.lower == 0 and var.upper == 1:
            out.append(f" BV BND {var.name}")
            continue
        if var.lower != 0:
            out.append(f" LO BND {var.name} {_num(var.lower)}")
        if math.isfinite(var.upper):
            out.append(f" UP BND {var.name} {_num(var.upper)}")
    out.append("ENDATA")
    return "\n".join(out) + "\n"


def _lp_expr(pairs: list[tuple[str, float]], per_line: int = 8) -> list[str]:
    chunks, line = [], []
    for k, (name, c) in enumerate(pairs):
        sign = "-" if c < 0 else "+"
        term = f"{_num(abs(c))} {name}"
        line.append(term if (k == 0 and c >= 0) else f"{sign} {term}")
        if len(line) == per_line:
            chunks.append(" ".join(line))
            line = []
    if line:
        chunks.append(" ".join(line))
    return chunks


def _to_lp(inst: MilpInstance) -> str:
    names = [v.name for v in inst.variables]
    out = ["\\ gridrestore repair-scheduling model", "Maximize" if inst.sense == "max" else "Minimize"]
    if inst.objective:
        expr = _lp_expr([(names[k], c) for k, c in inst.objective])
        if inst.objective_constant:
            c = inst.objective_constant
            expr[-1] += f" {'-' if c < 0 else '+'} {_num(abs(c))}"
        out.append(" obj: " + expr[0])
        out.extend("   " + e for e in expr[1:])
    out.append("Subject To")
    for con in inst.constraints:
        expr = _lp_expr([(names[k], c) for k, c in con.coeffs]) or ["0 " + names[0]]
        expr[-1] += f" {con.sense} {_num(con.rhs)}"
        out.append(f" {con.name}: " + expr[0])
        out.extend("   " + e for e in expr[1:])
    out.append("Bounds")
    for v in inst.variables:
        if v.integer and v.lower == 0 and v.upper == 1:
            continue
        upper = _num(v.upper) if math.isfinite(v.upper) else "+inf"
        out.append(f" {_num(v.lower)} <= {v.name} <= {upper}")
    binaries = [v.name for v in inst.variables if v.integer and v.lower == 0 and v.upper == 1]
    generals = [v.name for v in inst.variables if v.integer and not (v.lower == 0 and v.upper == 1)]
    if binaries:
        out.append("Binaries")
        out.extend(" " + name for name in binaries)
    if generals:
        out.append("Generals")
        out.extend(" " + name for name in generals)
    out.append("End")
    return "\n".join(out) + "\n"


def export_model(instance: MilpInstance, format: str = "mps") -> str:
    """Free-format MPS or CPLEX-style LP text.  Output is byte-stable."""
    if format == "mps":
        return _to_mps(instance)
    if format == "lp":
        return _to_lp(instance)
    raise ValueError(f"unknown model format {format!r}")
