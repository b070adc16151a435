import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridrestore.feeders import load_feeder, read_feeder
from gridrestore.model import (
    CrewSpec,
    HomeDegree,
    ModelOptions,
    Objective,
    assemble,
    effective_graph,
    evaluate,
    export_model,
)
from gridrestore.solve import Schedule, encode_schedule, solve_exact
from gridrestore.transform import PrecedenceDag, WorkingGraph, build_working_graphs

from oracles import count_formulas, milp_optimum, mps_violations, random_instance, read_free_mps


def fig2_graphs():
    net, tr = load_feeder("fig2")
    return build_working_graphs(net, tr, read_feeder("fig2").energized)


def chain4_graphs():
    net, tr = load_feeder("chain4")
    return build_working_graphs(net, tr)


def test_fig2_counts():
    gw, dag, _ = fig2_graphs()
    crews = CrewSpec.uniform(2, 60)
    inst = assemble(gw, dag, crews)
    assert (inst.count("y"), inst.count("x"), inst.count("f")) == (14, 42, 42)
    assert len(inst.group("const11")) == 2
    full = assemble(gw, dag, crews, ModelOptions(skip_root_precedence=False))
    assert len(full.group("const11")) == 6


def test_variable_domains():
    gw, dag, _ = fig2_graphs()
    inst = assemble(gw, dag, CrewSpec.uniform(2, 60))
    for v in inst.variables:
        kind = v.name.split("_")[0]
        if kind == "y":
            assert (v.lower, v.upper, v.integer) == (0, 1, True)
        elif kind == "x":
            top = 2 if v.name.split("_")[1] == "0" else 1
            assert (v.lower, v.upper, v.integer) == (0, top, True)
        else:
            assert (v.lower, v.upper, v.integer) == (0, math.inf, False)


def test_budget_row_uses_effective_budget():
    gw, dag, _ = chain4_graphs()
    for window, rhs in ((math.inf, 30), (45, 30), (25, 25)):
        inst = assemble(gw, dag, CrewSpec((30,), window))
        (row,) = inst.group("const10")
        assert row.rhs == rhs


def test_relaxed_mode_loosens_only_root_degree():
    gw, dag, _ = fig2_graphs()
    strict = assemble(gw, dag, CrewSpec.uniform(2, 60))
    relaxed = assemble(gw, dag, CrewSpec.uniform(2, 60), ModelOptions(home_degree="relaxed"))
    s = {r.name: r.sense for r in strict.group("const8")}
    r = {r.name: r.sense for r in relaxed.group("const8")}
    assert set(s.values()) == {"="}
    assert {k for k, v in r.items() if v == "<="} == {"const8_0_1", "const8_0_2"}


def test_dummy_mode_appends_parking_node():
    gw, dag, _ = fig2_graphs()
    inst = assemble(gw, dag, CrewSpec.uniform(2, 60), ModelOptions(home_degree="dummy"))
    assert inst.n == gw.n + 1 and inst.count("y") == 2 * (gw.n + 1)
    assert inst.meta["dummy"] == gw.n
    # the parking node has no single-crew row and no reward
    assert f"const7_{gw.n}" not in {r.name for r in inst.group("const7")}
    assert all(inst.variables[k].name.split("_")[1] != str(gw.n) for k, _ in inst.objective)


@pytest.mark.parametrize("seed", range(20))
def test_counts_match_formulas(seed):
    rng = random.Random(seed)
    gw, dag = random_instance(rng, rng.randint(1, 7))
    m = rng.randint(1, 4)
    vi = seed % 2 == 0
    inst = assemble(gw, dag, CrewSpec.uniform(m, 60), ModelOptions(valid_inequalities=vi))
    want = count_formulas(gw.n, m, vi)
    sizes = inst.group_sizes()
    assert inst.count("y") == want["y"]
    assert inst.count("x") == want["x"]
    assert inst.count("f") == want["f"]
    assert sizes.get("vi", 0) == want["vi"]
    for group in ("const1", "const7", "const8", "const10", "scf1", "scf2", "scf3", "scf4"):
        assert sizes[group] == want[group], group
    assert len(inst.variables) == want["y"] + want["x"] + want["f"]


def test_nothing_to_schedule():
    gw = WorkingGraph(repair=[0], reward=[0], travel=np.zeros((1, 1)))
    with pytest.raises(ValueError, match="nothing to schedule"):
        assemble(gw, PrecedenceDag(()), CrewSpec.uniform(1, 30))


def test_uncollapsed_graph_rejected():
    gw = WorkingGraph(repair=[0, 0, 5], reward=[0, 0, 1], travel=np.zeros((3, 3)), damaged=[False, False, True])
    with pytest.raises(ValueError, match="collapsed"):
        assemble(gw, PrecedenceDag(((0, 1), (1, 2))), CrewSpec.uniform(1, 30))


# ---------------------------------------------------------------- evaluate

def test_all_zero_point_violates_root_degree():
    gw, dag, _ = chain4_graphs()
    inst = assemble(gw, dag, CrewSpec((30,)))
    point = {v.name: 0.0 for v in inst.variables}
    point["y_0_1"] = 1.0
    groups = {v.group for v in evaluate(inst, point)}
    assert "const8" in groups
    assert any(v.name == "const8_0_1" for v in evaluate(inst, point))


def test_optimal_chain4_point_is_clean():
    gw, dag, _ = chain4_graphs()
    crews = CrewSpec((30,))
    sol = solve_exact(gw, dag, crews)
    inst = assemble(gw, dag, crews)
    assert evaluate(inst, encode_schedule(inst, gw, sol.schedule)) == []
    assert inst.objective_value(np.array([encode_schedule(inst, gw, sol.schedule)[v.name]
                                          for v in inst.variables])) == 1.0


def test_missing_flows_break_conservation():
    gw, dag, _ = chain4_graphs()
    inst = assemble(gw, dag, CrewSpec((30,)))
    point = encode_schedule(inst, gw, Schedule(((1,),)))
    for name in point:
        if name.startswith("f_"):
            point[name] = 0.0
    groups = {v.group for v in evaluate(inst, point)}
    assert groups & {"scf1", "scf2"}


def test_missing_variable_raises():
    gw, dag, _ = chain4_graphs()
    inst = assemble(gw, dag, CrewSpec((30,)))
    with pytest.raises(ValueError, match="missing"):
        evaluate(inst, {"y_0_1": 1.0})


# ---------------------------------------------------------------- export

def test_chain4_mps_integer_columns():
    gw, dag, _ = chain4_graphs()
    model = read_free_mps(export_model(assemble(gw, dag, CrewSpec((30,)))))
    ys = [c for c in model["order"] if c.startswith("y_")]
    assert len(ys) == 4 and set(ys) <= model["integer"]
    assert not any(c.startswith("f_") for c in model["integer"])


def test_export_is_byte_stable():
    gw, dag, _ = fig2_graphs()
    crews = CrewSpec.uniform(2, 60)
    for fmt in ("mps", "lp"):
        a = export_model(assemble(gw, dag, crews, ModelOptions(valid_inequalities=True)), fmt)
        b = export_model(assemble(gw, dag, crews, ModelOptions(valid_inequalities=True)), fmt)
        assert a == b


def test_unknown_format():
    gw, dag, _ = chain4_graphs()
    with pytest.raises(ValueError):
        export_model(assemble(gw, dag, CrewSpec((30,))), "xml")


def test_zero_objective_row_not_emitted():
    gw = WorkingGraph(repair=[0, 5], reward=[0, 0], travel=np.zeros((2, 2)))
    inst = assemble(gw, PrecedenceDag(((0, 1),)), CrewSpec((30,)))
    text = export_model(inst)
    assert " N obj" not in text and "obj" not in read_free_mps(text)["rhs"]
    assert "obj:" not in export_model(inst, "lp")


@pytest.mark.parametrize("mode", ["strict", "relaxed", "dummy"])
def test_mps_round_trip_feasible_point(mode):
    gw, dag, _ = fig2_graphs()
    crews = CrewSpec.uniform(2, 60)
    opts = ModelOptions(home_degree=mode, valid_inequalities=True, skip_root_precedence=False)
    inst = assemble(gw, dag, crews, opts)
    g = effective_graph(gw, opts)
    sol = solve_exact(gw, dag, crews, opts)
    point = encode_schedule(inst, g, sol.schedule)
    model = read_free_mps(export_model(inst))
    assert model["sense"] == "MAX"
    assert set(model["order"]) == {v.name for v in inst.variables}
    assert len(model["rows"]) == len(inst.constraints)
    assert mps_violations(model, point) == []
    obj = sum(model["cols"][c].get(model["obj"], 0.0) * point[c] for c in model["cols"])
    assert obj == pytest.approx(sol.objective)


def test_lp_names_every_row():
    gw, dag, _ = fig2_graphs()
    inst = assemble(gw, dag, CrewSpec.uniform(2, 60))
    text = export_model(inst, "lp")
    for con in inst.constraints:
        assert f" {con.name}: " in text
    assert text.startswith("\\") and text.rstrip().endswith("End")


# ---------------------------------------------------------------- objective

def test_profit_with_zero_penalty_equals_reward():
    gw, dag, _ = fig2_graphs()
    crews = CrewSpec.uniform(2, 60)
    a = assemble(gw, dag, crews, ModelOptions(objective="reward"))
    b = assemble(gw, dag, crews, ModelOptions(objective="profit"))
    assert a.objective == b.objective and b.objective_constant == 0


def test_profit_constant_counts_every_crew():
    rng = random.Random(3)
    gw, dag = random_instance(rng, 5)
    inst = assemble(gw, dag, CrewSpec.uniform(3, 60), ModelOptions(objective=Objective.PROFIT))
    assert inst.objective_constant == -3 * sum(gw.penalty)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from([0.5, 2.0, 7.0]))
def test_reward_scaling_is_linear(seed, k):
    rng = random.Random(seed)
    gw, dag = random_instance(rng, rng.randint(2, 5))
    crews = CrewSpec.uniform(rng.randint(1, 2), 60)
    scaled = WorkingGraph(repair=gw.repair, reward=gw.reward * k, travel=gw.travel,
                          penalty=gw.penalty, root_travel=gw.root_travel)
    base = solve_exact(gw, dag, crews, ModelOptions(home_degree="relaxed"))
    big = solve_exact(scaled, dag, crews, ModelOptions(home_degree="relaxed"))
    assert big.objective == pytest.approx(k * base.objective)
    # the base optimum stays optimal after scaling
    assert sum(scaled.reward[j] for j in base.schedule.jobs()) == pytest.approx(big.objective)
    a = assemble(gw, dag, crews)
    b = assemble(scaled, dag, crews)
    assert [i for i, _ in a.objective] == [i for i, _ in b.objective]
    assert [k * c for _, c in a.objective] == pytest.approx([c for _, c in b.objective])


def test_root_edge_degree_bound():
    # any feasible point uses each root edge at most twice per crew
    gw, dag, _ = fig2_graphs()
    crews = CrewSpec.uniform(2, 60)
    inst = assemble(gw, dag, crews)
    point = encode_schedule(inst, gw, solve_exact(gw, dag, crews).schedule)
    for j in range(1, gw.n):
        assert sum(point[f"x_0_{j}_{c}"] for c in (1, 2)) <= 2 * 2
        for i in range(1, j):
            assert sum(point[f"x_{i}_{j}_{c}"] for c in (1, 2)) <= 2


# ---------------------------------------------------------------- milp cross-check

@pytest.mark.parametrize("seed", range(12))
def test_milp_optimum_matches_search(seed):
    rng = random.Random(100 + seed)
    gw, dag = random_instance(rng, rng.randint(1, 5))
    crews = CrewSpec(tuple(rng.choice([30, 60, 90]) for _ in range(rng.randint(1, 2))))
    opts = ModelOptions(objective=rng.choice(list(Objective)), home_degree=rng.choice(list(HomeDegree)),
                        valid_inequalities=seed % 3 == 0)
    sol = solve_exact(gw, dag, crews, opts)
    value = milp_optimum(assemble(gw, dag, crews, opts))
    if sol.feasible:
        assert value == pytest.approx(sol.objective, abs=1e-6)
    else:
        assert value is None
