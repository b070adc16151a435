"""Command-line entry point: transform, solve, simulate, sweep."""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

from .feeders import (
    DamagePlan,
    FeederFormatError,
    apply_patches,
    build_network,
    damage_network,
    read_feeder,
)
from .horizon import HorizonError, ScenarioError, load_scenario, simulate
from .metrics import MetricRow, aggregate_reward_normalized, format_csv, mean_travel, nar_per_crew, nuwt
from .model import CrewSpec, HomeDegree, ModelOptions, Objective, assemble, effective_graph, export_model
from .rng import SplitMix64
from .solve import SearchLimits, Solution, Status, solve_exact
from .transform import build_working_graphs

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 2, 3, 4


class InputError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _line_list(text: str) -> list[tuple]:
    pairs = []
    for item in text.replace(",", " ").split():
        u, _, v = item.partition("-")
        if not v:
            raise argparse.ArgumentTypeError(f"expected lines like 632-671, got {item!r}")
        pairs.append((_bus(u), _bus(v)))
    return pairs


def _bus(token: str):
    try:
        return int(token)
    except ValueError:
        return token


# ------------------------------------------------------------ instances


@dataclass
class Instance:
    gw: object
    dag: object
    jobs: object
    mean_repair: float
    speed: float


def _plan(args, seed: int) -> DamagePlan | None:
    if args.mean_repair is None:
        return None
    damaged = "all" if not args.damaged else tuple(args.damaged)
    return DamagePlan.for_mean(args.mean_repair, shape=args.shape, floor=args.floor, seed=seed,
                               speed=args.speed, damaged=damaged)


def build_instance(args) -> Instance:
    spec = apply_patches(read_feeder(args.feeder))
    net, transport = build_network(spec)
    plan = _plan(args, args.seed)
    if plan is not None:
        net = net.replace_lines([replace(ln, damaged=False, repair_time=0.0, reward=0.0, penalty=0.0)
                                 for ln in net.lines])
        net, _ = damage_network(net, plan)
    if not net.damaged_lines:
        raise InputError("feeder has no damaged lines; pass --mean-repair to sample damage")
    energized = args.energized or spec.energized or None
    gw, dag, jobs = build_working_graphs(net, transport, energized, args.speed)
    mean = sum(ln.repair_time for ln in net.damaged_lines) / len(net.damaged_lines)
    return Instance(gw, dag, jobs, mean, args.speed)


def _crews(args) -> CrewSpec:
    window = math.inf if args.window is None else args.window
    budgets = args.budgets
    if budgets is None:
        if math.isinf(window):
            raise InputError("give --budgets or --window")
        budgets = [window]
    if len(budgets) == 1:
        budgets = budgets * args.crews
    if len(budgets) != args.crews:
        raise InputError(f"--budgets lists {len(budgets)} values for {args.crews} crews")
    return CrewSpec(tuple(budgets), window)


def _options(args) -> ModelOptions:
    return ModelOptions(Objective(args.objective), HomeDegree.parse(args.mode), args.vi)


def _limits(args) -> SearchLimits:
    return SearchLimits(args.time_limit, args.node_limit, args.gap, args.rel_gap)


def _json_num(x: float):
    if x is None or (isinstance(x, float) and (math.isnan(x) or math.isinf(x))):
        return None
    return float(x)


def _write(text: str, out: str | None):
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


# ------------------------------------------------------------ commands


def cmd_transform(args) -> int:
    inst = build_instance(args)
    gw = inst.gw
    doc = {
        "n": gw.n,
        "labels": [list(lb) if isinstance(lb, tuple) else lb for lb in gw.labels],
        "repair": [float(x) for x in gw.repair],
        "reward": [float(x) for x in gw.reward],
        "penalty": [float(x) for x in gw.penalty],
        "travel": [[float(x) for x in row] for row in gw.travel],
        "arcs": [list(a) for a in inst.dag.arcs],
    }
    _write(json.dumps(doc, indent=1) + "\n", args.out)
    return EXIT_OK


def _solution_doc(sol: Solution, gw, timing: bool) -> dict:
    tours = [] if sol.schedule is None else [list(t) for t in sol.schedule.tours]
    doc = {
        "status": sol.status.value,
        "objective": _json_num(sol.objective),
        "reward": sol.reward,
        "lower_bound": _json_num(sol.lower_bound),
        "upper_bound": _json_num(sol.upper_bound),
        "gap": _json_num(sol.gap),
        "nodes": sol.nodes,
        "tours": tours,
        "tour_lines": [[list(gw.labels[j]) if isinstance(gw.labels[j], tuple) else gw.labels[j] for j in t]
                       for t in tours],
        "spent": [] if sol.schedule is None else sol.schedule.spent(gw),
    }
    if timing:
        doc["elapsed"] = sol.elapsed
    return doc


def cmd_solve(args) -> int:
    inst = build_instance(args)
    crews = _crews(args)
    opts = _options(args)
    if args.export_mps or args.export_lp:
        model = assemble(inst.gw, inst.dag, crews, opts)
        if args.export_mps:
            Path(args.export_mps).write_text(export_model(model, "mps"))
        if args.export_lp:
            Path(args.export_lp).write_text(export_model(model, "lp"))
    sol = solve_exact(inst.gw, inst.dag, crews, opts, _limits(args))
    g = effective_graph(inst.gw, opts)
    doc = _solution_doc(sol, g, args.timing)
    if args.out:
        Path(args.out).write_text(json.dumps(doc, indent=1) + "\n")
    lines = [f"status: {sol.status.value}", f"AR: {sol.reward:g}"]
    if sol.schedule is not None:
        lines.append(f"objective: {sol.objective:g}")
        lines.append(f"LB: {sol.lower_bound:g}  UB: {sol.upper_bound:g}  gap: {sol.gap:g}")
        for c, (tour, spent) in enumerate(zip(doc["tour_lines"], doc["spent"]), start=1):
            path = " -> ".join(str(tuple(x)) if isinstance(x, list) else str(x) for x in tour) or "(home)"
            lines.append(f"crew {c} [{spent:.3f} min]: {path}")
    print("\n".join(lines))
    if sol.status is Status.INFEASIBLE:
        return EXIT_INFEASIBLE
    if sol.schedule is None:
        return EXIT_LIMIT
    return EXIT_OK


SIM_HEADER = ("window", "crew", "from", "to", "start", "end", "outcome", "residual",
              "window_reward", "cumulative_reward")


def cmd_simulate(args) -> int:
    sc = load_scenario(args.scenario)
    timeline = simulate(sc, _options(args), _limits(args))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SIM_HEADER)
    for res, total in zip(timeline.results, timeline.cumulative_rewards):
        lit = {frozenset(line) for line in res.energized}
        shown = set()
        for v in res.visits:
            key = frozenset(v.line)
            outcome = "carried" if not v.finished else ("energized" if key in lit else "repaired")
            shown.add(key)
            w.writerow([res.window, v.crew + 1, v.line[0], v.line[1], f"{v.start:.6f}", f"{v.end:.6f}",
                        outcome, f"{v.residual:.6f}", f"{res.reward:.6f}", f"{total:.6f}"])
        for line in res.energized:
            if frozenset(line) not in shown:
                w.writerow([res.window, "", line[0], line[1], "", "", "energized", f"{0:.6f}",
                            f"{res.reward:.6f}", f"{total:.6f}"])
    _write(buf.getvalue(), args.out)
    return EXIT_OK


# ------------------------------------------------------------ sweep


SWEEP_KEYS = {"feeder", "speed", "ratio", "mean_repair", "budget", "crews", "shape", "floor", "trials",
              "seed", "mode", "objective", "vi", "time_limit", "gap", "rel_gap", "resample", "workers",
              "energized"}


def _as_list(x):
    return list(x) if isinstance(x, (list, tuple)) else [x]


def load_sweep(path, args) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as e:
        raise InputError(f"cannot read sweep spec {str(path)!r}: {e.strerror}") from None
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    unknown = set(doc) - SWEEP_KEYS
    if unknown:
        raise InputError(f"unknown sweep keys: {', '.join(sorted(unknown))}")
    if "feeder" not in doc or "mean_repair" not in doc or "budget" not in doc:
        raise InputError("sweep spec needs feeder, mean_repair and budget")
    if ("speed" in doc) == ("ratio" in doc):
        raise InputError("sweep spec needs exactly one of speed or ratio")
    overrides = {"seed": args.seed, "trials": args.trials, "time_limit": args.time_limit, "mode": args.mode,
                 "objective": args.objective, "gap": args.gap}
    for key, val in overrides.items():
        if val is not None:
            doc[key] = val
    if args.vi:
        doc["vi"] = True
    doc.setdefault("crews", 1)
    doc.setdefault("shape", 2.0)
    doc.setdefault("floor", 30.0)
    doc.setdefault("trials", 1)
    doc.setdefault("seed", 0)
    doc.setdefault("mode", "strict")
    doc.setdefault("objective", "reward")
    doc.setdefault("resample", 0)
    return doc


def sweep_cells(doc: dict) -> list[dict]:
    cells = []
    axis = ("ratio", _as_list(doc["ratio"])) if "ratio" in doc else ("speed", _as_list(doc["speed"]))
    for mean in _as_list(doc["mean_repair"]):
        for budget in _as_list(doc["budget"]):
            for m in _as_list(doc["crews"]):
                for val in axis[1]:
                    cells.append({"mean_repair": float(mean), "budget": float(budget), "crews": int(m),
                                  axis[0]: float(val)})
    return cells


def run_trial(doc: dict, cell_index: int, cell: dict, trial: int, timing: bool) -> MetricRow:
    spec = apply_patches(read_feeder(doc["feeder"]))
    net0, transport = build_network(spec)
    opts = ModelOptions(Objective(doc["objective"]), HomeDegree.parse(doc["mode"]), bool(doc.get("vi", False)))
    limits = SearchLimits(doc.get("time_limit"), None, float(doc.get("gap", 0.0)), float(doc.get("rel_gap", 0.0)))
    crews = CrewSpec.uniform(cell["crews"], cell["budget"])
    energized = doc.get("energized") or spec.energized or None
    attempts = int(doc.get("resample", 0)) + 1
    row = None
    for attempt in range(attempts):
        seed = SplitMix64.derive(int(doc["seed"]), trial, attempt).next_u64()
        plan = DamagePlan.for_mean(cell["mean_repair"], shape=float(doc["shape"]), floor=float(doc["floor"]),
                                   seed=seed)
        net, sample = damage_network(net0, plan)
        if "ratio" in cell:
            # speed chosen so that mean repair / mean travel equals the ratio
            gw1, _, _ = build_working_graphs(net, transport, energized, 1.0)
            dist = mean_travel(gw1.travel)
            speed = dist * cell["ratio"] / sample.mean if dist > 0 else 1.0
        else:
            speed = cell["speed"]
        gw, dag, _ = build_working_graphs(net, transport, energized, speed)
        sol = solve_exact(gw, dag, crews, opts, limits)
        g = effective_graph(gw, opts)
        spent = sol.schedule.spent(g) if sol.schedule is not None else [math.nan] * crews.m
        n, m = gw.n, crews.m
        row = MetricRow(
            instance_id=f"c{cell_index}-t{trial}-a{attempt}",
            n=n, m=m,
            mean_repair=sample.mean,
            mean_travel=mean_travel(gw.travel),
            budget=cell["budget"],
            ar=sol.reward,
            nar=aggregate_reward_normalized(sol.reward, n) if n >= 2 else math.nan,
            nar_per_crew=nar_per_crew(sol.reward, n, m) if n >= 2 else math.nan,
            nuwt=nuwt(spent, crews.effective) if sol.schedule is not None else math.nan,
            lb=sol.lower_bound, ub=sol.upper_bound, gap=sol.gap,
            status=sol.status.value,
            elapsed=sol.elapsed if timing else 0.0,
        )
        if sol.status is not Status.INFEASIBLE:
            break
    return row


def _trial_job(payload):
    doc, ci, cell, t, timing = payload
    try:
        return run_trial(doc, ci, cell, t, timing)
    except Exception as e:  # recorded per row, the sweep continues
        nan = math.nan
        return MetricRow(f"c{ci}-t{t}", 0, cell["crews"], nan, nan, cell["budget"], nan, nan, nan, nan,
                         nan, nan, nan, f"Error: {type(e).__name__}: {e}".replace(",", ";"), 0.0)


def cmd_sweep(args) -> int:
    doc = load_sweep(args.spec, args)
    read_feeder(doc["feeder"])  # fail fast on a bad feeder
    payloads = [(doc, ci, cell, t, args.timing)
                for ci, cell in enumerate(sweep_cells(doc)) for t in range(int(doc["trials"]))]
    workers = args.workers if args.workers is not None else int(doc.get("workers", 1))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_trial_job, payloads))
    else:
        rows = [_trial_job(p) for p in payloads]
    _write(format_csv(rows), args.out)
    return EXIT_OK


# ------------------------------------------------------------ parser


def _instance_flags(p: argparse.ArgumentParser):
    p.add_argument("--feeder", required=True, help="built-in name (ieee13, ieee34, ieee123, chain4, fig2) or JSON path")
    p.add_argument("--speed", type=float, default=1.0, help="crew travel speed, ft/min")
    p.add_argument("--mean-repair", type=float, help="sample Weibull repair times with this floored mean")
    p.add_argument("--shape", type=float, default=2.0)
    p.add_argument("--floor", type=float, default=30.0)
    p.add_argument("--damaged", type=_line_list, help="damage only these lines, e.g. '632-671 671-684'")
    p.add_argument("--energized", type=lambda s: [_bus(x) for x in s.replace(",", " ").split()],
                   help="buses already energized (default: the source)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="output file (default stdout)")


def _solver_flags(p: argparse.ArgumentParser, sweep: bool = False):
    default = None if sweep else "strict"
    p.add_argument("--mode", choices=["strict", "relaxed", "dummy"], default=default)
    p.add_argument("--vi", action="store_true", help="add the valid inequalities to exported models")
    p.add_argument("--objective", choices=["reward", "profit"], default=None if sweep else "reward")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--gap", type=float, default=None if sweep else 0.0, help="absolute UB-LB target")
    p.add_argument("--rel-gap", type=float, default=0.0)
    p.add_argument("--node-limit", type=int)
    p.add_argument("--timing", action="store_true", help="report wall-clock times (breaks byte-identical output)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridrestore", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="dump the job graph and precedence arcs as JSON")
    _instance_flags(p)
    p.set_defaults(func=cmd_transform)

    p = sub.add_parser("solve", help="solve one restoration window exactly")
    _instance_flags(p)
    _solver_flags(p)
    p.add_argument("--crews", type=int, default=1)
    p.add_argument("--budgets", type=_floats, help="per-crew time budgets in minutes (one value = all crews)")
    p.add_argument("--window", type=float, help="restoration window length in minutes")
    p.add_argument("--export-mps", metavar="PATH")
    p.add_argument("--export-lp", metavar="PATH")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="run a rolling-horizon scenario and write a timeline CSV")
    p.add_argument("scenario")
    _solver_flags(p)
    p.add_argument("--seed", type=int, default=None, help="ignored; the scenario file carries its own seed")
    p.add_argument("--out")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="run an experiment grid and write a metrics CSV")
    p.add_argument("spec", help="JSON sweep specification")
    _solver_flags(p, sweep=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InputError, FeederFormatError, ScenarioError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except HorizonError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
