"""Exact multi-crew repair scheduling for damaged radial distribution networks."""

from .feeders import (
    DamagePlan,
    FeederFormatError,
    RepairSample,
    calibrate_scale,
    damage_network,
    load_feeder,
    sample_repair_times,
    travel_time_matrix,
)
from .horizon import Scenario, load_scenario, run_window, simulate
from .metrics import MetricRow, emit_csv, marginal_aggregate_reward, nar_per_crew, nuwt
from .model import CrewSpec, HomeDegree, MilpInstance, ModelOptions, Objective, assemble, evaluate, export_model
from .network import DistributionNetwork, Line, TransportGraph, orient_power_flow, validate_radial
from .solve import (
    Schedule,
    SearchLimits,
    Solution,
    Status,
    check_schedule,
    encode_schedule,
    solve_bruteforce,
    solve_exact,
)
from .transform import PrecedenceDag, WorkingGraph, apsp, build_working_graphs, collapse_undamaged

__version__ = "0.1.0"

__all__ = [
    "CrewSpec",
    "DamagePlan",
    "DistributionNetwork",
    "FeederFormatError",
    "HomeDegree",
    "Line",
    "MetricRow",
    "MilpInstance",
    "ModelOptions",
    "Objective",
    "PrecedenceDag",
    "RepairSample",
    "Scenario",
    "Schedule",
    "SearchLimits",
    "Solution",
    "Status",
    "TransportGraph",
    "WorkingGraph",
    "apsp",
    "assemble",
    "build_working_graphs",
    "calibrate_scale",
    "check_schedule",
    "collapse_undamaged",
    "damage_network",
    "emit_csv",
    "encode_schedule",
    "evaluate",
    "export_model",
    "load_feeder",
    "load_scenario",
    "marginal_aggregate_reward",
    "nar_per_crew",
    "nuwt",
    "orient_power_flow",
    "run_window",
    "sample_repair_times",
    "simulate",
    "solve_bruteforce",
    "solve_exact",
    "travel_time_matrix",
    "validate_radial",
]
