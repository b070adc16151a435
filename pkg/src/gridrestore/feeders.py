"""Feeder ingestion, damage sampling and travel matrices for experiments."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Hashable

import numpy as np
from scipy.optimize import brentq
from scipy.special import gamma, gammaincc

from .network import DistributionNetwork, Line, TransportGraph, validate_radial
from .rng import SplitMix64
from .transform import DistanceTable, apsp

BUILTIN = ("ieee13", "ieee34", "ieee123", "chain4", "fig2")


class FeederFormatError(ValueError):
    pass


@dataclass(frozen=True)
class FeederEdge:
    u: Hashable
    v: Hashable
    length_ft: float
    switch: bool = False
    damaged: bool = False
    repair_time: float = 0.0
    reward: float = 0.0
    penalty: float = 0.0

    @property
    def key(self) -> frozenset:
        return frozenset((self.u, self.v))


@dataclass(frozen=True)
class FeederSpec:
    name: str
    source: Hashable
    edges: tuple[FeederEdge, ...]
    patches: tuple[dict, ...] = ()
    energized: tuple = ()

    def __post_init__(self):
        buses = {b for e in self.edges for b in (e.u, e.v)}
        if self.source not in buses:
            raise FeederFormatError(f"source {self.source!r} is not on any edge")
        for e in self.edges:
            if e.length_ft < 0:
                raise FeederFormatError(f"edge ({e.u}, {e.v}) has negative length")


def feeder_path(name: str) -> Path:
    if name not in BUILTIN:
        raise FeederFormatError(f"unknown built-in feeder {name!r}; choose from {', '.join(BUILTIN)}")
    return Path(str(resources.files("gridrestore") / "data" / f"{name}.json"))


def _resolve(path_or_name) -> Path:
    if isinstance(path_or_name, str) and path_or_name in BUILTIN and not Path(path_or_name).exists():
        return feeder_path(path_or_name)
    return Path(path_or_name)


def parse_feeder(text: str, origin: str = "<string>") -> FeederSpec:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise FeederFormatError(f"{origin}: line {e.lineno}, column {e.colno}: {e.msg}") from None
    try:
        edges = tuple(
            FeederEdge(
                e["from"], e["to"], float(e["length_ft"]),
                switch=bool(e.get("switch", False)),
                damaged=bool(e.get("damaged", False)),
                repair_time=float(e.get("repair_time", 0.0)),
                reward=float(e.get("reward", 0.0)),
                penalty=float(e.get("penalty", 0.0)),
            )
            for e in doc["edges"]
        )
        return FeederSpec(
            name=str(doc.get("name", Path(origin).stem)),
            source=doc["source"],
            edges=edges,
            patches=tuple(doc.get("patches", ())),
            energized=tuple(doc.get("energized", ())),
        )
    except (KeyError, TypeError, ValueError) as e:
        if isinstance(e, FeederFormatError):
            raise FeederFormatError(f"{origin}: {e}") from None
        raise FeederFormatError(f"{origin}: malformed feeder document ({type(e).__name__}: {e})") from None


def read_feeder(path_or_name) -> FeederSpec:
    path = _resolve(path_or_name)
    try:
        text = path.read_text()
    except OSError as e:
        raise FeederFormatError(f"cannot read feeder {str(path)!r}: {e.strerror}") from None
    return parse_feeder(text, str(path))


def apply_patches(spec: FeederSpec) -> FeederSpec:
    """Apply the modification list; the result carries no pending patches."""
    edges = list(spec.edges)
    deletions = set()
    floor = 0.0
    for patch in spec.patches:
        op = patch.get("op")
        if op == "delete":
            key = frozenset(patch["edge"])
            if not any(e.key == key for e in edges):
                raise FeederFormatError(f"patch deletes missing edge {tuple(patch['edge'])!r}")
            deletions.add(key)
        elif op == "floor_length":
            floor = max(floor, float(patch["min_ft"]))
        else:
            raise FeederFormatError(f"unknown patch op {op!r}")
    edges = [replace(e, length_ft=max(e.length_ft, floor)) for e in edges if e.key not in deletions]
    return replace(spec, edges=tuple(edges), patches=())


def build_network(spec: FeederSpec) -> tuple[DistributionNetwork, TransportGraph]:
    lines = [Line(e.u, e.v, e.length_ft, e.damaged, e.repair_time, e.reward, e.penalty) for e in spec.edges]
    net = DistributionNetwork.from_lines(lines, spec.source)
    report = validate_radial(net)
    if not report.ok:
        raise FeederFormatError(f"feeder {spec.name!r} is not radial: {report.violations[0].detail}")
    return net, TransportGraph.from_network(net)


def load_feeder(path_or_name) -> tuple[DistributionNetwork, TransportGraph]:
    """Read, patch and validate a feeder; the transport graph mirrors the lines."""
    return build_network(apply_patches(read_feeder(path_or_name)))


# ---------------------------------------------------------------- damage


def post_floor_mean(scale: float, shape: float, floor: float) -> float:
    """E[max(floor, X)] for X ~ Weibull(shape, scale)."""
    if scale <= 0:
        return float(floor)
    t = (floor / scale) ** shape
    a = 1.0 + 1.0 / shape
    return float(floor * -math.expm1(-t) + scale * gamma(a) * gammaincc(a, t))


def calibrate_scale(mean: float, shape: float = 2.0, floor: float = 30.0) -> float:
    """Weibull scale whose floored mean equals `mean`."""
    if shape <= 0:
        raise ValueError("shape must be positive")
    if mean < floor:
        raise ValueError(f"mean {mean} is below the floor {floor}")
    if mean == floor:
        return 0.0
    hi = max(mean, 1.0)
    while post_floor_mean(hi, shape, floor) < mean:
        hi *= 2.0
    return float(brentq(lambda s: post_floor_mean(s, shape, floor) - mean, 0.0, hi, xtol=1e-12, rtol=1e-14))


@dataclass(frozen=True)
class DamagePlan:
    damaged: str | tuple = "all"  # "all" or explicit (u, v) pairs
    shape: float = 2.0
    scale: float = 1.0
    floor: float = 30.0
    seed: int = 0
    speed: float = 1.0  # ft/min
    reward: float = 1.0
    penalty: float = 0.0

    def __post_init__(self):
        if self.shape <= 0 or self.scale < 0 or self.speed <= 0:
            raise ValueError("shape and speed must be positive, scale non-negative")
        if self.floor < 0:
            raise ValueError("floor must be non-negative")
        if self.damaged != "all":
            object.__setattr__(self, "damaged", tuple(tuple(p) for p in self.damaged))

    @classmethod
    def for_mean(cls, mean: float, *, shape: float = 2.0, floor: float = 30.0, **kw) -> "DamagePlan":
        return cls(shape=shape, scale=calibrate_scale(mean, shape, floor), floor=floor, **kw)

    def selects(self, line: Line) -> bool:
        return self.damaged == "all" or any(frozenset(p) == line.key for p in self.damaged)


@dataclass(frozen=True)
class RepairSample:
    lines: tuple[tuple, ...]  # (u, v) in network order
    times: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.times)) if self.times else 0.0

    def as_dict(self) -> dict:
        return dict(zip(self.lines, self.times))


def weibull_draws(rng: SplitMix64, count: int, shape: float, scale: float, floor: float) -> list[float]:
    out = []
    for _ in range(count):
        x = scale * (-math.log1p(-rng.random())) ** (1.0 / shape)
        out.append(max(floor, x))
    return out


def sample_repair_times(plan: DamagePlan, net: DistributionNetwork, trial: int = 0) -> RepairSample:
    chosen = [ln for ln in net.lines if plan.selects(ln)]
    if plan.damaged != "all":
        known = {ln.key for ln in net.lines}
        missing = [p for p in plan.damaged if frozenset(p) not in known]
        if missing:
            raise ValueError(f"damage plan names unknown lines {missing!r}")
    rng = SplitMix64.derive(plan.seed, trial)
    times = weibull_draws(rng, len(chosen), plan.shape, plan.scale, plan.floor)
    return RepairSample(tuple((ln.u, ln.v) for ln in chosen), tuple(times))


def apply_damage(net: DistributionNetwork, sample: RepairSample, reward: float = 1.0,
                 penalty: float = 0.0) -> DistributionNetwork:
    times = {frozenset(uv): t for uv, t in zip(sample.lines, sample.times)}
    lines = []
    for ln in net.lines:
        t = times.get(ln.key)
        if t is None:
            lines.append(ln)
        else:
            lines.append(replace(ln, damaged=True, repair_time=t, reward=reward, penalty=penalty))
    return net.replace_lines(lines)


def damage_network(net: DistributionNetwork, plan: DamagePlan, trial: int = 0):
    sample = sample_repair_times(plan, net, trial)
    return apply_damage(net, sample, plan.reward, plan.penalty), sample


def travel_time_matrix(net: DistributionNetwork, speed: float,
                       transport: TransportGraph | None = None) -> DistanceTable:
    """Bus-to-bus travel minutes.

    Every non-source bus is the downstream site of exactly one line, so this
    table holds all job-site pairs plus the source's site.
    """
    if speed <= 0:
        raise ValueError("speed must be positive")
    table = apsp(transport or TransportGraph.from_network(net))
    return DistanceTable(table.nodes, table.matrix / speed)


def off_diagonal_range(table: DistanceTable) -> tuple[float, float]:
    m = table.matrix
    mask = ~np.eye(m.shape[0], dtype=bool)
    vals = m[mask]
    return float(vals.min()), float(vals.max())


def emit_samples_csv(sample: RepairSample, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["from", "to", "repair_time"])
        for (u, v), t in zip(sample.lines, sample.times):
            w.writerow([u, v, f"{t:.6f}"])
