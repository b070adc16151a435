"""Evaluation metrics and their CSV form."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import astuple, dataclass, fields
from typing import Iterable, Sequence

import numpy as np


def aggregate_reward_normalized(ar: float, n: int) -> float:
    if n < 2:
        raise ValueError("n must be at least 2")
    return ar / (n - 1)


def nar_per_crew(ar: float, n: int, m: int) -> float:
    if n < 2 or m < 1:
        raise ValueError("need n >= 2 and m >= 1")
    return ar / ((n - 1) * m)


def marginal_aggregate_reward(ar_by_m: Sequence[float]) -> list[float]:
    """AR(m+1) - AR(m) for consecutive crew counts."""
    if len(ar_by_m) < 2:
        raise ValueError("need at least two crew counts")
    return [float(b - a) for a, b in zip(ar_by_m, ar_by_m[1:])]


def nuwt(spent: Sequence[float], budgets: Sequence[float]) -> float:
    """Unused share of the crews' effective budgets."""
    if len(spent) != len(budgets):
        raise ValueError("one spent time per crew is required")
    total = float(sum(budgets))
    if total <= 0:
        return 0.0
    return float(sum(b - s for s, b in zip(spent, budgets)) / total)


def mean_travel(travel: np.ndarray) -> float:
    """Mean travel time over distinct job pairs (root excluded)."""
    t = np.asarray(travel)[1:, 1:]
    k = t.shape[0]
    if k < 2:
        return 0.0
    return float(t[np.triu_indices(k, 1)].mean())


@dataclass(frozen=True)
class MetricRow:
    instance_id: str
    n: int
    m: int
    mean_repair: float
    mean_travel: float
    budget: float
    ar: float
    nar: float
    nar_per_crew: float
    nuwt: float
    lb: float
    ub: float
    gap: float
    status: str
    elapsed: float


HEADER = tuple(f.name for f in fields(MetricRow))


def _cell(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.6f}"
    return str(v)


def format_csv(rows: Iterable[MetricRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    for row in rows:
        w.writerow([_cell(v) for v in astuple(row)])
    return buf.getvalue()


def emit_csv(rows: Iterable[MetricRow], path) -> None:
    text = format_csv(rows)
    with open(path, "w", newline="") as fh:
        fh.write(text)
