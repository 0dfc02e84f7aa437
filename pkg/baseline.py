# baseline.py: equal-depth Trotter baselines and the comparison table

from __future__ import annotations

import logging
import math
from typing import Callable, Dict, Iterable

import numpy as np
import pandas as pd

from hamiltonians import TermList
from trotter import BrickworkCircuit, enumerate_trotter_depths

logger = logging.getLogger(__name__)

# Costs below this are treated as equal when forming ratios.
COST_FLOOR = 1e-14

BASELINE_COLUMNS = ["order", "k", "depth", "cost"]
COMPARISON_COLUMNS = [
    "depth",
    "compiled_cost",
    "best_trotter_cost",
    "best_order",
    "best_k",
    "reduction_factor",
    "compression_factor",
]

CostFn = Callable[[BrickworkCircuit], float]


def trotter_baselines(terms: TermList, t: float, max_depth: int, cost_fn: CostFn) -> pd.DataFrame:
    """Cost of every merged order-1/2/4 Trotterization with depth <= ``max_depth``."""
    rows = []
    for order, k, circ in enumerate_trotter_depths(terms, t, max_depth):
        cost = float(cost_fn(circ))
        rows.append({"order": order, "k": k, "depth": circ.depth, "cost": cost})
        logger.debug("baseline order %d k=%d depth %d: cost %.3e", order, k, circ.depth, cost)
    return pd.DataFrame(rows, columns=BASELINE_COLUMNS)


def _log_curve(frame: pd.DataFrame) -> tuple:
    ordered = frame.sort_values("depth")
    depths = ordered["depth"].to_numpy(dtype=float)
    logs = np.log10(np.maximum(ordered["cost"].to_numpy(dtype=float), COST_FLOOR))
    return depths, logs


def interpolated_cost(baselines: pd.DataFrame, order: int, depth: float) -> float:
    """Linear interpolation of log10(cost) against depth for one order; NaN
    below the shallowest point, the deepest point's cost beyond it."""
    frame = baselines[baselines["order"] == order]
    if frame.empty:
        return math.nan
    depths, logs = _log_curve(frame)
    if depth < depths[0]:
        return math.nan
    return float(10.0 ** np.interp(depth, depths, logs))


def shallowest_depth(baselines: pd.DataFrame, order: int, cost: float) -> float:
    """Smallest (fractional) depth at which the interpolated baseline of
    ``order`` reaches ``cost``; NaN when it never does."""
    frame = baselines[baselines["order"] == order]
    if frame.empty:
        return math.nan
    depths, logs = _log_curve(frame)
    goal = math.log10(max(cost, COST_FLOOR))
    if logs[0] <= goal:
        return float(depths[0])
    for (d0, c0), (d1, c1) in zip(zip(depths, logs), zip(depths[1:], logs[1:])):
        if c1 <= goal:
            return float(d0 + (goal - c0) / (c1 - c0) * (d1 - d0))
    return math.nan


def reduction_factor(trotter_cost: float, compiled_cost: float) -> float:
    return max(trotter_cost, COST_FLOOR) / max(compiled_cost, COST_FLOOR)


def compare(baselines: pd.DataFrame, compiled: Dict[int, float]) -> pd.DataFrame:
    """One row per compiled depth.

    The Trotter side is taken generously: the cheaper of the best actual
    Trotterization at depth <= L and the interpolated baseline at L.
    """
    orders = sorted(baselines["order"].unique()) if not baselines.empty else []
    rows = []
    for depth in sorted(compiled):
        cost = float(compiled[depth])
        eligible = baselines[baselines["depth"] <= depth]
        best_cost, best_order, best_k = math.nan, None, None
        if not eligible.empty:
            row = eligible.sort_values(["cost", "depth"]).iloc[0]
            best_cost, best_order, best_k = float(row["cost"]), int(row["order"]), int(row["k"])
        for order in orders:
            value = interpolated_cost(baselines, order, depth)
            if not math.isnan(value) and (math.isnan(best_cost) or value < best_cost):
                best_cost = value
        reachable = [shallowest_depth(baselines, order, cost) for order in orders]
        reachable = [d for d in reachable if not math.isnan(d)]
        if max(cost, COST_FLOOR) == COST_FLOOR and not math.isnan(best_cost) and best_cost <= COST_FLOOR:
            compression = 1.0
        else:
            compression = min(reachable) / depth if reachable else math.nan
        rows.append({
            "depth": depth,
            "compiled_cost": cost,
            "best_trotter_cost": best_cost,
            "best_order": best_order,
            "best_k": best_k,
            "reduction_factor": reduction_factor(best_cost, cost) if not math.isnan(best_cost) else math.nan,
            "compression_factor": compression,
        })
    return pd.DataFrame(rows, columns=COMPARISON_COLUMNS)


def baseline_depth_cap(depths: Iterable[int], floor: int = 33) -> int:
    return max(floor, 4 * max(depths))
