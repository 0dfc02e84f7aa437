# target.py: building the target propagator MPO and its training-budget compression

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import pandas as pd

from errors import CapacityError, ModelConfigError
from hamiltonians import TermList
from mpo import MpoOperator, hst_cost, variational_compress
from trotter import circuit_to_mpo, trotter_sequence

logger = logging.getLogger(__name__)

DEFAULT_CHI_LADDER = (16, 32, 64, 128)
DEFAULT_CONV_TOL = 1e-10
DEFAULT_K = 10
DEFAULT_CHI_CAP = 128
TARGET_ORDER = 4


@dataclass
class TargetBuildReport:
    chi: int
    history: List[Tuple[int, float]] = field(default_factory=list)
    truncation_budget: float = 0.0
    final_cost: float = 0.0
    t: float = 0.0
    # filled in by precompress_target
    compressed_chi: Optional[int] = None
    compression_history: List[Tuple[int, float]] = field(default_factory=list)
    error_budget: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "chi": self.chi,
            "history": [list(h) for h in self.history],
            "truncation_budget": self.truncation_budget,
            "final_cost": self.final_cost,
            "t": self.t,
            "compressed_chi": self.compressed_chi,
            "compression_history": [list(h) for h in self.compression_history],
            "error_budget": self.error_budget,
        }


def _check_ladder(chi_ladder: Sequence[int]) -> List[int]:
    ladder = [int(c) for c in chi_ladder]
    if not ladder:
        raise ModelConfigError("chi_ladder must not be empty.")
    if any(c < 1 for c in ladder) or any(b <= a for a, b in zip(ladder, ladder[1:])):
        raise ModelConfigError(f"chi_ladder must be strictly ascending positive integers, got {ladder}.")
    return ladder


def build_target(
    terms: TermList,
    t: float,
    k: int = DEFAULT_K,
    chi_ladder: Sequence[int] = DEFAULT_CHI_LADDER,
    conv_tol: float = DEFAULT_CONV_TOL,
) -> Tuple[MpoOperator, TargetBuildReport]:
    """Contract ``k`` fourth-order steps at each ladder bond dimension until two
    consecutive MPOs agree to ``conv_tol`` in HST cost.

    A rung whose contraction never reached its bond cap and dropped less than
    ``conv_tol`` of weight is exact, so the ladder stops there without a
    comparison.
    """
    ladder = _check_ladder(chi_ladder)
    if conv_tol <= 0:
        raise ModelConfigError("conv_tol must be positive.")
    circ = trotter_sequence(terms, t, TARGET_ORDER, k)
    logger.info("target: %d layers (order %d, k=%d, t=%g), ladder %s", circ.depth, TARGET_ORDER, k, t, ladder)

    report = TargetBuildReport(chi=ladder[0], t=t)
    previous: Optional[MpoOperator] = None
    last_cost = float("nan")
    for chi in ladder:
        current = circuit_to_mpo(circ, chi)
        if previous is None and current.max_bond() < chi and current.truncation_error < conv_tol:
            report.chi = chi
            report.truncation_budget = current.truncation_error
            logger.info("target exact at chi=%d (max bond %d)", chi, current.max_bond())
            return current, report
        if previous is not None:
            last_cost = hst_cost(previous, current)
            report.history.append((chi, last_cost))
            logger.info("target chi=%d: cost vs previous rung %.3e", chi, last_cost)
            if last_cost < conv_tol:
                report.chi = chi
                report.truncation_budget = current.truncation_error
                return current, report
        previous = current
    raise CapacityError(
        f"Target did not converge within chi ladder {ladder} at t={t:g} (last cost {last_cost:.3e}).",
        last_cost=last_cost,
        partial=report,
    )


def _feasible_point(terms: TermList, t: float, k: int, ladder: Sequence[int], conv_tol: float) -> dict:
    try:
        mpo, report = build_target(terms, t, k, ladder, conv_tol)
    except CapacityError as exc:
        return {"t": t, "feasible": False, "chi": None, "cost": exc.last_cost}
    cost = report.history[-1][1] if report.history else 0.0
    return {"t": t, "feasible": True, "chi": report.chi, "cost": cost, "max_bond": mpo.max_bond()}


def longest_time_sweep(
    terms: TermList,
    time_grid: Sequence[float],
    chi_cap: int = DEFAULT_CHI_CAP,
    *,
    k: int = DEFAULT_K,
    conv_tol: float = DEFAULT_CONV_TOL,
    chi_ladder: Optional[Sequence[int]] = None,
    workers: int = 1,
) -> Tuple[float, pd.DataFrame]:
    """Largest grid time whose target converges with every bond <= ``chi_cap``.

    The returned time is the end of the feasible prefix of the grid; the
    table lists every point regardless.
    """
    grid = [float(x) for x in time_grid]
    if not grid:
        raise ModelConfigError("time_grid must not be empty.")
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ModelConfigError("time_grid must be ascending.")
    ladder = [c for c in (chi_ladder or DEFAULT_CHI_LADDER) if c < chi_cap] + [chi_cap]

    if workers > 1 and len(grid) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda t: _feasible_point(terms, t, k, ladder, conv_tol), grid))
    else:
        rows = [_feasible_point(terms, t, k, ladder, conv_tol) for t in grid]
    table = pd.DataFrame(rows, columns=["t", "feasible", "chi", "cost", "max_bond"])

    best: Optional[float] = None
    for row in rows:
        if not row["feasible"]:
            break
        best = row["t"]
    stray = [r["t"] for r in rows if r["feasible"] and (best is None or r["t"] > best)]
    if stray:
        logger.warning("feasibility not monotone along the grid; ignoring t=%s", stray)
    if best is None:
        raise CapacityError(f"No grid time converges with chi <= {chi_cap}.", partial=table)
    return best, table


def precompress_target(mpo: MpoOperator, error_budget: float) -> Tuple[MpoOperator, TargetBuildReport]:
    """Smallest power-of-two bond dimension whose variational fit stays within
    ``error_budget``; the input itself when none below its bond does."""
    if error_budget <= 0:
        raise ModelConfigError("error_budget must be positive.")
    original = mpo.max_bond()
    report = TargetBuildReport(chi=original, truncation_budget=mpo.truncation_error, error_budget=error_budget)
    chi = 1
    while chi < original:
        fit = variational_compress(mpo, chi)
        cost = hst_cost(mpo, fit)
        report.compression_history.append((chi, cost))
        logger.debug("precompress chi=%d: cost %.3e", chi, cost)
        if cost < error_budget:
            report.compressed_chi = fit.max_bond()
            report.final_cost = cost
            logger.info("target compressed %d -> %d (cost %.3e < %.1e)", original, fit.max_bond(), cost, error_budget)
            return fit, report
        chi *= 2
    report.compressed_chi = original
    logger.info("target kept at chi=%d; no smaller bond meets budget %.1e", original, error_budget)
    return mpo, report
