"""Tests for Trotter baselines, log-cost interpolation and the comparison table."""

from __future__ import annotations

import math

import numpy as np
import pandas as pd
import pytest

import dense
from baseline import (
    BASELINE_COLUMNS,
    COMPARISON_COLUMNS,
    baseline_depth_cap,
    compare,
    interpolated_cost,
    reduction_factor,
    shallowest_depth,
    trotter_baselines,
)
from hamiltonians import tfim_chain_terms


@pytest.fixture
def synthetic() -> pd.DataFrame:
    rows = [
        (1, 1, 2, 1e-2),
        (1, 2, 4, 1e-3),
        (1, 4, 8, 1e-4),
        (2, 1, 3, 2e-3),
        (2, 3, 9, 1e-6),
    ]
    return pd.DataFrame(rows, columns=BASELINE_COLUMNS)


def test_interpolation_is_log_linear(synthetic) -> None:
    assert math.isnan(interpolated_cost(synthetic, 1, 1))
    assert interpolated_cost(synthetic, 1, 4) == pytest.approx(1e-3)
    assert interpolated_cost(synthetic, 1, 6) == pytest.approx(10 ** -3.5)
    assert interpolated_cost(synthetic, 1, 20) == pytest.approx(1e-4)
    assert math.isnan(interpolated_cost(synthetic, 4, 6))


def test_shallowest_depth(synthetic) -> None:
    assert shallowest_depth(synthetic, 1, 1e-3) == pytest.approx(4.0)
    assert shallowest_depth(synthetic, 1, 0.5) == 2.0
    assert math.isnan(shallowest_depth(synthetic, 1, 1e-5))
    goal = math.log10(1e-5)
    lo, hi = math.log10(2e-3), math.log10(1e-6)
    assert shallowest_depth(synthetic, 2, 1e-5) == pytest.approx(3 + (goal - lo) / (hi - lo) * 6)


def test_compare_takes_generous_trotter_side(synthetic) -> None:
    table = compare(synthetic, {6: 1e-5, 2: 5e-3})
    assert list(table.columns) == COMPARISON_COLUMNS
    assert list(table["depth"]) == [2, 6]
    row = table.iloc[1]
    # best actual Trotterization at depth <= 6 is order 1, k=2
    assert (row["best_order"], row["best_k"]) == (1, 2)
    assert row["best_trotter_cost"] == pytest.approx(interpolated_cost(synthetic, 2, 6))
    assert row["best_trotter_cost"] < 1e-3
    assert row["reduction_factor"] == pytest.approx(row["best_trotter_cost"] / row["compiled_cost"])
    assert row["compression_factor"] == pytest.approx(shallowest_depth(synthetic, 2, 1e-5) / 6)
    assert row["compression_factor"] >= 1.0


def test_compare_without_eligible_trotter(synthetic) -> None:
    table = compare(synthetic, {1: 1e-3})
    row = table.iloc[0]
    assert math.isnan(row["best_trotter_cost"])
    assert math.isnan(row["reduction_factor"])


def test_compare_floor_rule() -> None:
    exact = pd.DataFrame([(1, 1, 2, 0.0), (2, 1, 3, 0.0)], columns=BASELINE_COLUMNS)
    row = compare(exact, {4: 0.0}).iloc[0]
    assert row["reduction_factor"] == 1.0
    assert row["compression_factor"] == 1.0
    assert reduction_factor(0.0, 1e-20) == 1.0


def test_depth_cap() -> None:
    assert baseline_depth_cap([3, 5]) == 33
    assert baseline_depth_cap([9, 17]) == 68


def test_trotter_baselines_on_chain() -> None:
    terms = tfim_chain_terms(4, 1.0)
    exact = dense.propagator(terms.dense(), 0.3)
    table = trotter_baselines(terms, 0.3, 9, lambda c: dense.hst_cost(c.dense(), exact))
    assert list(table.columns) == BASELINE_COLUMNS
    assert (table["depth"] <= 9).all()
    assert set(table["order"]) == {1, 2}
    first = table[table["order"] == 1].sort_values("k")["cost"].to_numpy()
    assert np.all(np.diff(first) < 0)
    assert ((table["cost"] >= 0) & (table["cost"] <= 1)).all()
