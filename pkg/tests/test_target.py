"""Tests for target construction, time-feasibility sweeps and precompression."""

from __future__ import annotations

import math

import numpy as np
import pytest

import dense
from conftest import random_mpo
from errors import CapacityError, ModelConfigError
from hamiltonians import tfim_chain_terms
from mpo import hst_cost, mpo_to_doubled_mps, to_dense
from target import build_target, longest_time_sweep, precompress_target


@pytest.fixture(scope="module")
def tfim6():
    return tfim_chain_terms(6, 1.0)


def test_target_matches_exact_propagator(tfim6) -> None:
    mpo, report = build_target(tfim6, 0.5, k=10, chi_ladder=(16, 32, 64, 128), conv_tol=1e-10)
    exact = dense.propagator(tfim6.dense(), 0.5)
    assert dense.hst_cost(to_dense(mpo), exact) < 1e-9
    assert report.t == 0.5
    assert report.chi in (16, 32, 64, 128)


def test_target_exact_at_first_rung() -> None:
    terms = tfim_chain_terms(4, 1.0)
    mpo, report = build_target(terms, 0.3, k=4, chi_ladder=(128,))
    assert report.history == []
    assert report.chi == 128
    assert mpo.max_bond() <= 16


def test_target_capacity_error_carries_partial(tfim6) -> None:
    with pytest.raises(CapacityError) as info:
        build_target(tfim6, 1.0, k=4, chi_ladder=(1, 2), conv_tol=1e-10)
    assert info.value.last_cost > 1e-10
    assert len(info.value.partial.history) == 1


def test_target_rejects_bad_ladder(tfim6) -> None:
    with pytest.raises(ModelConfigError):
        build_target(tfim6, 0.5, chi_ladder=(32, 16))
    with pytest.raises(ModelConfigError):
        build_target(tfim6, 0.5, chi_ladder=())


def test_longest_time_sweep(tfim6) -> None:
    grid = [0.05, 0.1, 3.0]
    best, table = longest_time_sweep(tfim6, grid, 16, k=4, conv_tol=1e-4, chi_ladder=(2, 4, 8))
    assert best == 0.1
    assert list(table["t"]) == grid
    assert list(table["feasible"]) == [True, True, False]


def test_longest_time_sweep_parallel_matches_serial(tfim6) -> None:
    grid = [0.05, 0.1, 3.0]
    serial = longest_time_sweep(tfim6, grid, 16, k=4, conv_tol=1e-4, chi_ladder=(2, 4, 8))
    parallel = longest_time_sweep(tfim6, grid, 16, k=4, conv_tol=1e-4, chi_ladder=(2, 4, 8), workers=3)
    assert serial[0] == parallel[0]
    assert list(serial[1]["feasible"]) == list(parallel[1]["feasible"])


def test_longest_time_sweep_validates_grid(tfim6) -> None:
    with pytest.raises(ModelConfigError):
        longest_time_sweep(tfim6, [0.5, 0.1], 16)


def test_precompress_within_budget(tfim6) -> None:
    mpo, _ = build_target(tfim6, 0.5, k=10, chi_ladder=(64, 128))
    compressed, report = precompress_target(mpo, 1e-3)
    assert compressed.max_bond() < mpo.max_bond()
    assert hst_cost(mpo, compressed) < 1e-3
    assert report.compressed_chi == compressed.max_bond()
    chis = [chi for chi, _ in report.compression_history]
    assert chis == sorted(chis)


def test_precompress_keeps_original_when_budget_unreachable(rng) -> None:
    mpo = random_mpo(rng, 5, 4)
    kept, report = precompress_target(mpo, 1e-6)
    assert kept is mpo
    assert report.compressed_chi == mpo.max_bond()


def test_precompress_rejects_non_positive_budget(tfim6) -> None:
    mpo, _ = build_target(tfim6, 0.1, k=2, chi_ladder=(128,))
    with pytest.raises(ModelConfigError):
        precompress_target(mpo, 0.0)


def test_target_unitarity(tfim6) -> None:
    n = 6
    mpo, report = build_target(tfim6, 0.2, k=4, chi_ladder=(128,))
    budget = max(report.truncation_budget, 1e-14)
    assert hst_cost(mpo, mpo) < 1e-12
    assert mpo_to_doubled_mps(mpo).log_norm == pytest.approx(0.5 * n * math.log(2.0), abs=budget + 1e-12)
    # gate truncation moves entries by about sqrt(weight) of the Frobenius norm
    u = to_dense(mpo)
    atol = 2.0 * math.sqrt(budget) * 2.0 ** (n / 2)
    np.testing.assert_allclose(u.conj().T @ u, np.eye(2 ** n), atol=atol)
