"""Shared fixtures and random builders for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pytest
from scipy.stats import unitary_group

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from mpo import MpoOperator  # noqa: E402
from trotter import BrickworkCircuit, Gate  # noqa: E402

CONFIG_DIR = ROOT / "config"


def crandn(rng: np.random.Generator, *shape: int) -> np.ndarray:
    """Standard complex normal samples."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


def haar_unitary(rng: np.random.Generator, dim: int = 4) -> np.ndarray:
    return np.asarray(unitary_group.rvs(dim, random_state=rng), dtype=np.complex128)


def random_mpo(rng: np.random.Generator, n: int, chi: int) -> MpoOperator:
    """Random MPO with every interior bond at ``chi``."""
    sites = []
    for k in range(n):
        left = 1 if k == 0 else chi
        right = 1 if k == n - 1 else chi
        sites.append(crandn(rng, left, 2, 2, right))
    return MpoOperator(tuple(np.ascontiguousarray(s) for s in sites))


def random_brickwork(rng: np.random.Generator, n: int, depth: int) -> BrickworkCircuit:
    """Alternating even/odd nearest-neighbor layers of Haar gates."""
    layers = []
    for i in range(depth):
        start = i % 2
        layers.append(tuple(Gate((q, q + 1), haar_unitary(rng)) for q in range(start, n - 1, 2)))
    return BrickworkCircuit(n, tuple(layers))


def random_interval_layer(
    rng: np.random.Generator, n: int, max_span: int, fill: float = 0.8
) -> List[Tuple[int, int]]:
    """Disjoint [lo, hi] ranges covering part of an n-site chain."""
    pairs = []
    q = 0
    while q < n - 1:
        width = int(rng.integers(1, max_span))
        if q + width < n and rng.random() < fill:
            pairs.append((q, q + width))
            q += width + 1
        else:
            q += 1
    return pairs


def random_layered_circuit(
    rng: np.random.Generator, n: int, depth: int, max_span: int = 3, pairs: Optional[Sequence] = None
) -> BrickworkCircuit:
    layers = []
    for _ in range(depth):
        support = pairs if pairs is not None else random_interval_layer(rng, n, max_span)
        layers.append(tuple(Gate(tuple(p), haar_unitary(rng)) for p in support))
    return BrickworkCircuit(n, tuple(layers))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
