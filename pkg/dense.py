# dense.py: dense-matrix oracles for small systems (verify mode and tests)

from __future__ import annotations

from typing import Iterable, Sequence, Tuple

import numpy as np
import scipy.linalg

from errors import DimensionError
from tensor_core import Tensor, as_tensor

# Dense matrices beyond this many qubits are refused.
DENSE_QUBIT_LIMIT = 10


def check_dense_size(n: int) -> None:
    if n > DENSE_QUBIT_LIMIT:
        raise DimensionError(f"Dense oracles are limited to {DENSE_QUBIT_LIMIT} qubits (got {n}).")


def embed(op: np.ndarray, qubits: Sequence[int], n: int) -> Tensor:
    """Embed an operator on ``qubits`` (first listed = most significant factor
    of ``op``) into the full ``2^n`` space; qubit 0 is the most significant bit."""
    check_dense_size(n)
    k = len(qubits)
    if len(set(qubits)) != k or any(not 0 <= q < n for q in qubits):
        raise DimensionError(f"Invalid qubit list {list(qubits)} for n={n}.")
    op = as_tensor(op).reshape((2,) * (2 * k))
    rest = [q for q in range(n) if q not in qubits]
    full = np.tensordot(op, np.eye(2 ** (n - k), dtype=np.complex128).reshape((2,) * (2 * (n - k))), axes=0)
    # legs now: out(qubits), in(qubits), out(rest), in(rest)
    out_pos = list(qubits) + rest
    in_pos = list(qubits) + rest
    src_out = list(range(k)) + list(range(2 * k, 2 * k + n - k))
    src_in = list(range(k, 2 * k)) + list(range(2 * k + n - k, 2 * n))
    perm = [0] * (2 * n)
    for q, s in zip(out_pos, src_out):
        perm[q] = s
    for q, s in zip(in_pos, src_in):
        perm[n + q] = s
    return np.ascontiguousarray(full.transpose(perm).reshape(2 ** n, 2 ** n))


def circuit_unitary(n: int, layers: Iterable[Iterable[Tuple[Tuple[int, int], np.ndarray]]]) -> Tensor:
    """Dense unitary of layered two-qubit gates given as ``((lo, hi), matrix)``."""
    check_dense_size(n)
    u = np.eye(2 ** n, dtype=np.complex128)
    for layer in layers:
        for sites, g in layer:
            u = embed(g, sites, n) @ u
    return u


def propagator(hamiltonian: np.ndarray, t: float) -> Tensor:
    """exp(-i H t) by scaling and squaring."""
    return scipy.linalg.expm(-1j * t * as_tensor(hamiltonian))


def hst_cost(u: np.ndarray, v: np.ndarray) -> float:
    """1 - |Tr(u^dagger v)|^2 / (||u||_F ||v||_F)^2 for dense operators."""
    num = abs(np.vdot(u, v)) ** 2
    den = (np.linalg.norm(u) * np.linalg.norm(v)) ** 2
    return float(min(1.0, max(0.0, 1.0 - num / den)))


def operator_schmidt_values(op: np.ndarray, n: int, cut: int) -> np.ndarray:
    """Operator-Schmidt coefficients of a dense operator between qubits
    ``0..cut`` and ``cut+1..n-1`` (unit 2-norm)."""
    t = as_tensor(op).reshape((2,) * (2 * n))
    order = [ax for k in range(n) for ax in (k, n + k)]
    m = t.transpose(order).reshape(4 ** (cut + 1), -1)
    s = np.linalg.svd(m, compute_uv=False)
    return s / np.linalg.norm(s)
