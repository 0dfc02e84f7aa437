# tensor_core.py: dense complex tensor kernel shared by every chain algorithm
#
# Dense tensors are plain ``numpy.ndarray`` objects of dtype complex128 in C
# (row-major) order over their ordered legs. Serialization relies on that
# layout, so nothing here ever returns a Fortran-ordered array.

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from errors import DimensionError, NumericalError

logger = logging.getLogger(__name__)

Tensor = NDArray[np.complex128]

# Singular values below this fraction of the largest one count as zero when an
# exact rank is needed (gate splitting, degenerate environments).
RANK_EPS = 1e-14


@dataclass(frozen=True, eq=False)
class SvdResult:
    """Truncated singular value decomposition ``m ~= u @ diag(s) @ vh``.

    ``u`` and ``vh`` are isometries, ``s`` is descending and non-negative and
    ``discarded_weight`` is the relative squared Frobenius norm that was
    dropped (sum of dropped s_i^2 over the sum of all s_i^2).
    """

    u: Tensor
    s: NDArray[np.float64]
    vh: Tensor
    discarded_weight: float

    @property
    def rank(self) -> int:
        return int(self.s.shape[0])


def as_tensor(data) -> Tensor:
    return np.ascontiguousarray(np.asarray(data, dtype=np.complex128))


def ensure_finite(t: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(t)):
        raise NumericalError(f"{what} contains NaN or Inf entries (shape {t.shape}).")


def contract(a: Tensor, b: Tensor, pairs: Sequence[Tuple[int, int]]) -> Tensor:
    """Contract ``a`` and ``b`` over the given ``(leg_of_a, leg_of_b)`` pairs.

    The result carries the unpaired legs of ``a`` followed by the unpaired legs
    of ``b``, each group in its original order.
    """
    legs_a = [p[0] for p in pairs]
    legs_b = [p[1] for p in pairs]
    for la, lb in pairs:
        if not (0 <= la < a.ndim and 0 <= lb < b.ndim):
            raise DimensionError(f"Leg pair ({la}, {lb}) is out of range for ranks {a.ndim} and {b.ndim}.")
        if a.shape[la] != b.shape[lb]:
            raise DimensionError(
                f"Cannot contract leg {la} (extent {a.shape[la]}) with leg {lb} (extent {b.shape[lb]})."
            )
    if len(set(legs_a)) != len(legs_a) or len(set(legs_b)) != len(legs_b):
        raise DimensionError("A leg may appear in at most one contraction pair.")
    out = np.tensordot(a, b, axes=(legs_a, legs_b))
    ensure_finite(out, "contraction result")
    return np.ascontiguousarray(out)


def _raw_svd(m: np.ndarray):
    """SVD with the divide-and-conquer driver, falling back to QR iteration."""
    try:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        logger.debug("gesdd did not converge on a %s matrix; retrying with gesvd", m.shape)
    try:
        return scipy.linalg.svd(m, full_matrices=False, lapack_driver="gesvd", check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"SVD did not converge for a {m.shape[0]}x{m.shape[1]} matrix.") from exc


def truncated_svd(m: np.ndarray, chi_max: int, weight_tol: float = 0.0) -> SvdResult:
    """Keep at most ``chi_max`` singular values, dropping any trailing block
    whose relative squared weight stays below ``weight_tol``."""
    if m.ndim != 2:
        raise DimensionError(f"truncated_svd expects a matrix, got rank {m.ndim}.")
    if chi_max < 1:
        raise ValueError("chi_max must be positive.")
    ensure_finite(m, "SVD input")
    u, s, vh = _raw_svd(m)

    total = float(np.sum(s ** 2))
    if total == 0.0:
        return SvdResult(u[:, :1], s[:1], vh[:1, :], 0.0)

    # tail[k] = weight of s[k:] relative to the total
    tail = np.concatenate([np.cumsum((s ** 2)[::-1])[::-1], [0.0]]) / total
    keep = len(s)
    if weight_tol > 0.0:
        below = np.nonzero(tail < weight_tol)[0]
        keep = int(below[0]) if below.size else len(s)
    keep = max(1, min(keep, chi_max, len(s)))
    discarded = float(tail[keep])

    return SvdResult(
        np.ascontiguousarray(u[:, :keep]),
        np.ascontiguousarray(s[:keep]),
        np.ascontiguousarray(vh[:keep, :]),
        max(discarded, 0.0),
    )


def polar_parts(m: np.ndarray) -> Tuple[Tensor, NDArray[np.float64]]:
    """Return the maximizing unitary ``g* = Y X^dagger`` of ``m = X S Y^dagger``
    together with the singular values ``S``."""
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionError(f"polar_unitary expects a square matrix, got shape {m.shape}.")
    ensure_finite(m, "polar input")
    x, s, yh = _raw_svd(m)
    g = yh.conj().T @ x.conj().T
    return np.ascontiguousarray(g), s


def polar_unitary(m: np.ndarray) -> Tensor:
    """Unitary ``g`` maximizing ``|Tr(m g)|``; then ``Tr(m g)`` equals the sum
    of the singular values of ``m``."""
    return polar_parts(m)[0]


def qr_positive(m: np.ndarray) -> Tuple[Tensor, Tensor]:
    """Economic QR with a non-negative diagonal in ``r``."""
    q, r = scipy.linalg.qr(m, mode="economic", check_finite=False)
    diag = np.diagonal(r)
    phases = np.where(np.abs(diag) > 0, diag / np.maximum(np.abs(diag), 1e-300), 1.0)
    q = q * phases[None, :]
    r = phases.conj()[:, None] * r
    return np.ascontiguousarray(q), np.ascontiguousarray(r)


def lq_positive(m: np.ndarray) -> Tuple[Tensor, Tensor]:
    """Economic LQ decomposition ``m = l @ q`` with orthonormal rows in ``q``."""
    q, r = qr_positive(m.conj().T)
    return np.ascontiguousarray(r.conj().T), np.ascontiguousarray(q.conj().T)


def frobenius_norm(t: np.ndarray) -> float:
    return float(np.linalg.norm(t.ravel()))


def is_unitary(g: np.ndarray, tol: float = 1e-8) -> bool:
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        return False
    return bool(np.max(np.abs(g.conj().T @ g - np.eye(g.shape[0]))) <= tol)
