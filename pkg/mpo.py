# mpo.py: matrix product operator / doubled-space MPS algebra
#
# Site tensors of an MPO carry legs [left, out, in, right]. The doubled-space
# MPS of an operator fuses (out, in) into one leg of extent d*d, index
# out*d + in. ``log_norm`` always holds ln of a Frobenius norm, so the
# represented operator is exp(log_norm) times the contraction of the sites.

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np
import opt_einsum as oe

from errors import DimensionError, GateValidationError, NumericalError
from tensor_core import (
    RANK_EPS,
    Tensor,
    _raw_svd,
    as_tensor,
    ensure_finite,
    frobenius_norm,
    lq_positive,
    qr_positive,
    truncated_svd,
)

logger = logging.getLogger(__name__)

GATE_UNITARY_TOL = 1e-8
DEFAULT_GATE_WEIGHT_TOL = 1e-14


# ==========================
# Value types
# ==========================
@dataclass(frozen=True, eq=False)
class MpoOperator:
    """Operator on ``n`` sites stored as a chain of rank-4 tensors.

    ``truncation_error`` accumulates the discarded weights reported by every
    truncating operation that produced this value.
    """

    sites: Tuple[Tensor, ...]
    log_norm: float = 0.0
    ortho_center: Optional[int] = None
    truncation_error: float = 0.0
    d: int = 2

    def __post_init__(self) -> None:
        if not self.sites:
            raise DimensionError("An MPO needs at least one site.")
        for k, t in enumerate(self.sites):
            if t.ndim != 4 or t.shape[1] != self.d or t.shape[2] != self.d:
                raise DimensionError(f"Site {k} has shape {t.shape}; expected (l, {self.d}, {self.d}, r).")
        if self.sites[0].shape[0] != 1 or self.sites[-1].shape[3] != 1:
            raise DimensionError("Boundary bonds of an MPO must have extent 1.")
        for k in range(len(self.sites) - 1):
            if self.sites[k].shape[3] != self.sites[k + 1].shape[0]:
                raise DimensionError(
                    f"Bond {k} mismatch: {self.sites[k].shape[3]} vs {self.sites[k + 1].shape[0]}."
                )

    @property
    def n(self) -> int:
        return len(self.sites)

    def bond_dims(self) -> List[int]:
        return [t.shape[3] for t in self.sites[:-1]]

    def max_bond(self) -> int:
        dims = self.bond_dims()
        return max(dims) if dims else 1


@dataclass(frozen=True, eq=False)
class DoubledMps:
    """Vector on the doubled physical space (extent d*d per site)."""

    sites: Tuple[Tensor, ...]
    log_norm: float = 0.0
    ortho_center: Optional[int] = None

    @property
    def n(self) -> int:
        return len(self.sites)

    def normalize(self) -> "DoubledMps":
        ts = list(self.sites)
        log = _canonicalize_chain(ts, self.log_norm, self.ortho_center, 0)
        return DoubledMps(tuple(ts), log, 0)

    def norm_of_sites(self) -> float:
        """2-norm of the vector represented by the sites alone."""
        e = np.ones((1, 1), dtype=np.complex128)
        log = 0.0
        for t in self.sites:
            e = oe.contract("ab,apc,bpd->cd", e, t.conj(), t)
            s = frobenius_norm(e)
            if s == 0.0:
                return 0.0
            e = e / s
            log += math.log(s)
        return math.sqrt(abs(e[0, 0].real) * math.exp(log))


# ==========================
# Chain primitives (rank-3 tensors [left, phys, right])
# ==========================
def _as_chain(sites: Sequence[Tensor]) -> List[Tensor]:
    return [t.reshape(t.shape[0], -1, t.shape[-1]) for t in sites]


def _as_mpo_sites(chain: Sequence[Tensor], d: int) -> Tuple[Tensor, ...]:
    return tuple(np.ascontiguousarray(t.reshape(t.shape[0], d, d, t.shape[-1])) for t in chain)


def _rescale(ts: List[Tensor], k: int, log: float) -> float:
    s = frobenius_norm(ts[k])
    if s == 0.0:
        raise NumericalError("The operator vanished during canonicalization.")
    ts[k] = ts[k] / s
    return log + math.log(s)


def _step_right(ts: List[Tensor], k: int, log: float) -> float:
    """Move the orthogonality center from ``k`` to ``k + 1``."""
    l, p, r = ts[k].shape
    q, rr = qr_positive(ts[k].reshape(l * p, r))
    ts[k] = q.reshape(l, p, q.shape[1])
    ts[k + 1] = np.tensordot(rr, ts[k + 1], axes=(1, 0))
    return _rescale(ts, k + 1, log)


def _step_left(ts: List[Tensor], k: int, log: float) -> float:
    """Move the orthogonality center from ``k`` to ``k - 1``."""
    l, p, r = ts[k].shape
    lower, q = lq_positive(ts[k].reshape(l, p * r))
    ts[k] = q.reshape(q.shape[0], p, r)
    ts[k - 1] = np.tensordot(ts[k - 1], lower, axes=(2, 0))
    return _rescale(ts, k - 1, log)


def _canonicalize_chain(ts: List[Tensor], log: float, current: Optional[int], center: int) -> float:
    n = len(ts)
    if not 0 <= center < n:
        raise DimensionError(f"Center {center} is outside a chain of {n} sites.")
    if current is None:
        for k in range(center):
            log = _step_right(ts, k, log)
        for k in range(n - 1, center, -1):
            log = _step_left(ts, k, log)
    else:
        for k in range(current, center):
            log = _step_right(ts, k, log)
        for k in range(current, center, -1):
            log = _step_left(ts, k, log)
    return _rescale(ts, center, log)


def _svd_sweep_left(ts: List[Tensor], log: float, chi_max: int, weight_tol: float) -> Tuple[float, float]:
    """Truncate every bond right to left; expects the center at the last site."""
    discarded = 0.0
    for k in range(len(ts) - 1, 0, -1):
        l, p, r = ts[k].shape
        res = truncated_svd(ts[k].reshape(l, p * r), chi_max, weight_tol)
        discarded += res.discarded_weight
        ts[k] = res.vh.reshape(res.rank, p, r)
        ts[k - 1] = np.tensordot(ts[k - 1], res.u * res.s[None, :], axes=(2, 0))
        log = _rescale(ts, k - 1, log)
    return log, discarded


def _transfer_overlap(bra: Sequence[Tensor], ket: Sequence[Tensor]) -> complex:
    """<bra|ket> by a left-to-right transfer with per-site rescaling."""
    e = np.ones((1, 1), dtype=np.complex128)
    log = 0.0
    for a, b in zip(bra, ket):
        e = oe.contract("ab,apc,bpd->cd", e, a.conj(), b)
        s = frobenius_norm(e)
        if s == 0.0:
            return 0j
        e = e / s
        log += math.log(s)
    return complex(e[0, 0] * math.exp(log))


# ==========================
# Construction and conversion
# ==========================
def mpo_identity(n: int, d: int = 2) -> MpoOperator:
    if n < 1:
        raise DimensionError("mpo_identity needs at least one site.")
    site = np.eye(d, dtype=np.complex128).reshape(1, d, d, 1)
    return MpoOperator(tuple(site.copy() for _ in range(n)), d=d)


def to_dense(mpo: MpoOperator) -> Tensor:
    """Dense 2^n x 2^n matrix; site 0 is the most significant qubit."""
    d = mpo.d
    acc = mpo.sites[0][0]
    for w in mpo.sites[1:]:
        acc = np.einsum("abl,lcdr->acbdr", acc, w)
        acc = acc.reshape(acc.shape[0] * d, acc.shape[2] * d, acc.shape[4])
    return acc[:, :, 0] * math.exp(mpo.log_norm)


def from_dense(matrix: np.ndarray, n: int, chi_max: Optional[int] = None, d: int = 2) -> MpoOperator:
    """Exact (or ``chi_max``-truncated) MPO of a dense ``d^n x d^n`` operator."""
    m = as_tensor(matrix)
    if m.shape != (d ** n, d ** n):
        raise DimensionError(f"Expected a {d ** n}x{d ** n} matrix, got {m.shape}.")
    t = m.reshape((d,) * (2 * n))
    order = [ax for k in range(n) for ax in (k, n + k)]
    psi = t.transpose(order).reshape(1, -1)
    chain: List[Tensor] = []
    discarded = 0.0
    left = 1
    cap = chi_max or d ** (2 * n)
    for _ in range(n - 1):
        psi = psi.reshape(left * d * d, -1)
        res = truncated_svd(psi, cap, 0.0)
        discarded += res.discarded_weight
        chain.append(res.u.reshape(left, d * d, res.rank))
        psi = res.s[:, None] * res.vh
        left = res.rank
    chain.append(psi.reshape(left, d * d, 1))
    log = _rescale(chain, n - 1, 0.0)
    return MpoOperator(_as_mpo_sites(chain, d), log, n - 1, discarded, d)


def mpo_dagger(mpo: MpoOperator) -> MpoOperator:
    sites = tuple(np.ascontiguousarray(t.transpose(0, 2, 1, 3).conj()) for t in mpo.sites)
    return replace(mpo, sites=sites)


def mpo_transpose(mpo: MpoOperator) -> MpoOperator:
    sites = tuple(np.ascontiguousarray(t.transpose(0, 2, 1, 3)) for t in mpo.sites)
    return replace(mpo, sites=sites)


def canonicalize(mpo: MpoOperator, center: int) -> MpoOperator:
    ts = _as_chain(mpo.sites)
    log = _canonicalize_chain(ts, mpo.log_norm, mpo.ortho_center, center)
    return replace(mpo, sites=_as_mpo_sites(ts, mpo.d), log_norm=log, ortho_center=center)


def mpo_to_doubled_mps(mpo: MpoOperator) -> DoubledMps:
    """Fuse the physical legs and normalize; the scale moves into ``log_norm``."""
    ts = _as_chain(mpo.sites)
    log = _canonicalize_chain(ts, mpo.log_norm, mpo.ortho_center, 0)
    return DoubledMps(tuple(np.ascontiguousarray(t) for t in ts), log, 0)


def doubled_mps_to_mpo(mps: DoubledMps, d: int = 2) -> MpoOperator:
    return MpoOperator(_as_mpo_sites(mps.sites, d), mps.log_norm, mps.ortho_center, 0.0, d)


def inner_product_normalized(a: DoubledMps, b: DoubledMps) -> complex:
    if a.n != b.n:
        raise DimensionError(f"Cannot overlap chains of length {a.n} and {b.n}.")
    return _transfer_overlap(a.sites, b.sites)


def overlap(u: MpoOperator, v: MpoOperator) -> Tuple[complex, float]:
    """Normalized overlap of two operators and the log scale it was divided by.

    ``Tr(u^dagger v) = value * exp(log_scale)``.
    """
    if u.n != v.n:
        raise DimensionError(f"Qubit counts differ: {u.n} vs {v.n}.")
    a = mpo_to_doubled_mps(u)
    b = mpo_to_doubled_mps(v)
    return inner_product_normalized(a, b), a.log_norm + b.log_norm


def hst_cost(u: MpoOperator, v: MpoOperator) -> float:
    """Hilbert-Schmidt test cost ``1 - |<u|v>|^2`` of the normalized operators."""
    value, _ = overlap(u, v)
    return float(min(1.0, max(0.0, 1.0 - abs(value) ** 2)))


# ==========================
# Gate application
# ==========================
def validate_gate(gate: np.ndarray, d: int = 2) -> Tensor:
    g = as_tensor(gate)
    if g.shape != (d * d, d * d):
        raise GateValidationError(f"Two-site gates must be {d * d}x{d * d}, got {g.shape}.")
    ensure_finite(g, "gate")
    err = float(np.max(np.abs(g.conj().T @ g - np.eye(d * d))))
    if err > GATE_UNITARY_TOL:
        raise GateValidationError(f"Gate is not unitary (max |g^dagger g - I| = {err:.3e}).")
    return g


def _centered(mpo: MpoOperator, center: int) -> Tuple[List[Tensor], float]:
    if mpo.ortho_center == center:
        return [t.reshape(t.shape[0], -1, t.shape[-1]) for t in mpo.sites], mpo.log_norm
    ts = _as_chain(mpo.sites)
    return ts, _canonicalize_chain(ts, mpo.log_norm, mpo.ortho_center, center)


def apply_two_site_gate(
    mpo: MpoOperator,
    gate: np.ndarray,
    site: int,
    chi_max: int = 1 << 30,
    weight_tol: float = DEFAULT_GATE_WEIGHT_TOL,
    *,
    on: str = "out",
) -> MpoOperator:
    """Return ``gate . mpo`` (``on="out"``) or ``mpo . gate`` (``on="in"``) for a
    gate on the neighboring sites ``(site, site + 1)``."""
    g = validate_gate(gate, mpo.d)
    if on == "in":
        return mpo_transpose(apply_two_site_gate(mpo_transpose(mpo), g.T, site, chi_max, weight_tol))
    if on != "out":
        raise ValueError(f"Unknown gate side {on!r}.")
    n, d = mpo.n, mpo.d
    if not 0 <= site < n - 1:
        raise DimensionError(f"Gate site {site} does not fit a chain of {n} sites.")

    ts, log = _centered(mpo, site)
    a = ts[site].reshape(ts[site].shape[0], d, d, -1)
    b = ts[site + 1].reshape(-1, d, d, ts[site + 1].shape[-1])
    l, r = a.shape[0], b.shape[3]
    theta = oe.contract("xyop,loim,mpjr->lxiyjr", g.reshape(d, d, d, d), a, b)
    res = truncated_svd(theta.reshape(l * d * d, d * d * r), chi_max, weight_tol)

    ts[site] = res.u.reshape(l, d * d, res.rank)
    ts[site + 1] = (res.s[:, None] * res.vh).reshape(res.rank, d * d, r)
    log = _rescale(ts, site + 1, log)
    return MpoOperator(
        _as_mpo_sites(ts, d), log, site + 1, mpo.truncation_error + res.discarded_weight, d
    )


def gate_to_two_site_mpo(gate: np.ndarray, span: int, d: int = 2) -> MpoOperator:
    """Split a two-site gate across its qubit bipartition into an MPO fragment
    covering ``span`` sites, with identity passthroughs in between."""
    if span < 2:
        raise DimensionError("A two-site fragment must cover at least two sites.")
    g = validate_gate(gate, d)
    x = g.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d * d, d * d)
    u, s, vh = _raw_svd(x)
    rank = max(1, int(np.count_nonzero(s > RANK_EPS * s[0])))
    root = np.sqrt(s[:rank])
    first = (u[:, :rank] * root[None, :]).reshape(1, d, d, rank)
    last = (root[:, None] * vh[:rank]).reshape(rank, d, d, 1)
    passthrough = np.einsum("ab,oi->aoib", np.eye(rank), np.eye(d)).astype(np.complex128)
    sites = [first] + [passthrough.copy() for _ in range(span - 2)] + [last]
    return MpoOperator(tuple(np.ascontiguousarray(t) for t in sites), d=d)


def zip_up_apply(
    mpo: MpoOperator,
    fragment: MpoOperator,
    start: int,
    chi_max: int = 1 << 30,
    weight_tol: float = DEFAULT_GATE_WEIGHT_TOL,
    *,
    on: str = "out",
) -> MpoOperator:
    """Apply an MPO fragment on sites ``start .. start + len - 1`` in one
    truncating left-to-right pass, then canonicalize back to ``start``."""
    if on == "in":
        flipped = zip_up_apply(mpo_transpose(mpo), mpo_transpose(fragment), start, chi_max, weight_tol)
        return mpo_transpose(flipped)
    if on != "out":
        raise ValueError(f"Unknown fragment side {on!r}.")
    m, n, d = fragment.n, mpo.n, mpo.d
    if start < 0 or start + m > n:
        raise DimensionError(f"A {m}-site fragment at {start} does not fit a chain of {n} sites.")

    ts, log = _centered(mpo, start)
    x = ts[start].shape[0]
    carry = np.eye(x, dtype=np.complex128).reshape(x, 1, x)
    discarded = 0.0
    for k in range(m):
        w = ts[start + k].reshape(ts[start + k].shape[0], d, d, -1)
        f = fragment.sites[k]
        block = oe.contract("xal,apob,loir->xpibr", carry, f, w)
        xl, _, _, fb, r = block.shape
        if k == m - 1:
            ts[start + k] = block.reshape(xl, d * d, r)
            log = _rescale(ts, start + k, log)
            break
        res = truncated_svd(block.reshape(xl * d * d, fb * r), chi_max, weight_tol)
        discarded += res.discarded_weight
        ts[start + k] = res.u.reshape(xl, d * d, res.rank)
        carry = (res.s[:, None] * res.vh).reshape(res.rank, fb, r)
        s = frobenius_norm(carry)
        if s == 0.0:
            raise NumericalError("The operator vanished while applying a non-local gate.")
        carry = carry / s
        log += math.log(s)

    log += fragment.log_norm
    for k in range(start + m - 1, start, -1):
        log = _step_left(ts, k, log)
    return MpoOperator(_as_mpo_sites(ts, d), log, start, mpo.truncation_error + discarded, d)


def apply_gate(
    mpo: MpoOperator,
    gate: np.ndarray,
    sites: Tuple[int, int],
    chi_max: int = 1 << 30,
    weight_tol: float = DEFAULT_GATE_WEIGHT_TOL,
    *,
    on: str = "out",
) -> MpoOperator:
    """Apply a two-site gate on ``sites = (lo, hi)``, local or not."""
    lo, hi = sites
    if hi <= lo:
        raise DimensionError(f"Gate sites must be ordered, got {sites}.")
    if hi == lo + 1:
        return apply_two_site_gate(mpo, gate, lo, chi_max, weight_tol, on=on)
    fragment = gate_to_two_site_mpo(gate, hi - lo + 1, mpo.d)
    return zip_up_apply(mpo, fragment, lo, chi_max, weight_tol, on=on)


# ==========================
# Compression and diagnostics
# ==========================
def svd_compress(mpo: MpoOperator, chi_max: int, weight_tol: float = 0.0) -> MpoOperator:
    """Single right-to-left SVD truncation sweep (center ends on site 0)."""
    ts = _as_chain(mpo.sites)
    log = _canonicalize_chain(ts, mpo.log_norm, mpo.ortho_center, mpo.n - 1)
    log, discarded = _svd_sweep_left(ts, log, chi_max, weight_tol)
    return MpoOperator(_as_mpo_sites(ts, mpo.d), log, 0, mpo.truncation_error + discarded, mpo.d)


def variational_compress_traced(
    mpo: MpoOperator,
    chi_target: int,
    fid_tol: float = 1e-12,
    max_sweeps: int = 50,
) -> Tuple[MpoOperator, List[float]]:
    """Variationally fit a bond-``chi_target`` MPO to ``mpo``.

    Returns the fit and the fidelity |<fit|mpo>|^2 of the normalized doubled
    vectors, first for the SVD initialization and then after every half-sweep.
    """
    if chi_target < 1:
        raise ValueError("chi_target must be at least 1.")
    psi = mpo_to_doubled_mps(mpo)
    target = list(psi.sites)
    n = len(target)
    phi = _as_chain(mpo.sites)
    log_phi = _canonicalize_chain(phi, 0.0, mpo.ortho_center, n - 1)
    _svd_sweep_left(phi, log_phi, chi_target, 0.0)

    history = [abs(_transfer_overlap(phi, target)) ** 2]
    if n == 1:
        fit = MpoOperator(_as_mpo_sites(target, mpo.d), psi.log_norm, 0, mpo.truncation_error, mpo.d)
        return fit, [1.0]

    right: List[Optional[Tensor]] = [None] * (n + 1)
    right[n] = np.ones((1, 1), dtype=np.complex128)
    for k in range(n - 1, 0, -1):
        right[k] = oe.contract("apb,cpd,bd->ac", phi[k].conj(), target[k], right[k + 1])
    left: List[Optional[Tensor]] = [None] * (n + 1)
    left[0] = np.ones((1, 1), dtype=np.complex128)

    amplitude = math.sqrt(history[0])
    for sweep in range(max_sweeps):
        before = history[-1]
        for k in range(n - 1):
            local = oe.contract("ac,cpd,bd->apb", left[k], target[k], right[k + 1])
            amplitude = frobenius_norm(local)
            if amplitude == 0.0:
                raise NumericalError("Variational fit lost all overlap with the input.")
            l, p, r = local.shape
            q, rr = qr_positive((local / amplitude).reshape(l * p, r))
            phi[k] = q.reshape(l, p, q.shape[1])
            phi[k + 1] = np.tensordot(rr, phi[k + 1], axes=(1, 0))
            left[k + 1] = oe.contract("ac,apb,cpd->bd", left[k], phi[k].conj(), target[k])
        history.append(_local_fidelity(left[n - 1], target[n - 1], right[n], phi, n - 1))

        for k in range(n - 1, 0, -1):
            local = oe.contract("ac,cpd,bd->apb", left[k], target[k], right[k + 1])
            amplitude = frobenius_norm(local)
            if amplitude == 0.0:
                raise NumericalError("Variational fit lost all overlap with the input.")
            l, p, r = local.shape
            lower, q = lq_positive((local / amplitude).reshape(l, p * r))
            phi[k] = q.reshape(q.shape[0], p, r)
            phi[k - 1] = np.tensordot(phi[k - 1], lower, axes=(2, 0))
            right[k] = oe.contract("apb,cpd,bd->ac", phi[k].conj(), target[k], right[k + 1])
        local = oe.contract("ac,cpd,bd->apb", left[0], target[0], right[1])
        amplitude = frobenius_norm(local)
        phi[0] = local / amplitude
        history.append(min(1.0, amplitude ** 2))

        logger.debug("variational sweep %d: fidelity %.16g", sweep, history[-1])
        if history[-1] - before < fid_tol:
            break

    fit = MpoOperator(
        _as_mpo_sites(phi, mpo.d),
        psi.log_norm + math.log(max(amplitude, 1e-300)),
        0,
        mpo.truncation_error + max(0.0, 1.0 - history[-1]),
        mpo.d,
    )
    return fit, history


def _local_fidelity(left: Tensor, target: Tensor, right: Tensor, phi: List[Tensor], k: int) -> float:
    """Update the last site of a right half-sweep in place and return its fidelity."""
    local = oe.contract("ac,cpd,bd->apb", left, target, right)
    amplitude = frobenius_norm(local)
    phi[k] = local / amplitude
    return min(1.0, amplitude ** 2)


def variational_compress(
    mpo: MpoOperator, chi_target: int, fid_tol: float = 1e-12, max_sweeps: int = 50
) -> MpoOperator:
    return variational_compress_traced(mpo, chi_target, fid_tol, max_sweeps)[0]


def schmidt_spectrum(mpo: MpoOperator, bond: int) -> np.ndarray:
    """Operator-Schmidt coefficients across ``bond`` (between sites bond and
    bond + 1), descending with unit 2-norm."""
    if not 0 <= bond < mpo.n - 1:
        raise DimensionError(f"Bond {bond} is not an interior bond of a {mpo.n}-site chain.")
    ts, _ = _centered(mpo, bond)
    theta = np.tensordot(ts[bond], ts[bond + 1], axes=(2, 0))
    l, p, q, r = theta.shape
    s = _raw_svd(theta.reshape(l * p, q * r))[1]
    return s / np.linalg.norm(s)
