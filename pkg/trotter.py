# trotter.py: brickwork circuits, product formulas and circuit contraction

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg

from dense import circuit_unitary
from errors import GateValidationError, ModelConfigError
from hamiltonians import Term, TermList, absorb_fields, routing_gate
from mpo import DEFAULT_GATE_WEIGHT_TOL, MpoOperator, apply_gate, mpo_identity
from tensor_core import Tensor, as_tensor

logger = logging.getLogger(__name__)

CIRCUIT_UNITARY_TOL = 1e-10
TROTTER_ORDERS = (1, 2, 4)

# (group label, duration) pairs; a product formula before any gate is built
Segment = Tuple[str, float]


@dataclass(frozen=True, eq=False)
class Gate:
    sites: Tuple[int, int]
    unitary: Tensor

    @property
    def lo(self) -> int:
        return self.sites[0]

    @property
    def hi(self) -> int:
        return self.sites[1]

    @property
    def is_local(self) -> bool:
        return self.hi == self.lo + 1


def make_gate(sites: Sequence[int], unitary: np.ndarray) -> Gate:
    lo, hi = int(sites[0]), int(sites[1])
    u = as_tensor(unitary)
    if hi < lo:
        swap = routing_gate("swap")
        lo, hi, u = hi, lo, swap @ u @ swap
    return Gate((lo, hi), u)


@dataclass(frozen=True, eq=False)
class BrickworkCircuit:
    """Layers of two-qubit gates; layer 0 is applied first."""

    n: int
    layers: Tuple[Tuple[Gate, ...], ...]
    topology: str = "chain"
    edges: Optional[FrozenSet[Tuple[int, int]]] = None

    def __post_init__(self) -> None:
        for i, layer in enumerate(self.layers):
            used: set = set()
            for g in layer:
                if g.lo >= g.hi or g.lo < 0 or g.hi >= self.n:
                    raise GateValidationError(f"Layer {i}: invalid gate sites {g.sites} for n={self.n}.")
                if g.unitary.shape != (4, 4):
                    raise GateValidationError(f"Layer {i}: gate on {g.sites} is not 4x4.")
                err = float(np.max(np.abs(g.unitary.conj().T @ g.unitary - np.eye(4))))
                if err > CIRCUIT_UNITARY_TOL:
                    raise GateValidationError(f"Layer {i}: gate on {g.sites} is not unitary ({err:.2e}).")
                if used & set(g.sites):
                    raise GateValidationError(f"Layer {i}: gate supports overlap at {g.sites}.")
                used |= set(g.sites)
                if self.edges is not None and g.sites not in self.edges:
                    raise GateValidationError(f"Layer {i}: {g.sites} is not an edge of topology {self.topology!r}.")

    @property
    def depth(self) -> int:
        return len(self.layers)

    def with_layers(self, layers: Iterable[Iterable[Gate]]) -> "BrickworkCircuit":
        return replace(self, layers=tuple(tuple(layer) for layer in layers))

    def gate_count(self) -> int:
        return sum(len(layer) for layer in self.layers)

    def is_interval_packed(self) -> bool:
        """True when no two gates of a layer have overlapping [lo, hi] ranges."""
        for layer in self.layers:
            ordered = sorted(layer, key=lambda g: g.lo)
            for a, b in zip(ordered, ordered[1:]):
                if a.hi >= b.lo:
                    return False
        return True

    def dense(self) -> Tensor:
        return circuit_unitary(self.n, ([(g.sites, g.unitary) for g in layer] for layer in self.layers))


def _support_set(layer: Sequence[Gate]) -> FrozenSet[Tuple[int, int]]:
    return frozenset(g.sites for g in layer)


def merge_adjacent_layers(circ: BrickworkCircuit) -> BrickworkCircuit:
    """Fuse consecutive layers that act on the same set of site pairs."""
    merged: List[List[Gate]] = []
    for layer in circ.layers:
        if merged and _support_set(merged[-1]) == _support_set(layer):
            later = {g.sites: g.unitary for g in layer}
            merged[-1] = [Gate(g.sites, later[g.sites] @ g.unitary) for g in merged[-1]]
        else:
            merged.append(list(layer))
    return circ.with_layers(merged)


# ==========================
# Product formulas
# ==========================
def _second_order(groups: Sequence[str], dt: float) -> List[Segment]:
    half = [(g, 0.5 * dt) for g in groups]
    return half + half[::-1]


def step_segments(groups: Sequence[str], dt: float, order: int) -> List[Segment]:
    if order == 1:
        return [(g, dt) for g in groups]
    if order == 2:
        return _second_order(groups, dt)
    if order == 4:
        p = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))
        outer = _second_order(groups, p * dt)
        return outer + outer + _second_order(groups, (1.0 - 4.0 * p) * dt) + outer + outer
    raise ModelConfigError(f"Unsupported Trotter order {order}; expected one of {TROTTER_ORDERS}.")


def collapse_segments(segments: Iterable[Segment]) -> List[Segment]:
    out: List[Segment] = []
    for group, tau in segments:
        if out and out[-1][0] == group:
            out[-1] = (group, out[-1][1] + tau)
        else:
            out.append((group, tau))
    return out


def _pack_intervals(gates: Sequence[Gate]) -> List[List[Gate]]:
    """First-fit packing into layers whose gate ranges never overlap."""
    layers: List[List[Gate]] = []
    for g in sorted(gates, key=lambda x: (x.lo, x.hi)):
        for layer in layers:
            if all(g.hi < o.lo or o.hi < g.lo for o in layer):
                layer.append(g)
                break
        else:
            layers.append([g])
    return layers


def _group_layers(terms: Sequence[Term], tau: float) -> List[List[Gate]]:
    direct = [t for t in terms if t.routing is None]
    routed = [t for t in terms if t.routing is not None]
    evolve = lambda t, sites: Gate(sites, scipy.linalg.expm(-1j * tau * t.matrix))
    if not routed:
        return _pack_intervals([evolve(t, t.support) for t in direct])
    route_in = [Gate((t.support[0] + 1, t.support[0] + 2), np.array(routing_gate(t.routing))) for t in routed]
    core = [evolve(t, (t.support[0], t.support[0] + 1)) for t in routed]
    core += [evolve(t, t.support) for t in direct]
    return [route_in, core, [Gate(g.sites, g.unitary.copy()) for g in route_in]]


def _realize(terms: TermList, segments: Sequence[Segment]) -> BrickworkCircuit:
    by_group: Dict[str, List[Term]] = {g: terms.group_terms(g) for g in terms.groups}
    layers: List[List[Gate]] = []
    for group, tau in segments:
        layers.extend(_group_layers(by_group[group], tau))
    circ = BrickworkCircuit(terms.n, tuple(tuple(l) for l in layers if l), terms.topology, terms.edges)
    return merge_adjacent_layers(circ)


def _two_qubit_terms(terms: TermList) -> TermList:
    if any(len(t.support) == 1 for t in terms.terms):
        terms = absorb_fields(terms)
    if not terms.groups:
        raise ModelConfigError("The Hamiltonian has no two-qubit terms to build gates from.")
    return terms


def trotter_circuit(terms: TermList, dt: float, order: int) -> BrickworkCircuit:
    """One merged product-formula step of duration ``dt``."""
    folded = _two_qubit_terms(terms)
    return _realize(folded, collapse_segments(step_segments(folded.groups, dt, order)))


def trotter_sequence(terms: TermList, t: float, order: int, k: int) -> BrickworkCircuit:
    """``k`` steps of duration ``t / k``, merged across step boundaries."""
    if k < 1:
        raise ModelConfigError("The Trotter step count k must be at least 1.")
    folded = _two_qubit_terms(terms)
    step = step_segments(folded.groups, t / k, order)
    return _realize(folded, collapse_segments(step * k))


@dataclass(frozen=True)
class TrotterChoice:
    order: int
    k: int
    depth: int
    padding: int


def enumerate_trotter_depths(terms: TermList, t: float, max_depth: int) -> List[Tuple[int, int, BrickworkCircuit]]:
    """Every (order, k, circuit) with merged depth <= ``max_depth``."""
    found = []
    for order in TROTTER_ORDERS:
        k = 1
        while True:
            circ = trotter_sequence(terms, t, order, k)
            if circ.depth > max_depth:
                break
            found.append((order, k, circ))
            k += 1
    return found


def ansatz_from_trotter(
    terms: TermList, t: float, depth_layers: int
) -> Tuple[BrickworkCircuit, TrotterChoice]:
    """Deepest merged Trotterization with at most ``depth_layers`` layers,
    padded with identity layers up to exactly ``depth_layers``."""
    candidates = enumerate_trotter_depths(terms, t, depth_layers)
    if not candidates:
        minimum = trotter_sequence(terms, t, 1, 1).depth
        raise ModelConfigError(
            f"Depth {depth_layers} is below one first-order Trotter step ({minimum} layers)."
        )
    order, k, circ = max(candidates, key=lambda c: (c[2].depth, c[0]))
    padding = depth_layers - circ.depth
    layers = [list(layer) for layer in circ.layers]
    for j in range(padding):
        pattern = circ.layers[(circ.depth - 2 + j) % circ.depth]
        layers.append([Gate(g.sites, np.eye(4, dtype=np.complex128)) for g in pattern])
    choice = TrotterChoice(order, k, circ.depth, padding)
    logger.info("ansatz for L=%d: order %d, k=%d, %d padding layer(s)", depth_layers, order, k, padding)
    return circ.with_layers(layers), choice


def perturb_circuit(circ: BrickworkCircuit, strength: float, seed: Optional[int]) -> BrickworkCircuit:
    """Multiply every gate by exp(-i * strength * H) for seeded random Hermitian H."""
    if strength <= 0.0:
        return circ
    rng = np.random.default_rng(seed)
    layers = []
    for layer in circ.layers:
        new_layer = []
        for g in layer:
            a = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
            kick = scipy.linalg.expm(-0.5j * strength * (a + a.conj().T))
            new_layer.append(Gate(g.sites, kick @ g.unitary))
        layers.append(new_layer)
    return circ.with_layers(layers)


# ==========================
# Contraction into MPOs
# ==========================
def apply_layer(
    mpo: MpoOperator,
    layer: Sequence[Gate],
    chi_max: int,
    weight_tol: float = DEFAULT_GATE_WEIGHT_TOL,
    *,
    on: str = "out",
    dagger: bool = False,
) -> MpoOperator:
    """Apply all gates of one layer (or their adjoints) to one side of ``mpo``."""
    for g in layer:
        u = g.unitary.conj().T if dagger else g.unitary
        mpo = apply_gate(mpo, u, g.sites, chi_max, weight_tol, on=on)
    return mpo


def circuit_to_mpo(
    circ: BrickworkCircuit, chi_max: int, weight_tol: float = DEFAULT_GATE_WEIGHT_TOL
) -> MpoOperator:
    mpo = mpo_identity(circ.n)
    for layer in circ.layers:
        mpo = apply_layer(mpo, layer, chi_max, weight_tol)
    if circ.layers:
        logger.debug("circuit of depth %d contracted: max bond %d, discarded %.3e",
                     circ.depth, mpo.max_bond(), mpo.truncation_error)
    return mpo
