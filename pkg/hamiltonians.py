# hamiltonians.py: model specifications, term lists and coupling graphs
#
# Term supports and gate sites are 1D chain positions. Graph models map their
# nodes onto the chain through the winding order stored in the graph file.

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from dense import embed
from errors import ModelConfigError
from tensor_core import Tensor

logger = logging.getLogger(__name__)

MODEL_TAGS = ("tfim-1d", "hubbard-1d", "j1j2-1d", "tfim-graph")
DEFAULT_PARAMS: Dict[str, float] = {"h": 1.0, "U": 4.0, "t_hop": 1.0, "J1": 1.0, "J2": 0.25}
ROUTINGS = ("swap", "fswap")

Node = Union[int, str]


# ==========================
# Matrix builders
# ==========================
@lru_cache(maxsize=32)
def pauli(label: str) -> Tensor:
    """Tensor product of single-qubit Paulis, e.g. ``pauli("ZZ")``."""
    table = {
        "I": np.eye(2),
        "X": np.array([[0, 1], [1, 0]]),
        "Y": np.array([[0, -1j], [1j, 0]]),
        "Z": np.diag([1, -1]),
        "N": np.diag([0, 1]),
    }
    out = np.ones((1, 1), dtype=np.complex128)
    for ch in label:
        if ch not in table:
            raise ValueError(f"Unknown Pauli label {ch!r}.")
        out = np.kron(out, table[ch])
    out = out.astype(np.complex128)
    out.flags.writeable = False
    return out


@lru_cache(maxsize=4)
def routing_gate(kind: str) -> Tensor:
    """SWAP, or the fermionic SWAP (SWAP followed by CZ)."""
    swap = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=np.complex128)
    if kind not in ROUTINGS:
        raise ValueError(f"Unknown routing {kind!r}.")
    out = swap if kind == "swap" else np.diag([1, 1, 1, -1]).astype(np.complex128) @ swap
    out.flags.writeable = False
    return out


def heisenberg_coupling() -> Tensor:
    return pauli("XX") + pauli("YY") + pauli("ZZ")


# ==========================
# Graphs
# ==========================
@dataclass(frozen=True)
class CouplingGraph:
    """Undirected coupling graph; ``nodes`` is the winding order onto the chain."""

    nodes: Tuple[Node, ...]
    edges: Tuple[Tuple[Node, Node], ...]
    name: str = ""

    def to_networkx(self) -> nx.Graph:
        g = nx.Graph(name=self.name)
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g

    def max_degree(self) -> int:
        return max((deg for _, deg in self.to_networkx().degree()), default=0)

    def positions(self) -> Dict[Node, int]:
        return {node: k for k, node in enumerate(self.nodes)}


@dataclass(frozen=True)
class EdgeSpan:
    u: Node
    v: Node
    lo: int
    hi: int

    @property
    def width(self) -> int:
        return self.hi - self.lo


def graph_from_mapping(data: Mapping, *, source: str = "graph") -> CouplingGraph:
    """Validate a ``{"nodes": [...], "edges": [[u, v], ...]}`` mapping."""
    if not isinstance(data, Mapping):
        raise ModelConfigError(f"{source}: graph root must be an object.")
    nodes = data.get("nodes")
    edges = data.get("edges")
    if not isinstance(nodes, list) or not nodes:
        raise ModelConfigError(f"{source}: 'nodes' must be a non-empty list.")
    if not isinstance(edges, list):
        raise ModelConfigError(f"{source}: 'edges' must be a list of node pairs.")
    if len(set(nodes)) != len(nodes):
        raise ModelConfigError(f"{source}: node labels must be unique.")
    known = set(nodes)
    seen = set()
    clean: List[Tuple[Node, Node]] = []
    for item in edges:
        if not isinstance(item, (list, tuple)) or len(item) != 2:
            raise ModelConfigError(f"{source}: edge {item!r} is not a pair.")
        u, v = item
        if u not in known or v not in known:
            raise ModelConfigError(f"{source}: dangling edge {item!r} references an unknown node.")
        if u == v:
            raise ModelConfigError(f"{source}: self-loop on node {u!r}.")
        key = frozenset((u, v))
        if key in seen:
            raise ModelConfigError(f"{source}: duplicate edge {item!r}.")
        seen.add(key)
        clean.append((u, v))
    return CouplingGraph(tuple(nodes), tuple(clean), str(data.get("name", "")))


def heavy_hex_graph(path: Union[str, Path]) -> CouplingGraph:
    """Load a coupling graph file (nodes listed in winding order)."""
    from config_loader import read_json_file

    path = Path(path)
    graph = graph_from_mapping(read_json_file(path), source=str(path))
    if not graph.name:
        graph = CouplingGraph(graph.nodes, graph.edges, path.stem)
    logger.debug("graph %s: %d nodes, %d edges, max degree %d",
                 graph.name, len(graph.nodes), len(graph.edges), graph.max_degree())
    return graph


def map_graph_to_chain(graph: CouplingGraph, winding: Optional[Sequence[Node]] = None) -> List[EdgeSpan]:
    order = tuple(winding) if winding is not None else graph.nodes
    if sorted(map(str, order)) != sorted(map(str, graph.nodes)) or len(set(order)) != len(order):
        raise ModelConfigError("Winding must be a permutation of the graph nodes.")
    pos = {node: k for k, node in enumerate(order)}
    spans = []
    for u, v in graph.edges:
        a, b = pos[u], pos[v]
        spans.append(EdgeSpan(u, v, min(a, b), max(a, b)))
    return spans


_COLORING_FALLBACKS = ("saturation_largest_first", "smallest_last", "independent_set")


def edge_coloring(graph: CouplingGraph) -> List[List[Tuple[Node, Node]]]:
    """Greedy largest-degree-first coloring of the line graph.

    When that needs more than max degree + 1 colors, the other networkx
    greedy strategies are tried and the one with fewest colors kept.
    """
    g = graph.to_networkx()
    if g.number_of_edges() == 0:
        return []
    line = nx.line_graph(g)
    colors = nx.greedy_color(line, strategy="largest_first")
    bound = graph.max_degree() + 1
    for strategy in _COLORING_FALLBACKS:
        if max(colors.values()) + 1 <= bound:
            break
        candidate = nx.greedy_color(line, strategy=strategy)
        if max(candidate.values()) < max(colors.values()):
            colors = candidate
    classes: Dict[int, List[Tuple[Node, Node]]] = {}
    for u, v in graph.edges:
        c = colors[(u, v)] if (u, v) in colors else colors[(v, u)]
        classes.setdefault(c, []).append((u, v))
    return [classes[c] for c in sorted(classes)]


# ==========================
# Specs and terms
# ==========================
@dataclass(frozen=True)
class HamiltonianSpec:
    model: str
    n: int
    t: float
    params: Mapping[str, float] = field(default_factory=dict)
    graph: Optional[CouplingGraph] = None

    def __post_init__(self) -> None:
        if self.model not in MODEL_TAGS:
            raise ModelConfigError(f"Unknown model {self.model!r}; expected one of {', '.join(MODEL_TAGS)}.")
        if self.n < 1:
            raise ModelConfigError("n must be a positive qubit count.")
        if self.model == "tfim-graph":
            if self.graph is None:
                raise ModelConfigError("tfim-graph needs a coupling graph.")
            if len(self.graph.nodes) != self.n:
                raise ModelConfigError(f"Graph has {len(self.graph.nodes)} nodes but n = {self.n}.")
        if self.model == "hubbard-1d" and self.n % 2:
            raise ModelConfigError("hubbard-1d needs an even qubit count (two orbitals per site).")

    def param(self, key: str) -> float:
        return float(self.params.get(key, DEFAULT_PARAMS[key]))


@dataclass(frozen=True, eq=False)
class Term:
    """Hermitian term on chain positions ``support``.

    A routed term has ``support = (a, a + 2)`` and a 4x4 matrix that acts on
    (a, a + 1) once the SWAP or fermionic SWAP on (a + 1, a + 2) has brought
    the far mode next to ``a``.
    """

    support: Tuple[int, ...]
    matrix: Tensor
    group: str
    routing: Optional[str] = None

    @property
    def footprint(self) -> Tuple[int, int]:
        return self.support[0], self.support[-1]

    def dense(self, n: int) -> Tensor:
        if len(self.support) == 1:
            return embed(self.matrix, self.support, n)
        lo, hi = self.support
        if self.routing is None:
            return embed(self.matrix, (lo, hi), n)
        r = embed(routing_gate(self.routing), (lo + 1, lo + 2), n)
        return r @ embed(self.matrix, (lo, lo + 1), n) @ r


@dataclass(frozen=True, eq=False)
class TermList:
    n: int
    terms: Tuple[Term, ...]
    groups: Tuple[str, ...]
    topology: str
    edges: FrozenSet[Tuple[int, int]]

    def __post_init__(self) -> None:
        for term in self.terms:
            if any(not 0 <= q < self.n for q in term.support):
                raise ModelConfigError(f"Term support {term.support} exceeds n = {self.n}.")
            if np.max(np.abs(term.matrix - term.matrix.conj().T)) > 1e-12:
                raise ModelConfigError(f"Term on {term.support} is not Hermitian.")
        for g in self.groups:
            covered: set = set()
            for term in self.group_terms(g):
                lo, hi = term.footprint
                span = set(range(lo, hi + 1)) if term.routing else set(term.support)
                if covered & span:
                    raise ModelConfigError(f"Group {g!r} has overlapping supports.")
                covered |= span

    def group_terms(self, group: str) -> List[Term]:
        return [term for term in self.terms if term.group == group]

    def dense(self) -> Tensor:
        dim = 2 ** self.n
        h = np.zeros((dim, dim), dtype=np.complex128)
        for term in self.terms:
            h = h + term.dense(self.n)
        return h


def _chain_edges(n: int) -> FrozenSet[Tuple[int, int]]:
    return frozenset((i, i + 1) for i in range(n - 1))


def _interval_coloring(footprints: Sequence[Tuple[int, int]], prefix: str) -> List[str]:
    """First-fit coloring so that equal colors never share a chain position."""
    occupied: List[set] = []
    labels = []
    for lo, hi in footprints:
        span = set(range(lo, hi + 1))
        for c, taken in enumerate(occupied):
            if not taken & span:
                taken |= span
                labels.append(f"{prefix}-{c}")
                break
        else:
            occupied.append(span)
            labels.append(f"{prefix}-{len(occupied) - 1}")
    return labels


def _ordered_groups(terms: Sequence[Term], preferred: Sequence[str]) -> Tuple[str, ...]:
    present = []
    for g in list(preferred) + [t.group for t in terms]:
        if g not in present and any(t.group == g for t in terms):
            present.append(g)
    return tuple(present)


def tfim_chain_terms(n: int, h: float) -> TermList:
    terms = [Term((i, i + 1), pauli("ZZ"), "even" if i % 2 == 0 else "odd") for i in range(n - 1)]
    if h != 0.0:
        terms += [Term((i,), h * pauli("X"), "field") for i in range(n)]
    return TermList(n, tuple(terms), _ordered_groups(terms, ("even", "odd", "field")), "chain", _chain_edges(n))


def j1j2_terms(n: int, j1: float, j2: float) -> TermList:
    if n < 2:
        raise ModelConfigError("j1j2-1d needs at least two qubits.")
    coupling = heisenberg_coupling()
    terms = [Term((i, i + 1), j1 * coupling, "even" if i % 2 == 0 else "odd") for i in range(n - 1)]
    if j2 != 0.0:
        footprints = [(i, i + 2) for i in range(n - 2)]
        labels = _interval_coloring(footprints, "nnn")
        terms += [Term(fp, j2 * coupling, lab, "swap") for fp, lab in zip(footprints, labels)]
    return TermList(n, tuple(terms), _ordered_groups(terms, ("even", "odd")), "chain", _chain_edges(n))


def hubbard_staggered_terms(n_sites: int, U: float, t_hop: float) -> TermList:
    """Jordan-Wigner Hubbard chain with qubits (0 up, 0 down, 1 up, 1 down, ...).

    Same-spin hopping between sites i and i+1 joins qubits two apart and is
    routed through a fermionic SWAP with the orbital in between.
    """
    if n_sites < 1:
        raise ModelConfigError("hubbard-1d needs at least one site.")
    n = 2 * n_sites
    terms = [Term((2 * i, 2 * i + 1), U * pauli("NN"), "onsite") for i in range(n_sites)]
    hop = -0.5 * t_hop * (pauli("XX") + pauli("YY"))
    footprints = []
    for i in range(n_sites - 1):
        footprints += [(2 * i, 2 * i + 2), (2 * i + 1, 2 * i + 3)]
    labels = _interval_coloring(footprints, "hop")
    terms += [Term(fp, hop, lab, "fswap") for fp, lab in zip(footprints, labels)]
    return TermList(n, tuple(terms), _ordered_groups(terms, ("onsite",)), "chain", _chain_edges(n))


def tfim_graph_terms(graph: CouplingGraph, h: float) -> TermList:
    n = len(graph.nodes)
    pos = graph.positions()
    terms: List[Term] = []
    for c, edges in enumerate(edge_coloring(graph)):
        for u, v in edges:
            lo, hi = sorted((pos[u], pos[v]))
            terms.append(Term((lo, hi), pauli("ZZ"), f"color-{c}"))
    if h != 0.0:
        terms += [Term((q,), h * pauli("X"), "field") for q in range(n)]
    allowed = frozenset((s.lo, s.hi) for s in map_graph_to_chain(graph))
    topology = graph.name or "graph"
    return TermList(n, tuple(terms), _ordered_groups(terms, ()), topology, allowed)


def build_terms(spec: HamiltonianSpec) -> TermList:
    if spec.model == "tfim-1d":
        return tfim_chain_terms(spec.n, spec.param("h"))
    if spec.model == "j1j2-1d":
        return j1j2_terms(spec.n, spec.param("J1"), spec.param("J2"))
    if spec.model == "hubbard-1d":
        return hubbard_staggered_terms(spec.n // 2, spec.param("U"), spec.param("t_hop"))
    if spec.model == "tfim-graph":
        return tfim_graph_terms(spec.graph, spec.param("h"))
    raise ModelConfigError(f"Unknown model {spec.model!r}.")


def absorb_fields(terms: TermList) -> TermList:
    """Fold every one-qubit term into a two-qubit term that touches it.

    A field on qubit q joins the first unrouted term whose left qubit is q, or
    failing that, the first whose right qubit is q.
    """
    pairs = [t for t in terms.terms if len(t.support) == 2]
    singles = [t for t in terms.terms if len(t.support) == 1]
    matrices = {id(t): np.array(t.matrix) for t in pairs}
    for s in singles:
        (q,) = s.support
        host = next((t for t in pairs if t.routing is None and t.support[0] == q), None)
        if host is not None:
            matrices[id(host)] = matrices[id(host)] + np.kron(s.matrix, np.eye(2))
            continue
        host = next((t for t in pairs if t.routing is None and t.support[1] == q), None)
        if host is None:
            raise ModelConfigError(f"Qubit {q} has a field term but no two-qubit term to absorb it.")
        matrices[id(host)] = matrices[id(host)] + np.kron(np.eye(2), s.matrix)
    folded = tuple(Term(t.support, matrices[id(t)], t.group, t.routing) for t in pairs)
    groups = tuple(g for g in terms.groups if any(t.group == g for t in folded))
    return TermList(terms.n, folded, groups, terms.topology, terms.edges)
