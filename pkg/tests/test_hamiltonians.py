"""Tests for Hamiltonian term lists and coupling graphs."""

from __future__ import annotations

import numpy as np
import pytest

from conftest import CONFIG_DIR
from dense import embed
from errors import ModelConfigError
from hamiltonians import (
    CouplingGraph,
    HamiltonianSpec,
    Term,
    TermList,
    absorb_fields,
    build_terms,
    edge_coloring,
    graph_from_mapping,
    heavy_hex_graph,
    hubbard_staggered_terms,
    j1j2_terms,
    map_graph_to_chain,
    pauli,
    routing_gate,
    tfim_chain_terms,
    tfim_graph_terms,
)


def test_pauli_products_are_cached_and_read_only() -> None:
    zz = pauli("ZZ")
    np.testing.assert_allclose(zz, np.diag([1, -1, -1, 1]))
    assert pauli("ZZ") is zz
    with pytest.raises(ValueError):
        zz[0, 0] = 2.0


def test_fermionic_swap_is_swap_with_sign() -> None:
    fswap = routing_gate("fswap")
    swap = routing_gate("swap")
    np.testing.assert_allclose(fswap, np.diag([1, 1, 1, -1]) @ swap)
    np.testing.assert_allclose(fswap @ fswap, np.eye(4), atol=1e-15)


def test_tfim_chain_dense(rng) -> None:
    n, h = 5, 0.7
    terms = tfim_chain_terms(n, h)
    expected = sum(embed(pauli("ZZ"), (i, i + 1), n) for i in range(n - 1))
    expected = expected + h * sum(embed(pauli("X"), (i,), n) for i in range(n))
    np.testing.assert_allclose(terms.dense(), expected, atol=1e-12)
    assert terms.groups == ("even", "odd", "field")


def test_j1j2_next_nearest_terms_are_routed() -> None:
    n, j1, j2 = 6, 1.0, 0.25
    terms = j1j2_terms(n, j1, j2)
    heis = pauli("XX") + pauli("YY") + pauli("ZZ")
    expected = j1 * sum(embed(heis, (i, i + 1), n) for i in range(n - 1))
    expected = expected + j2 * sum(embed(heis, (i, i + 2), n) for i in range(n - 2))
    np.testing.assert_allclose(terms.dense(), expected, atol=1e-12)
    assert all(t.routing == "swap" for t in terms.terms if t.footprint[1] - t.footprint[0] == 2)


def test_hubbard_conserves_particle_number() -> None:
    terms = hubbard_staggered_terms(3, 4.0, 1.0)
    h = terms.dense()
    number = sum(embed(pauli("N"), (q,), 6) for q in range(6))
    np.testing.assert_allclose(h, h.conj().T, atol=1e-12)
    np.testing.assert_allclose(h @ number - number @ h, 0.0, atol=1e-12)


def test_hubbard_single_particle_hopping() -> None:
    # one spin-up fermion on two sites: hopping amplitude -t_hop between |1000> and |0010>
    terms = hubbard_staggered_terms(2, 0.0, 1.0)
    h = terms.dense()
    a, b = int("1000", 2), int("0010", 2)
    assert h[a, b] == pytest.approx(-1.0)
    assert h[b, a] == pytest.approx(-1.0)


def test_absorb_fields_preserves_hamiltonian() -> None:
    terms = tfim_chain_terms(6, 1.3)
    folded = absorb_fields(terms)
    assert all(len(t.support) == 2 for t in folded.terms)
    assert "field" not in folded.groups
    np.testing.assert_allclose(folded.dense(), terms.dense(), atol=1e-12)


def test_overlapping_group_rejected() -> None:
    terms = (Term((0, 1), pauli("ZZ"), "a"), Term((1, 2), pauli("ZZ"), "a"))
    with pytest.raises(ModelConfigError):
        TermList(3, terms, ("a",), "chain", frozenset({(0, 1), (1, 2)}))


def test_bundled_heavy_hex_graph() -> None:
    graph = heavy_hex_graph(CONFIG_DIR / "graphs" / "heavyhex52.json")
    assert len(graph.nodes) == 52
    assert graph.max_degree() == 3
    spans = map_graph_to_chain(graph)
    assert max(s.width for s in spans) < len(graph.nodes) // 2
    colors = edge_coloring(graph)
    assert len(colors) <= 4
    for edges in colors:
        touched = [q for e in edges for q in e]
        assert len(touched) == len(set(touched))
    assert sum(len(c) for c in colors) == len(graph.edges)


def test_small_graph_has_span_three_edge() -> None:
    graph = heavy_hex_graph(CONFIG_DIR / "graphs" / "heavyhex6.json")
    widths = sorted(s.width for s in map_graph_to_chain(graph))
    assert widths[-1] == 3


def test_graph_terms_dense_match_graph() -> None:
    graph = graph_from_mapping({"nodes": [0, 2, 1, 3], "edges": [[0, 1], [1, 2], [2, 3]]})
    terms = tfim_graph_terms(graph, 0.5)
    pos = graph.positions()
    expected = sum(embed(pauli("ZZ"), tuple(sorted((pos[u], pos[v]))), 4) for u, v in graph.edges)
    expected = expected + 0.5 * sum(embed(pauli("X"), (q,), 4) for q in range(4))
    np.testing.assert_allclose(terms.dense(), expected, atol=1e-12)
    assert (0, 2) in terms.edges


@pytest.mark.parametrize(
    "data",
    [
        {"nodes": [0, 1], "edges": [[0, 2]]},
        {"nodes": [0, 1], "edges": [[1, 1]]},
        {"nodes": [0, 1], "edges": [[0, 1], [1, 0]]},
        {"nodes": [0, 0], "edges": []},
        {"nodes": [], "edges": []},
    ],
)
def test_malformed_graphs_rejected(data) -> None:
    with pytest.raises(ModelConfigError):
        graph_from_mapping(data)


def test_winding_must_be_permutation() -> None:
    graph = CouplingGraph((0, 1, 2), ((0, 1), (1, 2)))
    with pytest.raises(ModelConfigError):
        map_graph_to_chain(graph, winding=[0, 1])


def test_spec_validation() -> None:
    with pytest.raises(ModelConfigError):
        HamiltonianSpec("hubbard-1d", 5, 0.1)
    with pytest.raises(ModelConfigError):
        HamiltonianSpec("ising", 4, 0.1)
    with pytest.raises(ModelConfigError):
        HamiltonianSpec("tfim-graph", 4, 0.1)


def test_build_terms_dispatch() -> None:
    spec = HamiltonianSpec("hubbard-1d", 8, 0.2, {"U": 4.0})
    terms = build_terms(spec)
    assert terms.n == 8
    assert spec.param("t_hop") == 1.0
    assert any(t.routing == "fswap" for t in terms.terms)
