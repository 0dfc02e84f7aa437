"""Tests for the MPO, circuit and checkpoint containers."""

from __future__ import annotations

import json

import numpy as np
import pytest

from conftest import random_layered_circuit, random_mpo
from errors import ArtifactError, GateValidationError
from mpo import canonicalize, to_dense
from serialization import (
    mpo_from_bytes,
    mpo_to_bytes,
    read_checkpoint,
    read_circuit,
    read_mpo,
    write_checkpoint,
    write_circuit,
    write_mpo,
)
from trotter import BrickworkCircuit


def test_mpo_file_preserves_operator_and_header(rng, tmp_path) -> None:
    mpo = canonicalize(random_mpo(rng, 4, 3), 2)
    back = read_mpo(write_mpo(tmp_path / "v.mpo", mpo))
    np.testing.assert_array_equal(to_dense(back), to_dense(mpo))
    assert back.log_norm == mpo.log_norm
    assert back.ortho_center == 2
    assert back.truncation_error == mpo.truncation_error


def test_mpo_without_center(rng) -> None:
    mpo = random_mpo(rng, 3, 2)
    assert mpo_from_bytes(mpo_to_bytes(mpo)).ortho_center is None


@pytest.mark.parametrize(
    "mangle",
    [
        lambda b: b"XMPO" + b[4:],
        lambda b: b[:20],
        lambda b: b[:-8],
        lambda b: b + b"\x00",
    ],
)
def test_corrupt_mpo_bytes(rng, mangle) -> None:
    blob = mpo_to_bytes(random_mpo(rng, 3, 2))
    with pytest.raises(ArtifactError):
        mpo_from_bytes(mangle(blob))


def test_missing_mpo_file(tmp_path) -> None:
    with pytest.raises(ArtifactError):
        read_mpo(tmp_path / "nope.mpo")


def test_circuit_file_keeps_gates_and_metadata(rng, tmp_path) -> None:
    circ = random_layered_circuit(rng, 5, 3, max_span=3)
    path = write_circuit(tmp_path / "c.circ", circ, {"depth": 3, "final_cost": 1.5e-7})
    back, metadata = read_circuit(path)
    assert back.depth == circ.depth
    assert [[g.sites for g in layer] for layer in back.layers] == [[g.sites for g in layer] for layer in circ.layers]
    np.testing.assert_allclose(back.dense(), circ.dense(), atol=1e-14)
    assert metadata == {"depth": 3, "final_cost": 1.5e-7}


def test_circuit_edges_survive(rng, tmp_path) -> None:
    circ = random_layered_circuit(rng, 4, 1, pairs=[(0, 2)])
    circ = BrickworkCircuit(4, circ.layers, "graph", frozenset({(0, 2), (2, 3), (0, 1)}))
    back, _ = read_circuit(write_circuit(tmp_path / "g.circ", circ))
    assert back.topology == "graph"
    assert back.edges == circ.edges


def test_circuit_writes_are_byte_identical(rng, tmp_path) -> None:
    circ = random_layered_circuit(rng, 4, 2)
    a = write_circuit(tmp_path / "a.circ", circ, {"x": 1}).read_bytes()
    b = write_circuit(tmp_path / "b.circ", circ, {"x": 1}).read_bytes()
    assert a == b


def test_non_unitary_gate_in_file(rng, tmp_path) -> None:
    path = write_circuit(tmp_path / "c.circ", random_layered_circuit(rng, 4, 1, pairs=[(0, 1)]))
    data = json.loads(path.read_text(encoding="utf-8"))
    data["layers"][0][0]["unitary"][0][0] *= 1.5
    path.write_text(json.dumps(data), encoding="utf-8")
    with pytest.raises(GateValidationError):
        read_circuit(path)


@pytest.mark.parametrize(
    "payload",
    [
        "not json",
        json.dumps({"format": "something-else"}),
        json.dumps({"format": "brickwork-circuit", "version": 99}),
        json.dumps({"format": "brickwork-circuit", "version": 1, "n": 2, "layers": [[{"sites": [0, 1], "unitary": [[1, 0]]}]]}),
        json.dumps({"format": "brickwork-circuit", "version": 1, "layers": []}),
    ],
)
def test_malformed_circuit_files(tmp_path, payload) -> None:
    path = tmp_path / "bad.circ"
    path.write_text(payload, encoding="utf-8")
    with pytest.raises(ArtifactError):
        read_circuit(path)


def test_checkpoint_contents(rng, tmp_path) -> None:
    circ = random_layered_circuit(rng, 4, 2)
    rows = [{"sweep": 0, "cost": 0.5, "cold_cost": None}, {"sweep": 1, "cost": 0.25, "cold_cost": 0.26}]
    path = write_checkpoint(tmp_path / "ckpt" / "L2.json", circ, 32, 1, rows)
    back, chi, sweep, trace = read_checkpoint(path)
    assert (chi, sweep, trace) == (32, 1, rows)
    np.testing.assert_allclose(back.dense(), circ.dense(), atol=1e-14)
    assert not path.with_suffix(".json.tmp").exists()


def test_checkpoint_rejects_circuit_file(rng, tmp_path) -> None:
    path = write_circuit(tmp_path / "c.circ", random_layered_circuit(rng, 4, 1))
    with pytest.raises(ArtifactError):
        read_checkpoint(path)
    with pytest.raises(ArtifactError):
        read_checkpoint(tmp_path / "missing.json")
