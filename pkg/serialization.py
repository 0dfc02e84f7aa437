# serialization.py: on-disk containers for MPOs, circuits and optimizer checkpoints
#
# MPO container (little-endian):
#   magic b"QMPO" | u32 version | u32 n | u32 d | f64 log_norm | i32 ortho_center (-1 = none)
#   | f64 truncation_error | n x 4 u32 site shapes | site entries as complex128, C order
#
# Circuit container: UTF-8 JSON with version, n, topology, optional edge list,
# metadata and layers of {"sites": [lo, hi], "unitary": 16 [re, im] pairs}.

from __future__ import annotations

import json
import struct
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np

from errors import ArtifactError, CompilerError, GateValidationError
from mpo import MpoOperator
from trotter import BrickworkCircuit, Gate

MPO_MAGIC = b"QMPO"
MPO_VERSION = 1
CIRCUIT_FORMAT = "brickwork-circuit"
CIRCUIT_VERSION = 1
CHECKPOINT_FORMAT = "optimizer-checkpoint"
CHECKPOINT_VERSION = 1

_HEADER = struct.Struct("<4sIIIdid")
_SHAPE = struct.Struct("<4I")

PathLike = Union[str, Path]


# ==========================
# MPO binary container
# ==========================
def mpo_to_bytes(mpo: MpoOperator) -> bytes:
    center = -1 if mpo.ortho_center is None else int(mpo.ortho_center)
    parts = [_HEADER.pack(MPO_MAGIC, MPO_VERSION, mpo.n, mpo.d, float(mpo.log_norm), center, float(mpo.truncation_error))]
    parts += [_SHAPE.pack(*t.shape) for t in mpo.sites]
    parts += [np.ascontiguousarray(t, dtype="<c16").tobytes() for t in mpo.sites]
    return b"".join(parts)


def mpo_from_bytes(blob: bytes, *, source: str = "<bytes>") -> MpoOperator:
    if len(blob) < _HEADER.size or blob[:4] != MPO_MAGIC:
        raise ArtifactError(f"{source}: not an MPO container.")
    magic, version, n, d, log_norm, center, trunc = _HEADER.unpack_from(blob, 0)
    if version != MPO_VERSION:
        raise ArtifactError(f"{source}: unsupported MPO container version {version}.")
    offset = _HEADER.size
    if len(blob) < offset + n * _SHAPE.size:
        raise ArtifactError(f"{source}: truncated shape table.")
    shapes = [_SHAPE.unpack_from(blob, offset + k * _SHAPE.size) for k in range(n)]
    offset += n * _SHAPE.size
    sites = []
    for shape in shapes:
        count = int(np.prod(shape))
        end = offset + 16 * count
        if end > len(blob):
            raise ArtifactError(f"{source}: truncated site data.")
        data = np.frombuffer(blob, dtype="<c16", count=count, offset=offset)
        sites.append(np.array(data, dtype=np.complex128).reshape(shape))
        offset = end
    if offset != len(blob):
        raise ArtifactError(f"{source}: {len(blob) - offset} trailing bytes.")
    try:
        return MpoOperator(tuple(sites), log_norm, None if center < 0 else center, trunc, d)
    except CompilerError as exc:
        raise ArtifactError(f"{source}: {exc}") from exc


def write_mpo(path: PathLike, mpo: MpoOperator) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(mpo_to_bytes(mpo))
    return path


def read_mpo(path: PathLike) -> MpoOperator:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"MPO file not found: {path}")
    return mpo_from_bytes(path.read_bytes(), source=str(path))


# ==========================
# Circuit text container
# ==========================
def _encode_unitary(u: np.ndarray) -> List[List[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(u).reshape(-1)]


def _decode_unitary(entries: Any, source: str) -> np.ndarray:
    try:
        arr = np.array(entries, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise ArtifactError(f"{source}: unitary entries are not numeric pairs.") from exc
    if arr.shape != (16, 2):
        raise ArtifactError(f"{source}: a unitary needs 16 [re, im] pairs, got shape {arr.shape}.")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(4, 4)


def circuit_to_dict(circ: BrickworkCircuit, metadata: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    return {
        "format": CIRCUIT_FORMAT,
        "version": CIRCUIT_VERSION,
        "n": circ.n,
        "topology": circ.topology,
        "edges": None if circ.edges is None else sorted([list(e) for e in circ.edges]),
        "metadata": dict(metadata or {}),
        "layers": [
            [{"sites": [g.lo, g.hi], "unitary": _encode_unitary(g.unitary)} for g in layer]
            for layer in circ.layers
        ],
    }


def circuit_from_dict(data: Any, *, source: str = "<circuit>") -> Tuple[BrickworkCircuit, Dict[str, Any]]:
    if not isinstance(data, dict) or data.get("format") != CIRCUIT_FORMAT:
        raise ArtifactError(f"{source}: not a circuit container.")
    if data.get("version") != CIRCUIT_VERSION:
        raise ArtifactError(f"{source}: unsupported circuit version {data.get('version')!r}.")
    try:
        edges = data.get("edges")
        layers = tuple(
            tuple(
                Gate((int(g["sites"][0]), int(g["sites"][1])), _decode_unitary(g["unitary"], source))
                for g in layer
            )
            for layer in data["layers"]
        )
        circ = BrickworkCircuit(
            int(data["n"]),
            layers,
            str(data.get("topology", "chain")),
            None if edges is None else frozenset((int(a), int(b)) for a, b in edges),
        )
    except GateValidationError:
        raise
    except (KeyError, TypeError, ValueError, IndexError) as exc:
        raise ArtifactError(f"{source}: malformed circuit ({exc}).") from exc
    return circ, dict(data.get("metadata") or {})


def write_circuit(path: PathLike, circ: BrickworkCircuit, metadata: Optional[Dict[str, Any]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(circuit_to_dict(circ, metadata), indent=1) + "\n", encoding="utf-8")
    return path


def read_circuit(path: PathLike) -> Tuple[BrickworkCircuit, Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"Circuit file not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno}).") from exc
    return circuit_from_dict(data, source=str(path))


# ==========================
# Optimizer checkpoints
# ==========================
def write_checkpoint(
    path: PathLike,
    circ: BrickworkCircuit,
    chi_train: int,
    sweep: int,
    records: List[Dict[str, Any]],
) -> Path:
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "chi_train": int(chi_train),
        "sweep": int(sweep),
        "trace": records,
        "circuit": circuit_to_dict(circ),
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload), encoding="utf-8")
    tmp.replace(path)
    return path


def read_checkpoint(path: PathLike) -> Tuple[BrickworkCircuit, int, int, List[Dict[str, Any]]]:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"Checkpoint not found: {path}")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: invalid checkpoint JSON.") from exc
    if not isinstance(data, dict) or data.get("format") != CHECKPOINT_FORMAT:
        raise ArtifactError(f"{path}: not an optimizer checkpoint.")
    circ, _ = circuit_from_dict(data.get("circuit"), source=str(path))
    try:
        return circ, int(data["chi_train"]), int(data["sweep"]), list(data["trace"])
    except (KeyError, TypeError, ValueError) as exc:
        raise ArtifactError(f"{path}: malformed checkpoint ({exc}).") from exc
