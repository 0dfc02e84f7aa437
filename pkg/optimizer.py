# optimizer.py: sweep optimization of a fixed-depth circuit against a target MPO
#
# The optimizer maximizes |Tr(V^dagger U)| for U = U^{L-1} ... U^0 (layer 0 is
# applied first). While layer i is being updated the cache holds
#
#   top    = V^dagger U^{L-1} ... U^{i+1}
#   bottom = U^{i-1} ... U^0
#
# so the overlap is Tr(top . U^i . bottom). In the per-site network the
# bottom's out leg meets the gate's in leg, the bottom's in leg meets the
# top's out leg and the top's in leg meets the gate's out leg.

from __future__ import annotations

import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import opt_einsum as oe
import pandas as pd

from errors import CacheStateError, CapacityError, ModelConfigError, UsageError
from mpo import (
    DEFAULT_GATE_WEIGHT_TOL,
    MpoOperator,
    hst_cost,
    mpo_dagger,
    mpo_identity,
    mpo_to_doubled_mps,
    schmidt_spectrum,
    variational_compress,
)
from serialization import read_checkpoint, write_checkpoint
from tensor_core import Tensor, frobenius_norm, polar_parts
from trotter import BrickworkCircuit, Gate, apply_layer, circuit_to_mpo

logger = logging.getLogger(__name__)

DEGENERATE_ENV_TOL = 1e-14
ENV_COMPRESSIONS = ("svd", "variational")

# (normalized tensor, ln of the factor divided out)
Scaled = Tuple[Tensor, float]


@dataclass(frozen=True)
class OptimizerConfig:
    max_sweeps: int = 50
    cost_tol: float = 1e-6
    chi_train: int = 128
    chi_escalation: int = 28
    chi_hard_cap: int = 512
    micro_sweeps: int = 2
    resets: bool = True
    verify_chi_multiplier: int = 2
    weight_tol: float = DEFAULT_GATE_WEIGHT_TOL
    env_compression: str = "svd"
    cold_trace: bool = False

    def __post_init__(self) -> None:
        if self.max_sweeps < 0:
            raise ModelConfigError("max_sweeps must be non-negative.")
        for name in ("cost_tol", "chi_train", "chi_escalation", "chi_hard_cap", "micro_sweeps", "verify_chi_multiplier"):
            if getattr(self, name) <= 0:
                raise ModelConfigError(f"{name} must be positive.")
        if self.env_compression not in ENV_COMPRESSIONS:
            raise ModelConfigError(f"env_compression must be one of {ENV_COMPRESSIONS}, got {self.env_compression!r}.")


@dataclass
class SweepRecord:
    sweep: int
    cost: float
    chi: int
    discarded_weight: float
    seconds: float
    chi_train: int
    min_gain: float = 0.0
    degenerate: int = 0
    cold_cost: Optional[float] = None


@dataclass
class CostTrace:
    records: List[SweepRecord] = field(default_factory=list)
    escalations: List[Tuple[int, int]] = field(default_factory=list)
    init_cost: Optional[float] = None
    final_cost: Optional[float] = None
    chi_train: Optional[int] = None
    verify_chi: Optional[int] = None
    stream_path: Optional[Path] = None

    COLUMNS = ("sweep", "cost", "chi", "discarded_weight", "seconds", "chi_train", "min_gain", "degenerate", "cold_cost")

    def append(self, record: SweepRecord) -> None:
        self.records.append(record)
        if self.stream_path is not None:
            row = pd.DataFrame([asdict(record)], columns=list(self.COLUMNS))
            fresh = not self.stream_path.exists()
            row.to_csv(self.stream_path, mode="a", header=fresh, index=False)

    def costs(self) -> List[float]:
        return [r.cost for r in self.records]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([asdict(r) for r in self.records], columns=list(self.COLUMNS))

    def write_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


def average_gate_fidelity(cost: float, n: int) -> float:
    """Average gate fidelity of a unitary pair with HST cost ``cost``."""
    return 1.0 - cost / (1.0 + 2.0 ** (-n))


# ==========================
# Per-site transfers
# ==========================
def _scaled(t: Tensor, log: float) -> Scaled:
    s = frobenius_norm(t)
    if s == 0.0:
        return t, log
    return t / s, log + math.log(s)


def _idle_left(env: Tensor, b: Tensor, t: Tensor) -> Tensor:
    return oe.contract("bt,byzc,tzyd->cd", env, b, t)


def _idle_right(env: Tensor, b: Tensor, t: Tensor) -> Tensor:
    return oe.contract("byzc,tzyd,cd->bt", b, t, env)


@dataclass(frozen=True)
class _Block:
    lo: int
    hi: int
    gate: Optional[int] = None


def _layer_blocks(n: int, layer: Sequence[Gate]) -> List[_Block]:
    blocks: List[_Block] = []
    k = 0
    for j, g in enumerate(layer):
        while k < g.lo:
            blocks.append(_Block(k, k))
            k += 1
        blocks.append(_Block(g.lo, g.hi, j))
        k = g.hi + 1
    while k < n:
        blocks.append(_Block(k, k))
        k += 1
    return blocks


# ==========================
# Environment cache
# ==========================
class EnvironmentCache:
    """Top and bottom environment MPOs for one layer plus the left/right
    environment tensors at the layer's block boundaries."""

    def __init__(
        self,
        circ: BrickworkCircuit,
        v_targ: MpoOperator,
        chi_train: int,
        *,
        weight_tol: float = DEFAULT_GATE_WEIGHT_TOL,
        env_compression: str = "svd",
    ) -> None:
        if v_targ.n != circ.n:
            raise UsageError(f"Target acts on {v_targ.n} qubits, circuit on {circ.n}.")
        if circ.depth == 0:
            raise UsageError("Cannot optimize an empty circuit.")
        if not circ.is_interval_packed():
            raise UsageError("Sweeps need interval-packed layers (no overlapping gate ranges within a layer).")
        self.n = circ.n
        self.chi_train = chi_train
        self.weight_tol = weight_tol
        self.env_compression = env_compression
        self._template = circ
        self.layers: List[List[Gate]] = [sorted(layer, key=lambda g: g.lo) for layer in circ.layers]
        self.v_dagger = mpo_dagger(v_targ)
        # ln(||V||_F ||U||_F) with ||U||_F = 2^(n/2)
        self.log_scale = mpo_to_doubled_mps(v_targ).log_norm + 0.5 * self.n * math.log(2.0)

        self.discarded = 0.0
        self.peak_bond = 1
        self.gains: List[float] = []
        self.degenerate = 0
        self.last_overlap = 0.0

        top_layer = self.depth - 1
        self.top = self.v_dagger
        bottom = mpo_identity(self.n)
        for i in range(top_layer):
            bottom = self._absorb(bottom, self.layers[i], on="out", dagger=False)
        self.bottom = bottom
        self._enter(top_layer)

    # -- bookkeeping
    @property
    def depth(self) -> int:
        return len(self.layers)

    def circuit(self) -> BrickworkCircuit:
        return self._template.with_layers(self.layers)

    def gate(self, position: Tuple[int, int]) -> Gate:
        layer, j = position
        return self.layers[layer][j]

    def _enter(self, layer: int) -> None:
        self.layer = layer
        self._blocks = _layer_blocks(self.n, self.layers[layer])
        self._gate_block = {b.gate: k for k, b in enumerate(self._blocks) if b.gate is not None}
        ones = np.ones((1, 1), dtype=np.complex128)
        self._left: Dict[int, Scaled] = {0: (ones, 0.0)}
        self._right: Dict[int, Scaled] = {len(self._blocks): (ones, 0.0)}
        self.peak_bond = max(self.peak_bond, self.top.max_bond(), self.bottom.max_bond())

    def _check(self, position: Tuple[int, int]) -> int:
        layer, j = position
        if layer != self.layer:
            raise CacheStateError(f"Cache is at layer {self.layer}, gate requested in layer {layer}.")
        if not 0 <= j < len(self.layers[layer]):
            raise CacheStateError(f"Layer {layer} has no gate {j}.")
        return self._gate_block[j]

    # -- environment MPO maintenance
    def _absorb(self, mpo: MpoOperator, layer: Sequence[Gate], *, on: str, dagger: bool) -> MpoOperator:
        before = mpo.truncation_error
        if self.env_compression == "variational":
            grown = apply_layer(mpo, layer, 2 * self.chi_train, self.weight_tol, on=on, dagger=dagger)
            out = variational_compress(grown, self.chi_train) if grown.max_bond() > self.chi_train else grown
        else:
            out = apply_layer(mpo, layer, self.chi_train, self.weight_tol, on=on, dagger=dagger)
        self.discarded += max(0.0, out.truncation_error - before)
        return out

    def descend(self, *, resets: bool = False) -> None:
        """Move to layer i - 1: top <- top . U^i, bottom <- (U^{i-1})^dagger . bottom."""
        i = self.layer
        if i == 0:
            raise UsageError("Already at the bottom layer.")
        self.top = self._absorb(self.top, self.layers[i], on="in", dagger=False)
        if resets and i == 1:
            self.bottom = mpo_identity(self.n)
        else:
            self.bottom = self._absorb(self.bottom, self.layers[i - 1], on="out", dagger=True)
        self._enter(i - 1)

    def ascend(self, *, resets: bool = False) -> None:
        """Move to layer i + 1: bottom <- U^i . bottom, top <- top . (U^{i+1})^dagger."""
        i = self.layer
        if i == self.depth - 1:
            raise UsageError("Already at the top layer.")
        self.bottom = self._absorb(self.bottom, self.layers[i], on="out", dagger=False)
        if resets and i + 1 == self.depth - 1:
            self.top = self.v_dagger
        else:
            self.top = self._absorb(self.top, self.layers[i + 1], on="in", dagger=True)
        self._enter(i + 1)

    def move_to(self, layer: int, *, resets: bool = True) -> None:
        while self.layer > layer:
            self.descend(resets=resets)
        while self.layer < layer:
            self.ascend(resets=resets)

    def set_gate(self, position: Tuple[int, int], unitary: Tensor) -> None:
        k = self._check(position)
        layer, j = position
        self.layers[layer][j] = Gate(self.layers[layer][j].sites, unitary)
        self.invalidate(k)

    # -- left/right environment tensors
    def _absorb_block_left(self, env: Scaled, block: _Block) -> Scaled:
        b, t = self.bottom.sites, self.top.sites
        if block.gate is None:
            return _scaled(_idle_left(env[0], b[block.lo], t[block.lo]), env[1])
        x, log = self._open_left(env, block)
        g4 = self.layers[self.layer][block.gate].unitary.reshape(2, 2, 2, 2)
        return _scaled(oe.contract("iobt,bjzc,tzpd,opij->cd", x, b[block.hi], t[block.hi], g4), log)

    def _absorb_block_right(self, env: Scaled, block: _Block) -> Scaled:
        b, t = self.bottom.sites, self.top.sites
        if block.gate is None:
            return _scaled(_idle_right(env[0], b[block.lo], t[block.lo]), env[1])
        x, log = _scaled(oe.contract("bjzc,tzpd,cd->jpbt", b[block.hi], t[block.hi], env[0]), env[1])
        for k in range(block.hi - 1, block.lo, -1):
            x, log = _scaled(oe.contract("byzc,tzyd,jpcd->jpbt", b[k], t[k], x), log)
        g4 = self.layers[self.layer][block.gate].unitary.reshape(2, 2, 2, 2)
        return _scaled(oe.contract("bizc,tzod,jpcd,opij->bt", b[block.lo], t[block.lo], x, g4), log)

    def _open_left(self, env: Scaled, block: _Block) -> Scaled:
        """Left tensor with the gate's first site absorbed and its legs left
        open, then every intermediate site absorbed one at a time."""
        b, t = self.bottom.sites, self.top.sites
        x, log = _scaled(oe.contract("bt,bizc,tzod->iocd", env[0], b[block.lo], t[block.lo]), env[1])
        for k in range(block.lo + 1, block.hi):
            x, log = _scaled(oe.contract("iobt,byzc,tzyd->iocd", x, b[k], t[k]), log)
        return x, log

    def left_env(self, k: int) -> Scaled:
        """Environment of blocks ``0 .. k-1``."""
        start = max(j for j in self._left if j <= k)
        for j in range(start, k):
            self._left[j + 1] = self._absorb_block_left(self._left[j], self._blocks[j])
        return self._left[k]

    def right_env(self, k: int) -> Scaled:
        """Environment of blocks ``k .. end``."""
        start = min(j for j in self._right if j >= k)
        for j in range(start, k, -1):
            self._right[j - 1] = self._absorb_block_right(self._right[j], self._blocks[j - 1])
        return self._right[k]

    def invalidate(self, block: int) -> None:
        self._left = {k: v for k, v in self._left.items() if k <= block}
        self._right = {k: v for k, v in self._right.items() if k > block}

    def environment(self, position: Tuple[int, int]) -> Scaled:
        k = self._check(position)
        block = self._blocks[k]
        x, log = self._open_left(self.left_env(k), block)
        r, rlog = self.right_env(k + 1)
        b, t = self.bottom.sites, self.top.sites
        y = oe.contract("iobt,bjzc,tzpd,cd->iojp", x, b[block.hi], t[block.hi], r)
        e = y.transpose(0, 2, 1, 3).reshape(4, 4)
        return _scaled(e, log + rlog + self.top.log_norm + self.bottom.log_norm)

    def overlap(self) -> float:
        """|Tr(V^dagger U)| / (||V|| ||U||) from the full contraction at this layer."""
        env, log = self.left_env(len(self._blocks))
        value = abs(complex(env[0, 0]))
        if value == 0.0:
            return 0.0
        return value * math.exp(log + self.top.log_norm + self.bottom.log_norm - self.log_scale)

    def cost(self) -> float:
        return float(min(1.0, max(0.0, 1.0 - self.overlap() ** 2)))


# ==========================
# Gate environments and updates
# ==========================
def gate_environment(cache: EnvironmentCache, position: Tuple[int, int]) -> Scaled:
    """Environment ``E`` of a nearest-neighbor gate: the overlap equals
    ``Tr(g E) * exp(log)``."""
    g = cache.gate(position)
    if not g.is_local:
        raise UsageError(f"Gate on {g.sites} is not nearest-neighbor; use nonlocal_gate_environment.")
    return cache.environment(position)


def nonlocal_gate_environment(cache: EnvironmentCache, position: Tuple[int, int]) -> Scaled:
    """Environment of a gate on (i, i + w); intermediate sites are absorbed
    one at a time so no tensor larger than d^2 chi_top chi_bottom d^2 exists."""
    return cache.environment(position)


def update_gate(cache: EnvironmentCache, position: Tuple[int, int]) -> Tuple[Tensor, float]:
    """Replace a gate by the unitary that maximizes the overlap with every
    other gate fixed. Returns the new gate and the normalized overlap gain."""
    env, log = cache.environment(position)
    old = cache.gate(position)
    scale = math.exp(log - cache.log_scale)
    before = abs(np.trace(old.unitary @ env)) * scale
    g_new, s = polar_parts(env)
    after = float(np.sum(s)) * scale
    if not after > DEGENERATE_ENV_TOL:
        cache.degenerate += 1
        cache.gains.append(0.0)
        cache.last_overlap = before
        logger.debug("layer %d gate %s: degenerate environment, gate kept", position[0], old.sites)
        return old.unitary, 0.0
    layer = position[0]
    cache.set_gate(position, g_new)
    gain = after - before
    cache.gains.append(gain)
    cache.last_overlap = after
    logger.debug("layer %d gate %s: overlap %.12f (gain %.3e)", layer, old.sites, after, gain)
    return g_new, gain


def reset_outer_environments(cache: EnvironmentCache) -> None:
    """Replace the bottom environment by the exact identity (layer 0) or the
    top environment by the exact V^dagger (last layer)."""
    at_bottom = cache.layer == 0
    at_top = cache.layer == cache.depth - 1
    if not (at_bottom or at_top):
        raise UsageError(f"Environments can only be reset at the outer layers, not at layer {cache.layer}.")
    if at_bottom:
        cache.bottom = mpo_identity(cache.n)
    if at_top:
        cache.top = cache.v_dagger
    cache._enter(cache.layer)


def sweep_order(depth: int) -> List[int]:
    """Top to bottom and back up; inner layers twice, outer layers once."""
    return list(range(depth - 1, -1, -1)) + list(range(1, depth - 1))


def sweep(cache: EnvironmentCache, config: OptimizerConfig, index: int) -> Tuple[BrickworkCircuit, SweepRecord]:
    """One full down-and-up pass; the cache starts and ends at the top layer."""
    if cache.layer != cache.depth - 1:
        raise CacheStateError(f"A sweep starts at the top layer, cache is at layer {cache.layer}.")
    started = time.perf_counter()
    discarded_before = cache.discarded
    first_gain = len(cache.gains)
    degenerate_before = cache.degenerate
    cache.peak_bond = 1

    for layer in sweep_order(cache.depth):
        cache.move_to(layer, resets=config.resets)
        count = len(cache.layers[layer])
        for micro in range(config.micro_sweeps):
            positions = range(count) if micro % 2 == 0 else range(count - 1, -1, -1)
            for j in positions:
                update_gate(cache, (layer, j))
    cost = float(min(1.0, max(0.0, 1.0 - cache.last_overlap ** 2)))
    cache.move_to(cache.depth - 1, resets=config.resets)

    gains = cache.gains[first_gain:]
    record = SweepRecord(
        sweep=index,
        cost=cost,
        chi=cache.peak_bond,
        discarded_weight=cache.discarded,
        seconds=time.perf_counter() - started,
        chi_train=cache.chi_train,
        min_gain=min(gains) if gains else 0.0,
        degenerate=cache.degenerate - degenerate_before,
    )
    record_discarded = cache.discarded - discarded_before
    logger.info("sweep %d: cost %.6e (chi %d, discarded %.2e, %.2fs)",
                index, cost, record.chi, record_discarded, record.seconds)
    return cache.circuit(), record


def _cold_cost(circ: BrickworkCircuit, v_targ: MpoOperator, chi: int) -> float:
    return hst_cost(v_targ, circuit_to_mpo(circ, chi))


def _new_cache(circ: BrickworkCircuit, v_targ: MpoOperator, chi: int, config: OptimizerConfig) -> EnvironmentCache:
    return EnvironmentCache(
        circ, v_targ, chi, weight_tol=config.weight_tol, env_compression=config.env_compression
    )


def optimize(
    circ_init: BrickworkCircuit,
    v_targ: MpoOperator,
    config: OptimizerConfig = OptimizerConfig(),
    *,
    checkpoint: Optional[Union[str, Path]] = None,
    resume_from: Optional[Union[str, Path]] = None,
    trace_path: Optional[Union[str, Path]] = None,
) -> Tuple[BrickworkCircuit, CostTrace]:
    """Sweep until the relative improvement drops below ``cost_tol``.

    A sweep whose cost rises by more than ten times the weight it discarded
    restarts from the current circuit with a larger training bond dimension.
    The returned circuit never has a higher verification cost than
    ``circ_init``.
    """
    if not circ_init.is_interval_packed():
        raise UsageError("Sweeps need interval-packed layers (no overlapping gate ranges within a layer).")
    trace = CostTrace(stream_path=Path(trace_path) if trace_path else None)
    if trace.stream_path is not None and trace.stream_path.exists():
        trace.stream_path.unlink()

    chi = config.chi_train
    circ = circ_init
    done = 0
    if resume_from is not None:
        circ, chi, done, rows = read_checkpoint(resume_from)
        for row in rows:
            trace.append(SweepRecord(**row))
        logger.info("resuming from %s at sweep %d (chi_train %d)", resume_from, done, chi)

    cache = _new_cache(circ, v_targ, chi, config)
    if not trace.records:
        trace.append(SweepRecord(0, cache.cost(), max(cache.top.max_bond(), cache.bottom.max_bond()),
                                 cache.discarded, 0.0, chi))
    previous = trace.records[-1].cost

    while done < config.max_sweeps:
        done += 1
        swept_from = cache.discarded
        circ, record = sweep(cache, config, done)
        if config.cold_trace:
            record.cold_cost = _cold_cost(circ, v_targ, config.verify_chi_multiplier * chi)
        slack = 10.0 * (cache.discarded - swept_from)
        if record.cost > previous + slack + 1e-12:
            chi += config.chi_escalation
            trace.append(record)
            trace.escalations.append((done, chi))
            if chi > config.chi_hard_cap:
                raise CapacityError(
                    f"Cost rose at sweep {done} and chi_train {chi} exceeds the cap {config.chi_hard_cap}.",
                    last_cost=record.cost,
                    partial=(circ, trace),
                )
            logger.warning("cost rose %.3e -> %.3e at sweep %d; restarting with chi_train=%d",
                           previous, record.cost, done, chi)
            cache = _new_cache(circ, v_targ, chi, config)
            previous = cache.cost()
            continue
        trace.append(record)
        if checkpoint is not None:
            write_checkpoint(checkpoint, circ, chi, done, [asdict(r) for r in trace.records])
        improvement = (previous - record.cost) / previous if previous > 0 else 0.0
        previous = record.cost
        if improvement < config.cost_tol:
            break

    verify_chi = config.verify_chi_multiplier * chi
    trace.chi_train = chi
    trace.verify_chi = verify_chi
    trace.init_cost = _cold_cost(circ_init, v_targ, verify_chi)
    trace.final_cost = _cold_cost(circ, v_targ, verify_chi)
    if trace.final_cost > trace.init_cost:
        logger.warning("optimized cost %.3e exceeds the initial %.3e; keeping the initial circuit",
                       trace.final_cost, trace.init_cost)
        circ = circ_init
        trace.final_cost = trace.init_cost
    logger.info("optimized L=%d: cost %.3e -> %.3e at chi %d", circ.depth, trace.init_cost, trace.final_cost, verify_chi)
    return circ, trace


def schmidt_decay_diagnostic(circ: BrickworkCircuit, v_targ: MpoOperator, chi: int) -> List[np.ndarray]:
    """Center-bond operator-Schmidt spectra of (U^{L-i} ... U^{L-1})^dagger V
    for i = 0 .. L."""
    if v_targ.n < 2:
        raise UsageError("The Schmidt diagnostic needs at least two qubits.")
    bond = v_targ.n // 2 - 1
    current = v_targ
    spectra = [schmidt_spectrum(current, bond)]
    for layer in reversed(circ.layers):
        current = apply_layer(current, layer, chi, on="out", dagger=True)
        spectra.append(schmidt_spectrum(current, bond))
    return spectra
