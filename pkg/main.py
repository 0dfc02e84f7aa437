import argparse
import logging
import os
import re
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import pandas as pd
from dotenv import dotenv_values

import dense
from baseline import baseline_depth_cap, compare, trotter_baselines
from config_loader import (
    ModelConfig,
    RunSettings,
    load_env_overrides,
    load_model_config,
    model_fingerprint,
    resolve_config_path,
    resolve_run_settings,
)
from errors import ArtifactError, CompilerError
from hamiltonians import TermList, build_terms
from mpo import MpoOperator, from_dense, hst_cost, to_dense
from optimizer import OptimizerConfig, optimize, schmidt_decay_diagnostic
from persistent_cache import TargetCache
from report import DepthRun, ReportWriter
from serialization import read_circuit, read_mpo, write_circuit, write_mpo
from target import build_target, longest_time_sweep, precompress_target
from trotter import BrickworkCircuit, ansatz_from_trotter, circuit_to_mpo, perturb_circuit
from utils import configure_logging, configure_utf8_stdio, format_list, parse_int_list

logger = logging.getLogger("qcompile")

VERIFY_TOL = 1e-9
EXIT_ERROR = 1
EXIT_VERIFY_FAILED = 2

TARGET_FILE = "target.mpo"
BASELINE_FILE = "baseline.csv"
TROTTER_POINTS_FILE = "trotter_points.csv"
SPECTRA_FILE = "spectra.csv"
TIME_SWEEP_FILE = "time_sweep.csv"
REPORT_FILE = "report.txt"
CACHE_DIR = ".cache"
CHECKPOINT_DIR = ".checkpoints"

_CIRCUIT_RE = re.compile(r"^circuit_L(\d+)\.circ$")


def circuit_file(out_dir: Path, depth: int) -> Path:
    return out_dir / f"circuit_L{depth}.circ"


def trace_file(out_dir: Path, depth: int) -> Path:
    return out_dir / f"trace_L{depth}.csv"


def print_cache_stats() -> None:
    """Print lru_cache statistics of the cached matrix builders."""
    try:
        from hamiltonians import pauli, routing_gate

        print("\n" + "=" * 50)
        print("CACHE STATISTICS")
        print("=" * 50)

        total_hits = 0
        total_misses = 0
        for name, func in (("pauli", pauli), ("routing_gate", routing_gate)):
            info = func.cache_info()
            print(f"\n{name}:")
            print(f"  Hits:   {info.hits}")
            print(f"  Misses: {info.misses}")
            print(f"  Size:   {info.currsize}/{info.maxsize}")
            if info.hits + info.misses > 0:
                print(f"  Rate:   {info.hits / (info.hits + info.misses) * 100:.1f}%")
            total_hits += info.hits
            total_misses += info.misses

        if total_hits + total_misses > 0:
            print("\nTOTAL:")
            print(f"  Hits:   {total_hits}")
            print(f"  Misses: {total_misses}")
            print(f"  Rate:   {total_hits / (total_hits + total_misses) * 100:.1f}%")
        print("=" * 50 + "\n")
    except Exception as e:
        logger.warning("could not read cache statistics: %s", e)


# ==========================
# Run context
# ==========================
class RunContext:
    """Everything a subcommand needs: model, resolved settings, terms and output paths."""

    def __init__(self, cfg: ModelConfig, settings: RunSettings, out_dir: Path, *, use_cache: bool = True):
        self.cfg = cfg
        self.settings = settings
        self.out_dir = out_dir
        self.use_cache = use_cache
        self.terms: TermList = build_terms(cfg.spec)
        self.writer = ReportWriter()
        self.target_info: Optional[Dict[str, Any]] = None
        self.target_cached = False
        self._target: Optional[MpoOperator] = None

    @property
    def n(self) -> int:
        return self.cfg.spec.n

    @property
    def t(self) -> float:
        return self.cfg.spec.t

    def target_description(self) -> Dict[str, Any]:
        s = self.settings
        return {
            "model": model_fingerprint(self.cfg),
            "k": s.k,
            "chi_ladder": list(s.chi_ladder),
            "conv_tol": s.conv_tol,
            "error_budget": s.error_budget,
        }

    def optimizer_config(self) -> OptimizerConfig:
        s = self.settings
        return OptimizerConfig(
            max_sweeps=s.max_sweeps,
            cost_tol=s.cost_tol,
            chi_train=s.chi,
            chi_escalation=s.chi_escalation,
            chi_hard_cap=s.chi_hard_cap,
            micro_sweeps=s.micro_sweeps,
            resets=s.resets,
            verify_chi_multiplier=s.verify_chi_multiplier,
            env_compression=s.env_compression,
        )

    def target(self) -> MpoOperator:
        """Built target, precompressed to the error budget; reused from the cache when possible."""
        if self._target is not None:
            return self._target
        cache = TargetCache(self.out_dir / CACHE_DIR, self.settings.cache_ttl_hours) if self.use_cache else None
        description = self.target_description()
        hit = cache.load(description) if cache is not None else None
        if hit is not None:
            self._target, self.target_info = hit
            self.target_cached = True
        else:
            built, build_report = build_target(
                self.terms, self.t, self.settings.k, self.settings.chi_ladder, self.settings.conv_tol
            )
            compressed, compress_report = precompress_target(built, self.settings.error_budget)
            build_report.compressed_chi = compress_report.compressed_chi
            build_report.compression_history = compress_report.compression_history
            build_report.error_budget = compress_report.error_budget
            build_report.final_cost = compress_report.final_cost
            self._target = compressed
            self.target_info = build_report.as_dict()
            if cache is not None:
                cache.store(description, compressed, self.target_info)
        write_mpo(self.out_dir / TARGET_FILE, self._target)
        return self._target

    def write_report(self, **kwargs: Any) -> Path:
        path = self.writer.write(
            self.out_dir / REPORT_FILE,
            model_fingerprint(self.cfg),
            target=self.target_info,
            cached=self.target_cached,
            **kwargs,
        )
        logger.info("report written to %s", path)
        return path


def load_context(args: argparse.Namespace) -> RunContext:
    dotenv_path = Path.cwd() / ".env"
    env: Dict[str, Any] = dict(dotenv_values(dotenv_path)) if dotenv_path.exists() else {}
    env.update(os.environ)
    config_path = resolve_config_path(args.config, env)
    cfg = load_model_config(config_path)
    cli = {
        "depths": parse_int_list(args.depths) if args.depths else None,
        "chi": args.chi,
        "k": args.k,
        "budget": args.budget,
        "seed": args.seed,
        "perturb": args.perturb,
        "workers": args.workers,
        "max_sweeps": args.max_sweeps,
        "resets": False if args.no_resets else None,
    }
    settings = resolve_run_settings(cfg.run, load_env_overrides(dotenv_path, os.environ), cli)
    out_dir = Path(args.out) if args.out else Path("runs") / config_path.stem
    out_dir.mkdir(parents=True, exist_ok=True)
    logger.info("model %s (n=%d, t=%g) from %s; output in %s",
                cfg.spec.model, cfg.spec.n, cfg.spec.t, config_path, out_dir)
    logger.debug("settings: %s", settings.as_dict())
    return RunContext(cfg, settings, out_dir, use_cache=not args.no_cache)


# ==========================
# compile
# ==========================
def compile_depth(ctx: RunContext, depth: int, *, resume: bool = False) -> DepthRun:
    v_targ = ctx.target()
    ansatz, choice = ansatz_from_trotter(ctx.terms, ctx.t, depth)
    ansatz = perturb_circuit(ansatz, ctx.settings.perturb, ctx.settings.seed)
    checkpoint = ctx.out_dir / CHECKPOINT_DIR / f"L{depth}.json"
    resume_from = checkpoint if resume and checkpoint.exists() else None
    circ, trace = optimize(
        ansatz,
        v_targ,
        ctx.optimizer_config(),
        checkpoint=checkpoint,
        resume_from=resume_from,
        trace_path=trace_file(ctx.out_dir, depth),
    )
    run = DepthRun.from_trace(depth, choice, trace)
    write_circuit(circuit_file(ctx.out_dir, depth), circ, run.as_metadata())
    return run


def cmd_compile(ctx: RunContext, args: argparse.Namespace) -> int:
    depths = ctx.settings.depths
    ctx.target()
    if ctx.settings.workers > 1 and len(depths) > 1:
        with ThreadPoolExecutor(max_workers=ctx.settings.workers) as pool:
            runs = list(pool.map(lambda L: compile_depth(ctx, L, resume=args.resume), depths))
    else:
        runs = [compile_depth(ctx, L, resume=args.resume) for L in depths]
    for run in runs:
        logger.info("L=%d: cost %.6e -> %.6e", run.depth, run.init_cost, run.final_cost)
    ctx.write_report(runs=runs)
    return 0


# ==========================
# baseline
# ==========================
def _load_or_compile(ctx: RunContext, depth: int) -> Tuple[BrickworkCircuit, DepthRun]:
    path = circuit_file(ctx.out_dir, depth)
    if not path.exists():
        logger.info("no circuit for L=%d; compiling", depth)
        compile_depth(ctx, depth)
    circ, metadata = read_circuit(path)
    return circ, DepthRun.from_metadata(metadata)


def _baseline_cost_fn(ctx: RunContext):
    """Dense exact cost at desk scale, otherwise cost against the target MPO."""
    if ctx.n <= dense.DENSE_QUBIT_LIMIT:
        exact = dense.propagator(ctx.terms.dense(), ctx.t)
        return lambda circ: dense.hst_cost(circ.dense(), exact)
    v_targ = ctx.target()
    chi = ctx.settings.verify_chi_multiplier * ctx.settings.chi
    return lambda circ: hst_cost(v_targ, circuit_to_mpo(circ, chi))


def cmd_baseline(ctx: RunContext, args: argparse.Namespace) -> int:
    depths = ctx.settings.depths
    compiled = {}
    runs = []
    for depth in depths:
        circ, run = _load_or_compile(ctx, depth)
        compiled[depth] = circ
        runs.append(run)
    cost_fn = _baseline_cost_fn(ctx)
    cap = baseline_depth_cap(depths)
    logger.info("enumerating Trotter baselines up to depth %d", cap)
    points = trotter_baselines(ctx.terms, ctx.t, cap, cost_fn)
    points.to_csv(ctx.out_dir / TROTTER_POINTS_FILE, index=False)
    table = compare(points, {depth: cost_fn(circ) for depth, circ in compiled.items()})
    table.to_csv(ctx.out_dir / BASELINE_FILE, index=False)
    for row in table.itertuples():
        logger.info("L=%d: compiled %.3e, best Trotter %.3e, reduction %.3g, compression %.3g",
                    row.depth, row.compiled_cost, row.best_trotter_cost, row.reduction_factor, row.compression_factor)
    ctx.target()
    ctx.write_report(runs=runs, comparison=table)
    return 0


# ==========================
# diagnose
# ==========================
def spectra_frame(spectra_by_depth: Dict[int, List[Any]]) -> pd.DataFrame:
    rows = []
    for depth, spectra in sorted(spectra_by_depth.items()):
        for i, values in enumerate(spectra):
            for j, s in enumerate(values):
                rows.append({"depth": depth, "i": i, "j": j, "singular_value": float(s)})
    return pd.DataFrame(rows, columns=["depth", "i", "j", "singular_value"])


def cmd_diagnose(ctx: RunContext, args: argparse.Namespace) -> int:
    v_targ = ctx.target()
    chi = ctx.settings.verify_chi_multiplier * ctx.settings.chi
    spectra = {}
    for depth in ctx.settings.depths:
        circ, _ = read_circuit(circuit_file(ctx.out_dir, depth))
        spectra[depth] = schmidt_decay_diagnostic(circ, v_targ, chi)
        logger.info("L=%d: leading weight %.6f -> %.6f", depth, spectra[depth][0][0] ** 2, spectra[depth][-1][0] ** 2)
    spectra_frame(spectra).to_csv(ctx.out_dir / SPECTRA_FILE, index=False)

    if ctx.settings.time_grid:
        cap = max(ctx.settings.chi_ladder)
        best, table = longest_time_sweep(
            ctx.terms,
            ctx.settings.time_grid,
            cap,
            k=ctx.settings.k,
            conv_tol=ctx.settings.conv_tol,
            chi_ladder=ctx.settings.chi_ladder,
            workers=ctx.settings.workers,
        )
        table.to_csv(ctx.out_dir / TIME_SWEEP_FILE, index=False)
        logger.info("longest simulable time at chi <= %d: t=%g", cap, best)
    return 0


# ==========================
# verify
# ==========================
def _verify_circuit(path: Path, v_targ: MpoOperator, v_dense, n: int) -> Dict[str, Any]:
    row: Dict[str, Any] = {"artifact": path.name, "mpo_cost": None, "dense_cost": None, "ok": False}
    try:
        circ, metadata = read_circuit(path)
        if circ.n != n:
            raise ArtifactError(f"{path}: circuit has {circ.n} qubits, model has {n}.")
        row["mpo_cost"] = hst_cost(v_targ, circuit_to_mpo(circ, 2 ** n))
        row["dense_cost"] = dense.hst_cost(circ.dense(), v_dense)
        ok = abs(row["mpo_cost"] - row["dense_cost"]) <= VERIFY_TOL
        stored = metadata.get("final_cost")
        if stored is not None and int(metadata.get("verify_chi", 0)) >= 2 ** n:
            ok = ok and abs(float(stored) - row["dense_cost"]) <= VERIFY_TOL
        row["ok"] = ok
    except CompilerError as exc:
        logger.error("%s", exc)
    return row


def cmd_verify(ctx: RunContext, args: argparse.Namespace) -> int:
    n = ctx.n
    dense.check_dense_size(n)
    exact = dense.propagator(ctx.terms.dense(), ctx.t)
    target_path = ctx.out_dir / TARGET_FILE
    v_targ = read_mpo(target_path) if target_path.exists() else ctx.target()
    v_dense = to_dense(v_targ)

    rows = [{
        "artifact": TARGET_FILE,
        "mpo_cost": hst_cost(v_targ, from_dense(exact, n)),
        "dense_cost": dense.hst_cost(v_dense, exact),
    }]
    rows[0]["ok"] = abs(rows[0]["mpo_cost"] - rows[0]["dense_cost"]) <= VERIFY_TOL

    circuits = sorted(
        (p for p in ctx.out_dir.iterdir() if _CIRCUIT_RE.match(p.name)),
        key=lambda p: int(_CIRCUIT_RE.match(p.name).group(1)),
    )
    rows.extend(_verify_circuit(p, v_targ, v_dense, n) for p in circuits)

    for row in rows:
        tag = "ok" if row["ok"] else "MISMATCH"
        logger.info("%s: mpo %s, dense %s (%s)", row["artifact"], row["mpo_cost"], row["dense_cost"], tag)
    failed = [r["artifact"] for r in rows if not r["ok"]]
    ctx.write_report(verification=rows)
    if failed:
        logger.error("verification failed for: %s", format_list(failed))
        return EXIT_VERIFY_FAILED
    logger.info("all %d artifact(s) verified to %.0e", len(rows), VERIFY_TOL)
    return 0


COMMANDS = {
    "compile": cmd_compile,
    "baseline": cmd_baseline,
    "diagnose": cmd_diagnose,
    "verify": cmd_verify,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="Model configuration file (JSON); defaults to QCOMPILE_CONFIG")
    common.add_argument("--depths", help="Circuit depths, e.g. 3,5,9,17")
    common.add_argument("--chi", type=int, help="Training bond dimension")
    common.add_argument("--k", type=int, help="Fourth-order Trotter steps for the target")
    common.add_argument("--budget", type=float, help="Target precompression error budget")
    common.add_argument("--seed", type=int, help="Seed of the initial-circuit perturbation")
    common.add_argument("--perturb", type=float, help="Strength of the initial-circuit perturbation")
    common.add_argument("--workers", type=int, help="Depths compiled in parallel")
    common.add_argument("--max-sweeps", type=int, help="Sweep limit per depth")
    common.add_argument("--no-resets", action="store_true", help="Keep contracted environments between passes")
    common.add_argument("--out", help="Output directory (default runs/<config name>)")
    common.add_argument("--no-cache", action="store_true", help="Always rebuild the target MPO")
    common.add_argument("--verbose", action="store_true", help="Debug logging")
    common.add_argument("--cache-stats", action="store_true", help="Print matrix-builder cache statistics at exit")

    parser = argparse.ArgumentParser(description="Compile Hamiltonian time evolution into fixed-depth brickwork circuits.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("compile", parents=[common], help="Build the target and optimize circuits for each depth")
    p.add_argument("--resume", action="store_true", help="Continue from per-depth checkpoints when present")
    sub.add_parser("baseline", parents=[common], help="Compare compiled circuits with equal-depth Trotterizations")
    sub.add_parser("diagnose", parents=[common], help="Write operator-Schmidt spectra of the compiled circuits")
    sub.add_parser("verify", parents=[common], help="Cross-check all artifacts against dense matrices (n <= 10)")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    configure_utf8_stdio()
    args = build_parser().parse_args(argv)
    configure_logging(logging.DEBUG if args.verbose else logging.INFO)
    try:
        ctx = load_context(args)
        return COMMANDS[args.command](ctx, args)
    except (CompilerError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return EXIT_ERROR
    finally:
        if args.cache_stats:
            print_cache_stats()


if __name__ == "__main__":
    sys.exit(main())
