from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

from dotenv import dotenv_values

from errors import ModelConfigError
from hamiltonians import DEFAULT_PARAMS, MODEL_TAGS, HamiltonianSpec, heavy_hex_graph
from utils import parse_bool, parse_float_list, parse_int_list, resolve_relative, safe_parse_json, safe_read_text


ENV_PREFIX = "QCOMPILE_"
_ENV_CONFIG_KEY = ENV_PREFIX + "CONFIG"
_MODEL_KEYS = {"model", "n", "t", "params", "graph", "run", "name"}


@dataclass
class RunSettings:
    depths: List[int] = field(default_factory=lambda: [3, 5, 9, 17])
    chi: int = 128
    k: int = 10
    budget: Optional[float] = None
    target_error: float = 1e-5
    chi_ladder: List[int] = field(default_factory=lambda: [16, 32, 64, 128])
    conv_tol: float = 1e-10
    max_sweeps: int = 50
    cost_tol: float = 1e-6
    micro_sweeps: int = 2
    chi_escalation: int = 28
    chi_hard_cap: int = 512
    resets: bool = True
    verify_chi_multiplier: int = 2
    env_compression: str = "svd"
    perturb: float = 0.0
    seed: Optional[int] = None
    workers: int = 1
    time_grid: Optional[List[float]] = None
    cache_ttl_hours: float = 168.0

    @property
    def error_budget(self) -> float:
        return self.budget if self.budget is not None else self.target_error / 10.0

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)


_FIELD_TYPES = {f.name: f.type for f in fields(RunSettings)}


@dataclass
class ModelConfig:
    spec: HamiltonianSpec
    run: Dict[str, Any]
    path: Optional[Path]
    raw: Dict[str, Any]


def read_json_file(path: Path) -> Dict[str, Any]:
    """Read a JSON object from ``path`` (UTF-8, optional BOM)."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"Configuration file not found: {path}")
    text = safe_read_text(path, encoding="utf-8-sig")
    if text is None:
        raise ModelConfigError(f"{path}: file could not be read.")
    data = safe_parse_json(text)
    if data is None:
        raise ModelConfigError(f"{path}: invalid JSON. Common causes: trailing commas, // comments.")
    if not isinstance(data, dict):
        raise ModelConfigError(f"{path}: root must be a JSON object.")
    return data


def resolve_config_path(cli_path: Optional[str], env: Optional[Mapping[str, str]] = None) -> Path:
    """Explicit ``--config`` path first, then the QCOMPILE_CONFIG environment value."""
    env = env if env is not None else os.environ
    raw = cli_path or env.get(_ENV_CONFIG_KEY, "")
    if not raw or not str(raw).strip():
        raise ModelConfigError(f"No configuration given: pass --config or set {_ENV_CONFIG_KEY}.")
    return resolve_relative(str(raw).strip(), Path.cwd())


def model_from_mapping(data: Mapping[str, Any], *, base_dir: Path, source: str = "config") -> HamiltonianSpec:
    unknown = set(data) - _MODEL_KEYS
    if unknown:
        raise ModelConfigError(f"{source}: unknown key(s) {sorted(unknown)}.")
    for key in ("model", "n", "t"):
        if key not in data:
            raise ModelConfigError(f"{source}: missing required key '{key}'.")
    model = data["model"]
    if model not in MODEL_TAGS:
        raise ModelConfigError(f"{source}: 'model' must be one of {', '.join(MODEL_TAGS)}, got {model!r}.")
    try:
        n = int(data["n"])
        t = float(data["t"])
    except (TypeError, ValueError) as exc:
        raise ModelConfigError(f"{source}: 'n' must be an integer and 't' a number.") from exc
    if isinstance(data["n"], bool) or n != data["n"]:
        raise ModelConfigError(f"{source}: 'n' must be an integer.")

    params_raw = data.get("params") or {}
    if not isinstance(params_raw, dict):
        raise ModelConfigError(f"{source}: 'params' must be an object.")
    params: Dict[str, float] = {}
    for key, value in params_raw.items():
        if key not in DEFAULT_PARAMS:
            raise ModelConfigError(f"{source}: unknown parameter 'params.{key}'.")
        try:
            params[key] = float(value)
        except (TypeError, ValueError) as exc:
            raise ModelConfigError(f"{source}: 'params.{key}' must be a number.") from exc

    graph = None
    if model == "tfim-graph":
        if not data.get("graph"):
            raise ModelConfigError(f"{source}: tfim-graph needs a 'graph' file path.")
        graph = heavy_hex_graph(resolve_relative(str(data["graph"]), base_dir))
    elif data.get("graph"):
        raise ModelConfigError(f"{source}: 'graph' is only valid for tfim-graph.")
    return HamiltonianSpec(model, n, t, params, graph)


def load_model_config(path: Path) -> ModelConfig:
    path = Path(path).resolve()
    data = read_json_file(path)
    spec = model_from_mapping(data, base_dir=path.parent, source=str(path))
    run = data.get("run") or {}
    if not isinstance(run, dict):
        raise ModelConfigError(f"{path}: 'run' must be an object.")
    return ModelConfig(spec, dict(run), path, data)


def _coerce(key: str, value: Any, source: str) -> Any:
    kind = _FIELD_TYPES[key]
    if value is None:
        if "Optional" in str(kind):
            return None
        raise ModelConfigError(f"{source}: '{key}' must not be null.")
    try:
        if key in ("depths", "chi_ladder"):
            return parse_int_list(value) if isinstance(value, str) else [int(v) for v in value]
        if key == "time_grid":
            return parse_float_list(value) if isinstance(value, str) else [float(v) for v in value]
        if key in ("resets",):
            return parse_bool(value)
        if key == "env_compression":
            return str(value)
        if kind in ("int", "Optional[int]"):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        return float(value)
    except (TypeError, ValueError) as exc:
        raise ModelConfigError(f"{source}: invalid value {value!r} for '{key}'.") from exc


def _layer(target: Dict[str, Any], values: Mapping[str, Any], source: str) -> None:
    for key, value in values.items():
        if key not in _FIELD_TYPES:
            raise ModelConfigError(f"{source}: unknown run setting '{key}'.")
        target[key] = _coerce(key, value, source)


def load_env_overrides(env_path: Optional[Path] = None, environ: Optional[Mapping[str, str]] = None) -> Dict[str, str]:
    """QCOMPILE_* settings from ``.env`` overlaid by the process environment,
    keyed by run-setting name."""
    merged: Dict[str, Optional[str]] = {}
    if env_path is not None and Path(env_path).exists():
        merged.update(dotenv_values(env_path))
    merged.update(environ if environ is not None else os.environ)
    out: Dict[str, str] = {}
    for key, value in merged.items():
        if not key.startswith(ENV_PREFIX) or key == _ENV_CONFIG_KEY or value is None:
            continue
        out[key[len(ENV_PREFIX):].lower()] = value
    return out


def resolve_run_settings(
    file_run: Optional[Mapping[str, Any]] = None,
    env: Optional[Mapping[str, str]] = None,
    cli: Optional[Mapping[str, Any]] = None,
) -> RunSettings:
    """Defaults < config file ``run`` section < QCOMPILE_* environment < CLI flags."""
    merged: Dict[str, Any] = RunSettings().as_dict()
    _layer(merged, file_run or {}, "config run section")
    _layer(merged, env or {}, "environment")
    _layer(merged, {k: v for k, v in (cli or {}).items() if v is not None}, "command line")
    settings = RunSettings(**merged)
    _validate(settings)
    return settings


def _validate(s: RunSettings) -> None:
    if not s.depths or any(d < 1 for d in s.depths):
        raise ModelConfigError("'depths' must be a non-empty list of positive integers.")
    for key in ("chi", "k", "max_sweeps", "micro_sweeps", "chi_escalation", "chi_hard_cap", "verify_chi_multiplier", "workers"):
        value = getattr(s, key)
        if value < (0 if key == "max_sweeps" else 1):
            raise ModelConfigError(f"'{key}' must be positive (got {value}).")
    for key in ("target_error", "conv_tol", "cost_tol", "cache_ttl_hours"):
        if getattr(s, key) <= 0:
            raise ModelConfigError(f"'{key}' must be positive.")
    if s.budget is not None and s.budget <= 0:
        raise ModelConfigError("'budget' must be positive.")
    if s.perturb < 0:
        raise ModelConfigError("'perturb' must be non-negative.")
    if not s.chi_ladder or any(b <= a for a, b in zip(s.chi_ladder, s.chi_ladder[1:])):
        raise ModelConfigError("'chi_ladder' must be strictly ascending.")
    if s.env_compression not in ("svd", "variational"):
        raise ModelConfigError("'env_compression' must be 'svd' or 'variational'.")
    if s.chi_hard_cap < s.chi:
        raise ModelConfigError("'chi_hard_cap' must be at least 'chi'.")


def model_fingerprint(cfg: ModelConfig) -> Dict[str, Any]:
    """JSON-serializable identity of the model, used to key cached targets."""
    spec = cfg.spec
    return {
        "model": spec.model,
        "n": spec.n,
        "t": spec.t,
        "params": {k: spec.param(k) for k in sorted(DEFAULT_PARAMS)},
        "graph": None if spec.graph is None else [list(spec.graph.nodes), [list(e) for e in spec.graph.edges]],
    }
