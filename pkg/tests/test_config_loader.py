"""Tests for model files and the run-settings precedence chain."""

from __future__ import annotations

import json

import pytest

from conftest import CONFIG_DIR
from config_loader import (
    RunSettings,
    load_env_overrides,
    load_model_config,
    model_fingerprint,
    read_json_file,
    resolve_config_path,
    resolve_run_settings,
)
from errors import ModelConfigError


def _write(tmp_path, data, name="model.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data), encoding="utf-8")
    return path


@pytest.mark.parametrize("path", sorted(CONFIG_DIR.glob("*.json")), ids=lambda p: p.stem)
def test_bundled_configs_load(path) -> None:
    cfg = load_model_config(path)
    settings = resolve_run_settings(cfg.run)
    assert cfg.spec.n >= 2
    assert settings.depths == sorted(settings.depths)
    if cfg.spec.graph is not None:
        assert len(cfg.spec.graph.nodes) == cfg.spec.n


def test_defaults() -> None:
    s = resolve_run_settings()
    assert s == RunSettings()
    assert s.error_budget == pytest.approx(1e-6)
    assert resolve_run_settings({"budget": 1e-4}).error_budget == 1e-4


def test_precedence_file_env_cli() -> None:
    file_run = {"chi": 64, "k": 6, "max_sweeps": 10}
    env = {"chi": "96", "k": "8"}
    cli = {"chi": 100, "k": None}
    s = resolve_run_settings(file_run, env, cli)
    assert s.chi == 100
    assert s.k == 8
    assert s.max_sweeps == 10


def test_env_string_coercion() -> None:
    env = {"depths": "3, 5,9", "time_grid": "0.5,1.0", "resets": "no", "seed": "7", "budget": "1e-7"}
    s = resolve_run_settings(env=env)
    assert s.depths == [3, 5, 9]
    assert s.time_grid == [0.5, 1.0]
    assert s.resets is False
    assert s.seed == 7
    assert s.budget == 1e-7


def test_dotenv_overlaid_by_environ(tmp_path) -> None:
    dotenv = tmp_path / ".env"
    dotenv.write_text("QCOMPILE_CHI=48\nQCOMPILE_K=4\nQCOMPILE_CONFIG=ignored.json\nOTHER=1\n", encoding="utf-8")
    env = load_env_overrides(dotenv, {"QCOMPILE_K": "5"})
    assert env == {"chi": "48", "k": "5"}
    assert load_env_overrides(tmp_path / "absent.env", {}) == {}


@pytest.mark.parametrize(
    "file_run",
    [
        {"chii": 10},
        {"chi": 2.5},
        {"chi": "lots"},
        {"depths": []},
        {"chi_ladder": [32, 16]},
        {"env_compression": "tebd"},
        {"chi": 1024},
        {"perturb": -0.1},
        {"budget": 0},
        {"chi": None},
    ],
)
def test_invalid_run_settings(file_run) -> None:
    with pytest.raises(ModelConfigError):
        resolve_run_settings(file_run)


def test_resolve_config_path(tmp_path) -> None:
    assert resolve_config_path(str(tmp_path / "a.json"), {}) == tmp_path / "a.json"
    assert resolve_config_path(None, {"QCOMPILE_CONFIG": str(tmp_path / "b.json")}) == tmp_path / "b.json"
    assert resolve_config_path(str(tmp_path / "a.json"), {"QCOMPILE_CONFIG": "b.json"}) == tmp_path / "a.json"
    with pytest.raises(ModelConfigError):
        resolve_config_path(None, {"QCOMPILE_CONFIG": "  "})


def test_model_file_errors(tmp_path) -> None:
    with pytest.raises(FileNotFoundError):
        read_json_file(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text('{"model": "tfim-1d",}', encoding="utf-8")
    with pytest.raises(ModelConfigError):
        read_json_file(bad)
    listing = _write(tmp_path, [1, 2], "list.json")
    with pytest.raises(ModelConfigError):
        read_json_file(listing)


@pytest.mark.parametrize(
    "data",
    [
        {"model": "tfim-1d", "n": 4},
        {"model": "ising", "n": 4, "t": 1.0},
        {"model": "tfim-1d", "n": 4.5, "t": 1.0},
        {"model": "tfim-1d", "n": 4, "t": 1.0, "params": {"mu": 1.0}},
        {"model": "tfim-1d", "n": 4, "t": 1.0, "colour": "red"},
        {"model": "tfim-1d", "n": 4, "t": 1.0, "graph": "g.json"},
        {"model": "tfim-graph", "n": 4, "t": 1.0},
        {"model": "tfim-1d", "n": 4, "t": 1.0, "run": [1]},
    ],
)
def test_invalid_model_files(tmp_path, data) -> None:
    with pytest.raises(ModelConfigError):
        load_model_config(_write(tmp_path, data))


def test_graph_path_is_relative_to_config(tmp_path) -> None:
    (tmp_path / "graphs").mkdir()
    (tmp_path / "graphs" / "g.json").write_text(json.dumps({"nodes": [0, 1, 2], "edges": [[0, 1], [1, 2]]}))
    cfg = load_model_config(_write(tmp_path, {"model": "tfim-graph", "n": 3, "t": 0.5, "graph": "graphs/g.json"}))
    assert cfg.spec.graph.nodes == (0, 1, 2)


def test_fingerprint_tracks_model_only(tmp_path) -> None:
    base = {"model": "tfim-1d", "n": 4, "t": 1.0, "params": {"h": 0.5}}
    a = model_fingerprint(load_model_config(_write(tmp_path, {**base, "run": {"chi": 8}}, "a.json")))
    b = model_fingerprint(load_model_config(_write(tmp_path, {**base, "run": {"chi": 16}}, "b.json")))
    c = model_fingerprint(load_model_config(_write(tmp_path, {**base, "t": 2.0}, "c.json")))
    assert a == b
    assert a != c
    json.dumps(a)
