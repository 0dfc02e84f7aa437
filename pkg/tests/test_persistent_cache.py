"""Tests for the on-disk target cache."""

from __future__ import annotations

import json

import numpy as np

from conftest import random_mpo
from mpo import to_dense
from persistent_cache import PersistentCache, TargetCache

DESCRIPTION = {"model": {"model": "tfim-1d", "n": 3, "t": 0.5}, "k": 4, "chi_ladder": [16], "conv_tol": 1e-10}


def test_blob_store_and_stats(tmp_path) -> None:
    cache = PersistentCache(tmp_path)
    assert cache.get("abc") is None
    assert cache.set("abc", b"\x01\x02\x03", {"chi": 4})
    assert cache.get("abc") == b"\x01\x02\x03"
    stats = cache.stats()
    assert stats["items"] == 1
    assert stats["ttl_hours"] == 168.0
    reopened = PersistentCache(tmp_path)
    assert reopened.metadata["abc"]["info"] == {"chi": 4}


def test_expired_entries_are_dropped(tmp_path) -> None:
    cache = PersistentCache(tmp_path, ttl_hours=-1.0)
    cache.set("old", b"x")
    assert cache.get("old") is None
    assert not (tmp_path / "old.bin").exists()
    cache.set("older", b"y")
    assert cache.cleanup_expired() == 1
    assert cache.stats()["items"] == 0


def test_clear(tmp_path) -> None:
    cache = PersistentCache(tmp_path)
    for key in ("a", "b"):
        cache.set(key, b"z")
    assert cache.clear() == 2
    assert cache.get("a") is None


def test_unreadable_metadata_starts_empty(tmp_path) -> None:
    (tmp_path / "_metadata.json").write_text("{broken", encoding="utf-8")
    assert PersistentCache(tmp_path).stats()["items"] == 0


def test_target_round_trip(rng, tmp_path) -> None:
    mpo = random_mpo(rng, 3, 2)
    cache = TargetCache(tmp_path)
    assert cache.load(DESCRIPTION) is None
    cache.store(DESCRIPTION, mpo, {"chi": 16})
    hit = TargetCache(tmp_path).load(json.loads(json.dumps(DESCRIPTION)))
    assert hit is not None
    loaded, info = hit
    np.testing.assert_array_equal(to_dense(loaded), to_dense(mpo))
    assert info == {"chi": 16}
    assert cache.load({**DESCRIPTION, "k": 5}) is None


def test_corrupt_target_entry_is_removed(rng, tmp_path) -> None:
    cache = TargetCache(tmp_path)
    cache.store(DESCRIPTION, random_mpo(rng, 3, 2))
    key = TargetCache.key(DESCRIPTION)
    (tmp_path / f"{key}.bin").write_bytes(b"garbage")
    assert cache.load(DESCRIPTION) is None
    assert not (tmp_path / f"{key}.bin").exists()
