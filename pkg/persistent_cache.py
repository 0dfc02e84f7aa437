# persistent_cache.py: on-disk cache of built target MPOs, with expiry

import json
import logging
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from errors import ArtifactError
from mpo import MpoOperator
from serialization import mpo_from_bytes, mpo_to_bytes
from utils import stable_hash

logger = logging.getLogger(__name__)


class PersistentCache:
    """Byte blobs on disk keyed by a hash of their description, expiring after a TTL."""

    def __init__(self, cache_dir: Path, ttl_hours: float = 168.0):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.ttl = timedelta(hours=ttl_hours)
        self.metadata_file = self.cache_dir / "_metadata.json"
        self._load_metadata()

    def _load_metadata(self) -> None:
        self.metadata: Dict[str, Dict[str, Any]] = {}
        if self.metadata_file.exists():
            try:
                self.metadata = json.loads(self.metadata_file.read_text(encoding="utf-8"))
            except (OSError, json.JSONDecodeError):
                logger.warning("cache metadata at %s is unreadable; starting empty", self.metadata_file)

    def _save_metadata(self) -> None:
        try:
            self.metadata_file.write_text(json.dumps(self.metadata, indent=2, sort_keys=True), encoding="utf-8")
        except OSError as exc:
            logger.warning("could not save cache metadata: %s", exc)

    def _path(self, key: str) -> Path:
        return self.cache_dir / f"{key}.bin"

    def _expired(self, key: str, now: Optional[datetime] = None) -> bool:
        meta = self.metadata.get(key)
        if meta is None:
            return True
        created = datetime.fromisoformat(meta["created"])
        return (now or datetime.now()) - created > self.ttl

    def get(self, key: str) -> Optional[bytes]:
        path = self._path(key)
        if not path.exists():
            return None
        if self._expired(key):
            self.delete(key)
            return None
        try:
            return path.read_bytes()
        except OSError as exc:
            logger.warning("cache entry %s unreadable: %s", key[:12], exc)
            return None

    def set(self, key: str, value: bytes, info: Optional[Dict[str, Any]] = None) -> bool:
        path = self._path(key)
        try:
            path.write_bytes(value)
        except OSError as exc:
            logger.warning("could not write cache entry %s: %s", key[:12], exc)
            return False
        self.metadata[key] = {
            "created": datetime.now().isoformat(),
            "file": path.name,
            "size_bytes": len(value),
            "info": info or {},
        }
        self._save_metadata()
        return True

    def delete(self, key: str) -> bool:
        path = self._path(key)
        try:
            if path.exists():
                path.unlink()
        except OSError as exc:
            logger.warning("could not delete cache entry %s: %s", key[:12], exc)
            return False
        if self.metadata.pop(key, None) is not None:
            self._save_metadata()
        return True

    def clear(self) -> int:
        count = 0
        for path in self.cache_dir.glob("*.bin"):
            try:
                path.unlink()
                count += 1
            except OSError:
                pass
        self.metadata.clear()
        self._save_metadata()
        return count

    def cleanup_expired(self) -> int:
        now = datetime.now()
        expired = [key for key in self.metadata if self._expired(key, now)]
        return sum(1 for key in expired if self.delete(key))

    def stats(self) -> Dict[str, Any]:
        total = sum(m.get("size_bytes", 0) for m in self.metadata.values())
        oldest = min((m["created"] for m in self.metadata.values()), default=None)
        return {
            "items": len(self.metadata),
            "total_size_mb": total / 1024 / 1024,
            "cache_dir": str(self.cache_dir),
            "ttl_hours": self.ttl.total_seconds() / 3600,
            "oldest_item": oldest,
        }


class TargetCache:
    """Built (and precompressed) target MPOs keyed by model and target settings."""

    def __init__(self, cache_dir: Path, ttl_hours: float = 168.0):
        self.cache = PersistentCache(cache_dir, ttl_hours)

    @staticmethod
    def key(description: Dict[str, Any]) -> str:
        return stable_hash(description)

    def load(self, description: Dict[str, Any]) -> Optional[Tuple[MpoOperator, Dict[str, Any]]]:
        key = self.key(description)
        blob = self.cache.get(key)
        if blob is None:
            logger.info("target cache miss (%s)", key[:12])
            return None
        try:
            mpo = mpo_from_bytes(blob, source=f"cache:{key[:12]}")
        except ArtifactError as exc:
            logger.warning("dropping corrupt cache entry: %s", exc)
            self.cache.delete(key)
            return None
        logger.info("target cache hit (%s)", key[:12])
        return mpo, dict(self.cache.metadata.get(key, {}).get("info", {}))

    def store(self, description: Dict[str, Any], mpo: MpoOperator, info: Optional[Dict[str, Any]] = None) -> bool:
        return self.cache.set(self.key(description), mpo_to_bytes(mpo), info)
