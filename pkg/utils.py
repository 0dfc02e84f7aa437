# utils.py: logging setup, safe file IO and small parsing helpers

import hashlib
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence


# ==========================
# Logging
# ==========================
LOG_FORMAT = "[%(levelname)s] %(message)s"


def configure_logging(level: int = logging.INFO, stream=None) -> logging.Logger:
    """Route every module logger to one stream with [INFO]/[WARN]/[ERROR] tags."""
    logging.addLevelName(logging.WARNING, "WARN")
    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, "_qcompile", False):
            root.removeHandler(handler)
    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(logging.Formatter(LOG_FORMAT))
    handler._qcompile = True
    root.addHandler(handler)
    root.setLevel(level)
    # opt_einsum path searches are chatty at DEBUG
    logging.getLogger("opt_einsum").setLevel(max(level, logging.INFO))
    return root


def configure_utf8_stdio() -> None:
    """Force UTF-8 on stdout/stderr."""
    for stream_name in ("stdout", "stderr"):
        stream = getattr(sys, stream_name, None)
        if stream is None:
            continue
        try:
            stream.reconfigure(encoding="utf-8", errors="replace")
        except AttributeError:
            if hasattr(stream, "buffer"):
                try:
                    setattr(sys, stream_name, io.TextIOWrapper(stream.buffer, encoding="utf-8", errors="replace"))
                except Exception:
                    pass


# ==========================
# Files
# ==========================
def safe_read_text(path, encoding="utf-8") -> Optional[str]:
    """Read a text file, or None when it cannot be read."""
    try:
        with open(path, "r", encoding=encoding) as f:
            return f.read()
    except OSError:
        return None


def safe_write_text(path: Path, content: str, encoding: str = "utf-8") -> bool:
    """Write a text file, creating parent directories."""
    try:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding=encoding, newline="\n") as f:
            f.write(content if content is not None else "")
        return True
    except OSError:
        return False


def safe_parse_json(text: Optional[str]) -> Any:
    """Parse JSON, or None when the text is not JSON."""
    if text is None:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return None


def resolve_relative(path: str, base_dir: Path) -> Path:
    p = Path(os.path.expanduser(path))
    return p if p.is_absolute() else (base_dir / p).resolve()


# ==========================
# Parsing
# ==========================
def parse_int_list(s: Optional[str]) -> Optional[List[int]]:
    """'3,5;9 17' -> [3, 5, 9, 17]."""
    if s is None:
        return None
    tokens = [t for t in str(s).replace(";", ",").replace(" ", ",").split(",") if t.strip()]
    return [int(t) for t in tokens]


def parse_float_list(s: Optional[str]) -> Optional[List[float]]:
    if s is None:
        return None
    tokens = [t for t in str(s).replace(";", ",").replace(" ", ",").split(",") if t.strip()]
    return [float(t) for t in tokens]


def parse_bool(s: Any) -> bool:
    if isinstance(s, bool):
        return s
    value = str(s).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def stable_hash(data: Dict[str, Any]) -> str:
    """Hex digest of a JSON-serializable mapping, independent of key order."""
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


def format_cost(value: Optional[float]) -> str:
    if value is None:
        return "-"
    return f"{value:.6e}"


def format_list(values: Sequence[Any]) -> str:
    return ", ".join(str(v) for v in values)
