from __future__ import annotations
import os
from pathlib import Path
from functools import lru_cache
from dotenv import load_dotenv, dotenv_values

from ..errors import ConfigurationError

CANDIDATES = [".env", "resources/.env"]  # search order, relative to cwd then the repo root


def _search_roots() -> list[Path]:
    repo_root = Path(__file__).resolve().parents[3]
    return [Path.cwd(), repo_root]


@lru_cache(maxsize=1)
def _load_env() -> dict:
    """Load .env from the first existing location."""
    for root in _search_roots():
        for rel in CANDIDATES:
            p = root / rel
            if p.is_file():
                load_dotenv(p, override=False)
                return {"path": str(p), "values": dotenv_values(p)}
    # No .env: plain process environment
    return {"path": None, "values": {}}


def get_env_variable_value(key: str, default: str | None = None, *, required: bool = False) -> str | None:
    """Gets a variable by reading .env (if it exists) and then os.environ."""
    data = _load_env()
    val = os.getenv(key)
    if val is None:
        val = data["values"].get(key)  # in case load_dotenv didn't populate os.environ
    if val is None:
        val = default
    if required and (val is None or str(val).strip() == ""):
        src = data["path"] or "<env>"
        raise ConfigurationError(f"Missing required env '{key}' (looked in {src})")
    return val


def get_env_int(key: str, default: int) -> int:
    raw = get_env_variable_value(key, str(default))
    try:
        return int(str(raw).strip())
    except ValueError as e:
        raise ConfigurationError(f"Env '{key}' must be an integer, got {raw!r}") from e


def get_env_float(key: str, default: float) -> float:
    raw = get_env_variable_value(key, str(default))
    try:
        return float(str(raw).strip())
    except ValueError as e:
        raise ConfigurationError(f"Env '{key}' must be a number, got {raw!r}") from e

