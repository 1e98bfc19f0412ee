import json
import logging
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Optional, Union

from backend.config import Config

Number = Union[int, float, str, Fraction]

_FORMATTER = logging.Formatter("[%(asctime)s] [%(levelname)s] %(message)s")


# -----------------------------
# Logging
# -----------------------------
def get_logger(name: str) -> logging.Logger:
    """
    Logger with one stream handler in the shared "[time] [LEVEL] message" format.
    Safe to call repeatedly for the same name.
    """
    logger = logging.getLogger(name)
    if not getattr(logger, "_relay_configured", False):
        logger.setLevel(getattr(logging, Config.LOG_LEVEL, logging.INFO))
        handler = logging.StreamHandler()
        handler.setFormatter(_FORMATTER)
        logger.addHandler(handler)
        logger.propagate = False
        logger._relay_configured = True  # type: ignore[attr-defined]
    return logger


# -----------------------------
# Exact numbers
# -----------------------------
def parse_fraction(value: Number, field: str = "value") -> Fraction:
    """Accept ints, decimal strings and "a/b" strings. Floats go through their decimal repr."""
    if isinstance(value, bool):
        raise ValueError(f"{field} must be a number, got {value!r}")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError):
            pass
    raise ValueError(f"{field} must be a number or fraction string, got {value!r}")


def fraction_str(value: Optional[Fraction]) -> str:
    if value is None:
        return ""
    return str(value)


# -----------------------------
# JSON
# -----------------------------
def _json_default(obj: Any) -> Any:
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (bytes, bytearray)):
        return bytes(obj).hex()
    if isinstance(obj, Path):
        return str(obj)
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    if hasattr(obj, "item"):
        return obj.item()
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def dumps_canonical(data: Any) -> str:
    """Sorted keys, fixed separators: identical input gives identical text."""
    return json.dumps(data, sort_keys=True, separators=(",", ":"), default=_json_default)


def write_json(path: Path, data: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(data, sort_keys=True, indent=2, default=_json_default)
    path.write_text(text + "\n", encoding="utf-8")


def read_json(path: Path) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
