import hashlib
import logging
from datetime import datetime, timezone
from importlib import metadata
from typing import Any, Iterable, Mapping

from prefect import get_run_logger
from prefect.exceptions import MissingContextError
from prefect.logging import get_logger as get_prefect_logger

PACKAGE_NAME = "hetnetcache"


def get_logger(name: str = PACKAGE_NAME) -> logging.Logger:
    """
    Run logger inside a prefect flow/task, plain prefect logger otherwise.
    Library code calls this on every use so messages land in the active run.
    """
    try:
        return get_run_logger()
    except MissingContextError:
        return get_prefect_logger(name)


def tool_version() -> str:
    try:
        return metadata.version(PACKAGE_NAME)
    except metadata.PackageNotFoundError:
        return "0+unknown"


def utc_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def format_value(value: Any) -> str:
    """Fixed formatting for data files: floats with 17 significant digits, enums by value."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return format(value, ".17g")
    if hasattr(value, "value") and not isinstance(value, (int, str)):
        return str(value.value)
    if value is None:
        return ""
    return str(value)


def compute_mapping_hash(items: Mapping[str, Any]) -> str:
    """SHA-256 over `key=value` lines in sorted key order, so field ordering never changes it."""
    hasher = hashlib.sha256()
    for key in sorted(items):
        hasher.update(f"{key}={items[key]!r}\n".encode("utf-8"))
    return hasher.hexdigest()


def chunk_ranges(n: int, chunk_size: int) -> Iterable[tuple]:
    """[start, stop) index ranges covering 0..n in order."""
    for start in range(0, n, chunk_size):
        yield start, min(n, start + chunk_size)
