"""
Configuration documents and artifact persistence for densecheck.

Reads JSON, YAML and TOML documents and writes every artifact atomically so that
an interrupted run never leaves a half-written file behind.
"""

import json
import logging
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, TypeVar, Union

import yaml

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

T = TypeVar("T")
R = TypeVar("R")


def atomic_write(path: PathLike, data: bytes) -> Path:
    """
    Write bytes to a file atomically.

    Uses atomic write pattern:
    1. Write to temporary file in the destination directory
    2. Atomically replace the target

    Args:
        path: Destination file
        data: Serialized payload

    Returns:
        The destination path

    Raises:
        IOError: If the file cannot be written
    """
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)

    temp_file = None
    try:
        # Same directory keeps the final replace on one filesystem
        with tempfile.NamedTemporaryFile(
            mode="wb", dir=target.parent, delete=False, suffix=".tmp"
        ) as f:
            temp_file = Path(f.name)
            f.write(data)
        temp_file.replace(target)
    except Exception as e:
        if temp_file and temp_file.exists():
            temp_file.unlink()
        raise IOError(f"Failed to write {target}: {e}")

    return target


def dump_json(data: Any) -> bytes:
    """Serialize to the canonical JSON layout used by every report and manifest."""
    return (json.dumps(data, indent=2, sort_keys=True) + "\n").encode("utf-8")


class DocumentStore:
    """
    Loads and saves structured documents by file suffix.

    Supported formats:
    - ``.json``
    - ``.yaml`` / ``.yml`` (PyYAML safe loader)
    - ``.toml`` (read only)
    """

    def __init__(self, filepath: PathLike):
        """
        Initialize the document store.

        Args:
            filepath: Path to the document
        """
        self.filepath = Path(filepath)

    def load(self) -> Dict[str, Any]:
        """
        Load the document.

        Returns:
            Mapping parsed from the document; empty dict for an empty file

        Raises:
            ConfigError: If the file is missing, unsupported or cannot be parsed
        """
        if not self.filepath.exists():
            raise ConfigError(f"Config file not found: {self.filepath}")

        suffix = self.filepath.suffix.lower()
        try:
            if suffix == ".json":
                data = json.loads(self.filepath.read_text() or "{}")
            elif suffix in (".yaml", ".yml"):
                with open(self.filepath, "r") as f:
                    data = yaml.safe_load(f) or {}
            elif suffix == ".toml":
                with open(self.filepath, "rb") as f:
                    data = tomllib.load(f)
            else:
                raise ConfigError(f"Unsupported config format '{suffix}': {self.filepath}")
        except ConfigError:
            raise
        except (json.JSONDecodeError, yaml.YAMLError, tomllib.TOMLDecodeError) as e:
            raise ConfigError(f"Failed to parse {self.filepath}: {e}")

        if not isinstance(data, dict):
            raise ConfigError(f"Config document must be a mapping: {self.filepath}")

        logger.debug("Loaded %d keys from %s", len(data), self.filepath)
        return data

    def save(self, data: Dict[str, Any]) -> None:
        """
        Save the document atomically.

        Args:
            data: Mapping to serialize

        Raises:
            ConfigError: If the suffix cannot be written
        """
        suffix = self.filepath.suffix.lower()
        if suffix == ".json":
            payload = dump_json(data)
        elif suffix in (".yaml", ".yml"):
            payload = yaml.safe_dump(data, default_flow_style=False, sort_keys=True).encode("utf-8")
        else:
            raise ConfigError(f"Cannot write config format '{suffix}': {self.filepath}")
        atomic_write(self.filepath, payload)

    def exists(self) -> bool:
        """Check if the document exists."""
        return self.filepath.exists()


def load_document(path: PathLike) -> Dict[str, Any]:
    """Load a JSON, YAML or TOML mapping."""
    return DocumentStore(path).load()


def parallel_map(
    fn: Callable[[T], R], items: Iterable[T], workers: Optional[int] = None
) -> List[R]:
    """
    Apply ``fn`` to every item, optionally in a bounded thread pool.

    Results come back in input order whatever the worker count.
    """
    items = list(items)
    if not workers or workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
