"""
Run journal for densecheck commands.

Records every CLI invocation with a timestamp, outcome and metadata as one
JSON line per run.
"""

import json
import logging
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

logger = logging.getLogger(__name__)


class Command(Enum):
    """Commands that can be journaled."""

    GEN_SYNTH = "gen-synth"
    EVAL_IMAGES = "eval-images"
    EVAL_VIDEO = "eval-video"
    LOSS = "loss"
    GRADCHECK = "gradcheck"
    REPORT = "report"


class RunLog:
    """
    Records and queries command runs.

    Each record tracks:
    - Which command ran
    - When it ran
    - Whether it succeeded
    - Its outputs and counts as metadata
    """

    def __init__(self, log_file: Optional[Path] = None, in_memory: bool = False):
        """
        Initialize the run journal.

        Args:
            log_file: Path to the JSON-lines journal (optional)
            in_memory: If True, keep records in memory only
        """
        self.log_file = Path(log_file) if log_file is not None else None
        self.in_memory = in_memory
        self._records: List[Dict[str, Any]] = []

        if self.log_file and self.log_file.exists():
            self._load()

    def log(
        self,
        command: Command,
        success: bool = True,
        error: Optional[str] = None,
        **metadata: Any,
    ) -> Dict[str, Any]:
        """
        Record one run.

        Args:
            command: The command that ran
            success: Whether it completed and its validations passed
            error: Error message if it failed
            **metadata: Output paths, counts and other JSON-serializable details

        Returns:
            The stored record
        """
        record = {
            "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
            "command": command.value,
            "success": success,
            "error": error,
            "metadata": metadata or {},
        }
        self._records.append(record)

        if self.log_file and not self.in_memory:
            self._append(record)
        return record

    def get_logs(
        self, command: Optional[Command] = None, limit: Optional[int] = None
    ) -> List[Dict[str, Any]]:
        """
        Retrieve records, most recent first.

        Args:
            command: Only records of this command
            limit: Maximum number of records to return
        """
        records = self._records[::-1]
        if command is not None:
            records = [r for r in records if r["command"] == command.value]

        records.sort(key=lambda r: r["timestamp"], reverse=True)
        if limit is not None:
            records = records[:limit]
        return records

    def clear_logs(self) -> None:
        """Drop every record and delete the journal file."""
        self._records.clear()
        if self.log_file and self.log_file.exists():
            self.log_file.unlink()

    def _load(self) -> None:
        if self.log_file is None:
            return
        try:
            with open(self.log_file, "r") as f:
                self._records = [json.loads(line) for line in f if line.strip()]
        except (OSError, json.JSONDecodeError) as e:
            logger.warning("Ignoring unreadable run log %s: %s", self.log_file, e)
            self._records = []

    def _append(self, record: Dict[str, Any]) -> None:
        if self.log_file is None:
            return
        try:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
            with open(self.log_file, "a") as f:
                f.write(json.dumps(record, default=str) + "\n")
        except OSError as e:
            # Journal failures never fail the command
            logger.warning("Could not append to run log %s: %s", self.log_file, e)
