"""
Report emission for evaluation runs.

Per-record CSV tables and JSON summaries, written atomically and byte-stable:
columns come in a fixed order, floats are written with ``repr`` and JSON keys
are sorted.
"""

import csv
import io
import logging
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence

from .config import PathLike, atomic_write, dump_json, load_document
from .errors import ConfigError

logger = logging.getLogger(__name__)

DEPTH_COLUMNS = (
    "rmse",
    "absrel",
    "pixel_count",
    "absrel_count",
    "nonpositive_count",
    "scale",
    "shift",
    "degenerate",
)
NORMAL_COLUMNS = ("mean_deg", "median_deg", "normal_pixel_count")
TEMPORAL_COLUMNS = (
    "opw",
    "tc_rmse",
    "opw_normal",
    "tc_mean_deg",
    "tc_abs_deg",
    "pixel_count",
)


def format_cell(value: Any) -> str:
    """Render one CSV cell: '' for None, lowercase booleans, repr for floats."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_csv(records: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> bytes:
    """
    Serialize records as CSV with the given header.

    Missing fields become empty cells; extra fields are dropped.
    """
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for record in records:
        writer.writerow([format_cell(record.get(c)) for c in columns])
    return buffer.getvalue().encode("utf-8")


def write_csv(path: PathLike, records: Sequence[Mapping[str, Any]], columns: Sequence[str]) -> Path:
    """Write a per-record table atomically."""
    target = atomic_write(path, render_csv(records, columns))
    logger.info("Wrote %d rows to %s", len(records), target)
    return target


def write_summary(path: PathLike, summary: Mapping[str, Any]) -> Path:
    """Write a JSON summary atomically (sorted keys, 2-space indent)."""
    target = atomic_write(path, dump_json(dict(summary)))
    logger.info("Wrote summary %s", target)
    return target


def _flatten(data: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, name + "."))
        elif not isinstance(value, list):
            flat[name] = value
    return flat


def merge_summaries(
    paths: Sequence[PathLike], labels: Optional[Sequence[str]] = None
) -> Dict[str, Any]:
    """
    Merge JSON summaries into one table.

    Each summary's ``aggregate`` section (nested tables flattened to dotted
    names) becomes one row labelled by ``labels`` or the file stem. Columns
    are the sorted union of every row's fields.

    Returns:
        ``{"columns": [...], "rows": [{"source": ..., field: value}, ...]}``

    Raises:
        ConfigError: A file is unreadable or has no ``aggregate`` mapping
    """
    if labels is not None and len(labels) != len(paths):
        raise ConfigError(f"{len(paths)} summaries but {len(labels)} labels")

    rows: List[Dict[str, Any]] = []
    for i, path in enumerate(paths):
        summary = load_document(path)
        aggregate = summary.get("aggregate")
        if not isinstance(aggregate, Mapping):
            raise ConfigError(f"Summary has no 'aggregate' table: {path}")
        row: Dict[str, Any] = {"source": labels[i] if labels is not None else Path(path).stem}
        if "command" in summary:
            row["command"] = summary["command"]
        row.update(_flatten(aggregate))
        rows.append(row)

    fields = sorted({k for row in rows for k in row} - {"source", "command"})
    return {"columns": ["source", "command"] + fields, "rows": rows}


def format_table(table: Mapping[str, Any]) -> str:
    """Plain-text rendering of a merged table, one row per line."""
    columns = list(table["columns"])
    cells = [[format_cell(row.get(c)) for c in columns] for row in table["rows"]]
    widths = [max([len(c)] + [len(r[i]) for r in cells]) for i, c in enumerate(columns)]
    lines = ["  ".join(c.ljust(w) for c, w in zip(columns, widths)).rstrip()]
    for r in cells:
        lines.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    return "\n".join(lines)
