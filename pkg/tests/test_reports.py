"""Unit tests for the reports module."""

import json

import pytest

from densecheck.errors import ConfigError
from densecheck.reports import (
    format_cell,
    format_table,
    merge_summaries,
    render_csv,
    write_csv,
    write_summary,
)


class TestFormatCell:
    """Test cases for CSV cell rendering."""

    def test_none_is_empty(self):
        """Test None renders as an empty cell."""
        assert format_cell(None) == ""

    def test_booleans_lowercase(self):
        """Test booleans render as true/false."""
        assert format_cell(True) == "true"
        assert format_cell(False) == "false"

    def test_float_repr(self):
        """Test floats keep full precision."""
        assert format_cell(0.1) == "0.1"
        assert format_cell(1 / 3) == repr(1 / 3)

    def test_int_and_str(self):
        """Test other values use str."""
        assert format_cell(7) == "7"
        assert format_cell("frame") == "frame"


class TestCsv:
    """Test cases for per-record CSV tables."""

    def test_render(self):
        """Test header order, missing fields and dropped extras."""
        records = [
            {"frame": 0, "rmse": 0.5, "absrel": None, "extra": 1},
            {"frame": 1, "rmse": 0.25, "degenerate": True},
        ]
        payload = render_csv(records, ("frame", "rmse", "absrel", "degenerate"))
        assert payload == (
            b"frame,rmse,absrel,degenerate\n" b"0,0.5,,\n" b"1,0.25,,true\n"
        )

    def test_header_only(self):
        """Test no records still writes the header."""
        assert render_csv([], ("a", "b")) == b"a,b\n"

    def test_write_csv_byte_stable(self, temp_dir):
        """Test writing the same records twice gives identical bytes."""
        records = [{"pair": 0, "opw": 0.125}]
        a = write_csv(temp_dir / "a.csv", records, ("pair", "opw")).read_bytes()
        b = write_csv(temp_dir / "b.csv", records, ("pair", "opw")).read_bytes()
        assert a == b == b"pair,opw\n0,0.125\n"


class TestSummaries:
    """Test cases for JSON summaries and merged tables."""

    def _summary(self, temp_dir, name, aggregate, command="eval-images"):
        return write_summary(temp_dir / name, {"command": command, "aggregate": aggregate})

    def test_write_summary_sorted(self, temp_dir):
        """Test summaries are written with sorted keys."""
        path = write_summary(temp_dir / "s.json", {"b": 1, "a": 2})
        assert path.read_text() == '{\n  "a": 2,\n  "b": 1\n}\n'

    def test_merge_flattens_nested(self, temp_dir):
        """Test nested aggregate tables become dotted columns."""
        path = self._summary(
            temp_dir, "run.json", {"depth": {"rmse": 0.5}, "normal": {"mean_deg": 3.0}}
        )
        table = merge_summaries([path])
        assert table["columns"] == ["source", "command", "depth.rmse", "normal.mean_deg"]
        assert table["rows"] == [
            {
                "source": "run",
                "command": "eval-images",
                "depth.rmse": 0.5,
                "normal.mean_deg": 3.0,
            }
        ]

    def test_merge_union_of_columns(self, temp_dir):
        """Test columns are the sorted union across summaries."""
        a = self._summary(temp_dir, "a.json", {"opw": 0.1}, command="eval-video")
        b = self._summary(temp_dir, "b.json", {"depth": {"rmse": 0.2}})
        table = merge_summaries([a, b])
        assert table["columns"] == ["source", "command", "depth.rmse", "opw"]
        assert [r["source"] for r in table["rows"]] == ["a", "b"]

    def test_merge_labels(self, temp_dir):
        """Test explicit labels replace file stems."""
        a = self._summary(temp_dir, "a.json", {"opw": 0.1})
        table = merge_summaries([a], ["baseline"])
        assert table["rows"][0]["source"] == "baseline"

    def test_merge_label_count_mismatch(self, temp_dir):
        """Test a wrong number of labels is rejected."""
        a = self._summary(temp_dir, "a.json", {"opw": 0.1})
        with pytest.raises(ConfigError, match="labels"):
            merge_summaries([a], ["x", "y"])

    def test_merge_missing_aggregate(self, temp_dir):
        """Test a summary without an aggregate table is rejected."""
        path = temp_dir / "bad.json"
        path.write_text(json.dumps({"command": "loss"}))
        with pytest.raises(ConfigError, match="aggregate"):
            merge_summaries([path])

    def test_merge_skips_lists(self, temp_dir):
        """Test list-valued aggregate fields are left out of the table."""
        path = self._summary(temp_dir, "a.json", {"opw": 0.1, "per_pair": [1, 2]})
        assert "per_pair" not in merge_summaries([path])["columns"]

    def test_format_table(self):
        """Test the plain-text rendering pads columns."""
        table = {
            "columns": ["source", "opw"],
            "rows": [{"source": "a", "opw": 0.5}, {"source": "long", "opw": None}],
        }
        assert format_table(table) == "source  opw\na       0.5\nlong"
