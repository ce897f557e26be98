# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Tests for dris report command."""

from __future__ import annotations

import io
import json
from typing import TYPE_CHECKING

import pandas as pd
import pytest
from typer.testing import CliRunner

from dris.cli.main import app
from dris.core.harness import METRICS_COLUMNS


if TYPE_CHECKING:
    from pathlib import Path

runner = CliRunner()


@pytest.fixture
def metrics_file(tmp_path: Path) -> Path:
    """Three seeds of a baseline and of DR-IS."""
    rows = []
    for method, accuracies in (("random", [86.0, 86.0, 86.0]), ("dris-static", [85.5, 85.3, 85.2])):
        for seed, acc in enumerate(accuracies):
            rows.append(
                {
                    "schema_version": 1,
                    "method": method,
                    "noise": "uniform",
                    "noise_rate": 0.2,
                    "axis": "",
                    "axis_value": "",
                    "seed": seed,
                    "K": 4 if method == "dris-static" else 0,
                    "alpha": 0.5,
                    "test_accuracy": acc,
                    "frac_corrupt_in_subset": 0.05 if method == "dris-static" else 0.2,
                    "empirical_gap": 0.02 if method == "dris-static" else float("nan"),
                    "per_proxy_corr_train_acc": "",
                    "mask_hash": f"h{seed}",
                    "status": "ok",
                    "error": "",
                    "wall_seconds": 1.0,
                }
            )
    path = tmp_path / "metrics.csv"
    pd.DataFrame(rows, columns=list(METRICS_COLUMNS)).to_csv(path, index=False)
    return path


class TestReportCommand:
    """Tests for the report command."""

    def test_report_help(self) -> None:
        """Report command has help text."""
        result = runner.invoke(app, ["report", "--help"])
        assert result.exit_code == 0
        assert "baseline" in result.stdout.lower()

    def test_report_rich(self, metrics_file: Path) -> None:
        """The default output is a results table."""
        result = runner.invoke(app, ["report", str(metrics_file)])
        assert result.exit_code == 0
        assert "DR-IS results" in result.stdout

    def test_report_json(self, metrics_file: Path) -> None:
        """JSON cells carry mean, std and the std convention."""
        result = runner.invoke(app, ["report", str(metrics_file), "--format", "json"])
        assert result.exit_code == 0
        payload = json.loads(result.stdout)
        assert "n-1" in payload["note"]
        cells = {cell["method"]: cell for cell in payload["cells"]}
        assert cells["random"]["acc_std"] == 0.0
        assert cells["dris-static"]["acc_mean"] == pytest.approx(85.333333, abs=1e-5)
        assert cells["dris-static"]["seeds"] == 3

    def test_global_json_flag(self, metrics_file: Path) -> None:
        """--json implies the JSON format."""
        result = runner.invoke(app, ["--json", "report", str(metrics_file)])
        assert result.exit_code == 0
        assert "cells" in json.loads(result.stdout)

    def test_report_baseline(self, metrics_file: Path) -> None:
        """Paired t against the baseline on shared seeds."""
        result = runner.invoke(app, ["report", str(metrics_file), "--format", "json", "--baseline", "random"])
        cells = {cell["method"]: cell for cell in json.loads(result.stdout)["cells"]}
        assert cells["dris-static"]["t"] == pytest.approx(-7.559, abs=1e-2)
        assert cells["random"]["t"] is None

    def test_report_csv(self, metrics_file: Path) -> None:
        """CSV output parses back into one row per cell."""
        result = runner.invoke(app, ["report", str(metrics_file), "--format", "csv"])
        assert result.exit_code == 0
        frame = pd.read_csv(io.StringIO(result.stdout))
        assert sorted(frame["method"]) == ["dris-static", "random"]
        assert "acc_std" in frame.columns

    def test_report_markdown_to_file(self, metrics_file: Path, tmp_path: Path) -> None:
        """--output writes the markdown table with the std note."""
        out = tmp_path / "reports" / "table.md"
        result = runner.invoke(app, ["report", str(metrics_file), "--format", "markdown", "--output", str(out)])
        assert result.exit_code == 0
        content = out.read_text()
        assert content.startswith("<!-- std is the sample standard deviation")
        assert "| dris-static" in content

    def test_report_foreign_file(self, tmp_path: Path) -> None:
        """Files with other columns are rejected."""
        foreign = tmp_path / "other.csv"
        foreign.write_text("a,b\n1,2\n")
        result = runner.invoke(app, ["report", str(foreign)])
        assert result.exit_code == 2
