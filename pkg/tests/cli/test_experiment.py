# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Tests for the run and sweep commands."""

from __future__ import annotations

import json
from typing import TYPE_CHECKING

import pandas as pd
from typer.testing import CliRunner

from dris.cli.main import app


if TYPE_CHECKING:
    from pathlib import Path

runner = CliRunner()


class TestRunCommand:
    """Tests for run."""

    def test_run_json(self, config_file: Path, tmp_path: Path) -> None:
        """One entry per configured seed, all sharing the metrics file."""
        out = tmp_path / "out"
        result = runner.invoke(app, ["--config", str(config_file), "--json", "run", "-o", str(out)])
        assert result.exit_code == 0, result.output
        payload = json.loads(result.stdout)
        assert payload["method"] == "dris-static"
        assert [run["seed"] for run in payload["runs"]] == [0, 1]
        assert len(pd.read_csv(out / "metrics.csv")) == 2

    def test_seed_override(self, config_file: Path, tmp_path: Path) -> None:
        """--seed runs exactly one seed."""
        out = tmp_path / "out"
        result = runner.invoke(app, ["--config", str(config_file), "--seed", "9", "run", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert pd.read_csv(out / "metrics.csv")["seed"].tolist() == [9]
        assert (out / "seed_9" / "mask.hash").exists()

    def test_env_override(self, config_file: Path, tmp_path: Path, monkeypatch) -> None:
        """DRIS_EXPERIMENT__METHOD switches the method without editing the file."""
        monkeypatch.setenv("DRIS_EXPERIMENT__METHOD", "random")
        out = tmp_path / "out"
        result = runner.invoke(app, ["--config", str(config_file), "--json", "--seed", "0", "run", "-o", str(out)])
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout)["method"] == "random"


class TestSweepCommand:
    """Tests for sweep."""

    def test_sweep_alpha(self, config_file: Path, tmp_path: Path) -> None:
        """Every (value, seed) cell gets a row tagged with the axis."""
        out = tmp_path / "out"
        result = runner.invoke(
            app, ["--config", str(config_file), "--json", "sweep", "--axis", "alpha", "--values", "0.25,0.5", "-o", str(out)]
        )
        assert result.exit_code == 0, result.output
        assert json.loads(result.stdout) == {"axis": "alpha", "output_dir": str(out), "cells": 4, "failed": 0}
        frame = pd.read_csv(out / "metrics.csv")
        assert set(frame["axis"]) == {"alpha"}
        assert sorted(frame["alpha"].unique().tolist()) == [0.25, 0.5]

    def test_failed_cells_exit_one(self, config_file: Path, tmp_path: Path) -> None:
        """Failed cells are recorded, the rest still run, and the exit code reports the failure."""
        out = tmp_path / "out"
        result = runner.invoke(
            app, ["--config", str(config_file), "--json", "sweep", "--axis", "alpha", "--values", "0.5,0", "-o", str(out)]
        )
        assert result.exit_code == 1
        assert json.loads(result.stdout)["failed"] == 2
        frame = pd.read_csv(out / "metrics.csv")
        assert frame["status"].tolist() == ["ok", "ok", "failed", "failed"]

    def test_bad_values(self, config_file: Path, tmp_path: Path) -> None:
        """Non-numeric values are a usage error."""
        result = runner.invoke(
            app, ["--config", str(config_file), "sweep", "--axis", "alpha", "--values", "a,b", "-o", str(tmp_path)]
        )
        assert result.exit_code == 2

    def test_axis_not_for_method(self, config_file: Path, tmp_path: Path) -> None:
        """beta only applies to hybrid."""
        result = runner.invoke(
            app, ["--config", str(config_file), "sweep", "--axis", "beta", "--values", "0.5", "-o", str(tmp_path)]
        )
        assert result.exit_code == 2
        assert "hybrid" in result.output
