# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Tests for the dris entry point and global options."""

from __future__ import annotations

import json
from typing import TYPE_CHECKING

from typer.testing import CliRunner

from dris import __version__
from dris.cli.main import app


if TYPE_CHECKING:
    from pathlib import Path

    import pytest

runner = CliRunner()


class TestEntryPoint:
    """Tests for the top-level callback."""

    def test_version(self) -> None:
        """--version prints the package version."""
        result = runner.invoke(app, ["--version"])
        assert result.exit_code == 0
        assert f"dris {__version__}" in result.stdout

    def test_no_command_shows_help(self) -> None:
        """Running without a command lists the commands."""
        result = runner.invoke(app, [])
        assert result.exit_code == 0
        assert "train-proxies" in result.output

    def test_help_lists_commands(self) -> None:
        """Every pipeline stage is a command."""
        result = runner.invoke(app, ["--help"])
        assert result.exit_code == 0
        for command in ("generate", "corrupt", "score", "select", "train-target", "certify", "sweep", "report"):
            assert command in result.stdout

    def test_missing_explicit_config(self, tmp_path: Path) -> None:
        """An explicit --config that does not exist is a usage error."""
        result = runner.invoke(app, ["--config", str(tmp_path / "nope.toml"), "config", "path"])
        assert result.exit_code == 2

    def test_invalid_config(self, tmp_path: Path) -> None:
        """A config that fails validation stops before the command runs."""
        bad = tmp_path / "bad.toml"
        bad.write_text("schema_version = 1\n[experiment]\nalpha = 2.0\n")
        result = runner.invoke(app, ["--config", str(bad), "config", "show"])
        assert result.exit_code == 2
        assert "alpha" in result.output

    def test_seed_echoed(self, config_file: Path, tmp_path: Path) -> None:
        """--seed replaces the configured seed and is echoed back."""
        out = tmp_path / "data.npz"
        result = runner.invoke(app, ["--config", str(config_file), "--json", "--seed", "17", "generate", "-o", str(out)])
        assert result.exit_code == 0
        assert json.loads(result.stdout)["seed"] == 17

    def test_quiet_suppresses_tables(self, config_file: Path, tmp_path: Path) -> None:
        """--quiet leaves standard output empty on success."""
        out = tmp_path / "data.npz"
        result = runner.invoke(app, ["--config", str(config_file), "--quiet", "generate", "-o", str(out)])
        assert result.exit_code == 0
        assert result.stdout == ""
        assert out.exists()

    def test_run_requires_config_file(self, tmp_path: Path, monkeypatch: pytest.MonkeyPatch) -> None:
        """run refuses to fall back to built-in defaults."""
        monkeypatch.chdir(tmp_path)
        result = runner.invoke(app, ["run", "-o", str(tmp_path / "out")])
        assert result.exit_code == 2
        assert "config" in result.output.lower()
