# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Tests for the certify, auroc and k-ablation commands."""

from __future__ import annotations

import json
import math
from typing import TYPE_CHECKING

import pytest
from typer.testing import CliRunner

from dris.cli.main import app


if TYPE_CHECKING:
    from pathlib import Path

runner = CliRunner()

# Separated at K=1024 with a boundary block larger than alpha*N
PLANTED_ARGS = [
    "--N",
    "100",
    "--K",
    "1024",
    "--tau",
    "0.1",
    "--gamma",
    "0.01",
    "--tau-bdry",
    "0.45",
    "--alpha-trim",
    "0.2",
    "--epsilon",
    "0.2",
    "--alpha",
    "0.25",
    "--v-tail",
    "0.02",
]


class TestCertifyCommand:
    """Tests for certify."""

    def test_theta_star(self) -> None:
        """The JSON report carries the evaluated threshold."""
        result = runner.invoke(
            app, ["--json", "certify", "--N", "1000", "--K", "3", "--tau", "0.2", "--gamma", "0.05"]
        )
        assert result.exit_code == 0
        payload = json.loads(result.stdout)
        assert payload["theta_star"] == pytest.approx(1.368949, abs=5e-6)
        assert payload["separated"] is False
        assert any("vacuous" in note for note in payload["notes"])

    def test_separated(self, tmp_path: Path) -> None:
        """A conforming parameter set separates and the report is also written to --out."""
        out = tmp_path / "cert.json"
        result = runner.invoke(app, ["--json", "certify", *PLANTED_ARGS, "--boundary-covers-subset", "-o", str(out)])
        assert result.exit_code == 0
        payload = json.loads(out.read_text())
        assert payload["separated"] is True
        assert payload["subset_certified"] is True
        assert payload["contamination_cap"] == pytest.approx(0.2 * 0.2 / 0.25)
        assert payload["params"]["k"] == 1024

    def test_require_separation_fails(self) -> None:
        """--require-separation exits 1 when the condition does not hold."""
        result = runner.invoke(app, ["certify", "--N", "100", "--K", "4", "--tau-bdry", "0.45", "--require-separation"])
        assert result.exit_code == 1
        assert "separation fails" in result.output

    def test_rich_output(self) -> None:
        """The default output is a key/value table."""
        result = runner.invoke(app, ["certify", "--N", "2000", "--K", "4"])
        assert result.exit_code == 0
        assert "McDiarmid radius" in result.stdout

    def test_invalid_parameters(self) -> None:
        """Out-of-range inputs are usage errors."""
        result = runner.invoke(app, ["certify", "--N", "100", "--K", "4", "--delta", "1.5"])
        assert result.exit_code == 2

    def test_montecarlo(self) -> None:
        """Planted trials pass and echo the master seed."""
        result = runner.invoke(
            app,
            ["--json", "--seed", "3", "certify", *PLANTED_ARGS, "--montecarlo", "--trials", "40", "--n-boundary", "30"],
        )
        assert result.exit_code == 0, result.output
        payload = json.loads(result.stdout)
        assert payload["seed"] == 3
        assert payload["trials"] == 40
        assert payload["passed"] is True
        assert payload["max_bulk_in_subset"] == 0


class TestAurocCommand:
    """Tests for auroc."""

    def test_bound(self) -> None:
        """Bound value for a unit gap."""
        result = runner.invoke(app, ["--json", "auroc", "--delta0", "1", "--sigma", "0.3", "--nu", "0.2"])
        assert result.exit_code == 0
        assert json.loads(result.stdout)["bound"] == pytest.approx(0.896969, abs=1e-5)

    def test_marginal_only(self) -> None:
        """The per-example form is weaker."""
        result = runner.invoke(
            app, ["--json", "auroc", "--delta0", "1", "--sigma", "0.3", "--nu", "0.2", "--marginal-only"]
        )
        assert json.loads(result.stdout)["bound"] == pytest.approx(1 - math.exp(-1 / 0.68))

    def test_simulate(self) -> None:
        """Simulated pairs dominate the bound."""
        result = runner.invoke(
            app, ["--json", "auroc", "--delta0", "1", "--sigma", "0.3", "--nu", "0.2", "--simulate", "20000"]
        )
        payload = json.loads(result.stdout)
        assert payload["dominates"] is True
        assert payload["empirical"] >= payload["bound"]

    def test_undefined(self) -> None:
        """No gap and no spread is undefined."""
        result = runner.invoke(app, ["auroc", "--delta0", "0", "--sigma", "0", "--nu", "0"])
        assert result.exit_code == 2


class TestKAblationCommand:
    """Tests for k-ablation."""

    def test_rows(self) -> None:
        """One row per K with a widening gap."""
        result = runner.invoke(app, ["--json", "k-ablation", "--K", "2,16", "--N", "1000"])
        assert result.exit_code == 0
        rows = json.loads(result.stdout)["rows"]
        assert [row["K"] for row in rows] == [2, 16]
        assert rows[1]["empirical_gap"] > rows[0]["empirical_gap"]

    def test_bad_list(self) -> None:
        """Non-integer K values are rejected."""
        result = runner.invoke(app, ["k-ablation", "--K", "2,x"])
        assert result.exit_code == 2
