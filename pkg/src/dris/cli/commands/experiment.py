# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Experiment commands for dris - run configured cells and one-axis sweeps."""

from __future__ import annotations

import math
from pathlib import Path
from typing import TYPE_CHECKING

from rich.markup import escape
from rich.table import Table
import typer

from dris.cli.ui.output import console, emit_json, handle_errors
from dris.core.errors import ParameterError
from dris.core.harness import SWEEP_AXES, run_experiment, sweep


if TYPE_CHECKING:
    from dris.cli.main import CLIContext


def register_experiment_commands(app: typer.Typer) -> None:
    """Register experiment commands with the CLI app."""
    app.command("run")(run)
    app.command("sweep")(sweep_command)


def _parse_values(raw: str) -> list[float]:
    try:
        values = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        msg = f"expected comma-separated numbers, got {raw!r}"
        raise ParameterError(msg) from None
    if not values:
        msg = "no sweep values given"
        raise ParameterError(msg)
    return values


def _fmt(value: float) -> str:
    return "-" if math.isnan(value) else f"{value:.4g}"


def run(
    ctx: typer.Context,
    *,
    output_dir: Path | None = typer.Option(None, "--output-dir", "-o", help="Output directory (default: config)"),
) -> None:
    """Run the configured experiment for every seed and append to metrics.csv."""
    cli_ctx: CLIContext = ctx.obj

    with handle_errors():
        cli_ctx.require_config_file()
        experiment = cli_ctx.experiment
        target_dir = output_dir if output_dir is not None else cli_ctx.config.output_dir
        results = run_experiment(experiment, target_dir)

    if cli_ctx.json_output:
        emit_json(
            {
                "method": str(experiment.method),
                "output_dir": str(target_dir),
                "runs": [
                    {
                        "seed": m.seed,
                        "test_accuracy": m.test_accuracy,
                        "frac_corrupt_in_subset": m.frac_corrupt_in_subset,
                        "empirical_gap": m.empirical_gap,
                        "mask_hash": m.mask_hash,
                    }
                    for m in results
                ],
            }
        )
        return
    if cli_ctx.quiet:
        return

    table = Table(title=f"{experiment.method} ({experiment.noise.kind}, rate {experiment.noise.rate:g})")
    table.add_column("Seed", style="cyan")
    table.add_column("Test acc %", justify="right")
    table.add_column("Frac corrupt", justify="right")
    table.add_column("Gap", justify="right")
    for m in results:
        table.add_row(str(m.seed), _fmt(m.test_accuracy), _fmt(m.frac_corrupt_in_subset), _fmt(m.empirical_gap))
    console.print(table)
    console.print(f"Metrics appended to {target_dir / 'metrics.csv'}")


def sweep_command(
    ctx: typer.Context,
    *,
    axis: str = typer.Option(..., "--axis", "-a", help=f"Axis to sweep: {', '.join(SWEEP_AXES)}"),
    values: str = typer.Option(..., "--values", help="Comma-separated axis values"),
    output_dir: Path | None = typer.Option(None, "--output-dir", "-o", help="Output directory (default: config)"),
) -> None:
    """Sweep one axis over every configured seed; failed cells are recorded and skipped."""
    cli_ctx: CLIContext = ctx.obj

    with handle_errors():
        cli_ctx.require_config_file()
        experiment = cli_ctx.experiment
        target_dir = output_dir if output_dir is not None else cli_ctx.config.output_dir
        frame = sweep(experiment, axis, _parse_values(values), target_dir)

    failed = int((frame["status"] != "ok").sum())
    if cli_ctx.json_output:
        emit_json({"axis": axis, "output_dir": str(target_dir), "cells": len(frame), "failed": failed})
    elif not cli_ctx.quiet:
        table = Table(title=f"Sweep over {axis}")
        table.add_column(axis, style="cyan")
        table.add_column("Seed", justify="right")
        table.add_column("Test acc %", justify="right")
        table.add_column("Frac corrupt", justify="right")
        table.add_column("Status")
        for row in frame.itertuples(index=False):
            status = "ok" if row.status == "ok" else f"[red]failed[/red] {escape(str(row.error))}"
            table.add_row(
                str(row.axis_value),
                str(row.seed),
                _fmt(row.test_accuracy),
                _fmt(row.frac_corrupt_in_subset),
                status,
            )
        console.print(table)
        console.print(f"Metrics appended to {target_dir / 'metrics.csv'}")
    if failed:
        raise typer.Exit(1)
