# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Report command for dris - aggregate metrics.csv files into mean ± std tables."""

from __future__ import annotations

from enum import StrEnum
import json
import math
from pathlib import Path
from typing import TYPE_CHECKING

from rich.table import Table
import typer

from dris.cli.ui.output import console, handle_errors, to_jsonable
from dris.core.harness import read_metrics, summarize_metrics


if TYPE_CHECKING:
    import pandas as pd

    from dris.cli.main import CLIContext

STD_NOTE = "std is the sample standard deviation (n-1) over seeds; single-seed cells report 0"


class ReportFormat(StrEnum):
    """Output format of the report."""

    RICH = "rich"
    JSON = "json"
    CSV = "csv"
    MARKDOWN = "markdown"


def register_report_commands(app: typer.Typer) -> None:
    """Register report commands with the CLI app."""
    app.command("report")(report)


def report(
    ctx: typer.Context,
    paths: list[Path] = typer.Argument(..., help="metrics.csv files to aggregate"),
    *,
    baseline: str | None = typer.Option(None, "--baseline", "-b", help="Method to compare against (paired t)"),
    output_format: ReportFormat = typer.Option(
        ReportFormat.RICH, "--format", "-f", help="Output format: rich, json, csv, markdown"
    ),
    output: Path | None = typer.Option(None, "--output", "-o", help="Output file path"),
) -> None:
    """Summarize test accuracy and subset corruption per cell.

    Cells are (method, noise, noise rate, axis, axis value); only rows with
    status ok are aggregated.
    """
    cli_ctx: CLIContext = ctx.obj
    if cli_ctx.json_output:
        output_format = ReportFormat.JSON

    with handle_errors():
        summary = summarize_metrics(read_metrics(paths), baseline)

    if output_format is ReportFormat.RICH and output is None:
        _output_rich(summary, baseline)
        return

    if output_format is ReportFormat.JSON:
        content = json.dumps(to_jsonable({"note": STD_NOTE, "cells": summary.to_dict(orient="records")}), indent=2)
    elif output_format is ReportFormat.CSV:
        content = summary.to_csv(index=False)
    else:
        content = f"<!-- {STD_NOTE} -->\n\n" + summary.to_markdown(index=False, floatfmt=".4g") + "\n"

    if output:
        output.parent.mkdir(parents=True, exist_ok=True)
        output.write_text(content)
        console.print(f"Report written to {output}")
    else:
        typer.echo(content, nl=not content.endswith("\n"))


def _fmt_mean_std(mean: float, std: float, digits: int = 2) -> str:
    if math.isnan(mean):
        return "-"
    return f"{mean:.{digits}f} ± {std:.{digits}f}"


def _output_rich(summary: pd.DataFrame, baseline: str | None) -> None:
    """Output report with rich table."""
    table = Table(title="DR-IS results", caption=STD_NOTE)
    table.add_column("Method", style="cyan")
    table.add_column("Noise")
    table.add_column("Axis")
    table.add_column("Seeds", justify="right")
    table.add_column("Test acc %", justify="right")
    table.add_column("Frac corrupt", justify="right")
    table.add_column("Gap", justify="right")
    paired = "t" in summary.columns
    if paired:
        table.add_column(f"Δ vs {baseline}", justify="right")
        table.add_column("p", justify="right")

    for row in summary.to_dict(orient="records"):
        axis = f"{row['axis']}={row['axis_value']}" if row["axis"] else ""
        seeds = f"{row['seeds']}" + (" (single)" if row["single_seed"] else "")
        cells = [
            str(row["method"]),
            f"{row['noise']} {row['noise_rate']:g}",
            axis,
            seeds,
            _fmt_mean_std(row["acc_mean"], row["acc_std"]),
            _fmt_mean_std(row["frac_corrupt_mean"], row["frac_corrupt_std"], digits=4),
            "-" if math.isnan(row["gap_mean"]) else f"{row['gap_mean']:.4g}",
        ]
        if paired:
            delta = "-" if math.isnan(row["delta_mean"]) else f"{row['delta_mean']:+.2f}"
            cells += [delta, "-" if math.isnan(row["p"]) else f"{row['p']:.3g}"]
        table.add_row(*cells)
    console.print(table)
