# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Config command for dris - inspect and validate configuration."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

from rich.markup import escape
from rich.panel import Panel
import typer

from dris.cli.ui.output import console, emit_json, err_console
from dris.core.config import get_config_path, validate_config


if TYPE_CHECKING:
    from dris.cli.main import CLIContext
    from dris.core.config import DrisConfig


def register_config_commands(app: typer.Typer) -> None:
    """Register config commands with the CLI app."""
    config_app = typer.Typer(name="config", help="Inspect dris configuration.")
    config_app.command("show")(show)
    config_app.command("path")(path)
    config_app.command("validate")(validate)
    app.add_typer(config_app)


def show(ctx: typer.Context) -> None:
    """Show the effective configuration (file, environment and defaults merged)."""
    cli_ctx: CLIContext = ctx.obj
    config: DrisConfig = cli_ctx.config

    if cli_ctx.json_output:
        emit_json(config.model_dump(mode="json"))
        return

    exp = config.experiment
    source = str(cli_ctx.config_path) if cli_ctx.config_path.exists() else "(defaults, no file)"
    if exp.dataset.source == "synthetic":
        dataset_line = f"  N / d: {exp.dataset.n} / {exp.dataset.d}"
    else:
        dataset_line = f"  Path: {escape(str(exp.dataset.path))}"
    lines = [
        f"[bold]Config file:[/bold] {escape(source)}",
        f"[bold]Output dir:[/bold] {config.output_dir}",
        "",
        "[bold]Dataset:[/bold]",
        f"  Source: {exp.dataset.source}",
        dataset_line,
        f"  Noise: {exp.noise.kind} at rate {exp.noise.rate:g}",
        "",
        "[bold]Method:[/bold]",
        f"  Method: {exp.method}",
        f"  Proxies (K): {exp.proxies} x {exp.proxy_model.kind}, {exp.proxy_train.epochs} epochs",
        f"  Target: {exp.target_model.kind}, {exp.target_train.epochs} epochs",
        f"  alpha / xi: {exp.alpha:g} / {exp.xi:g}",
        f"  Seeds: {', '.join(map(str, exp.seeds))}",
        f"  Workers: {exp.workers}",
    ]
    console.print(Panel("\n".join(lines), title="[bold]dris Configuration[/bold]"))


def path(ctx: typer.Context) -> None:
    """Show the config file path in use."""
    cli_ctx: CLIContext = ctx.obj
    console.print(str(cli_ctx.config_path))


def validate(
    ctx: typer.Context, *, file: Path | None = typer.Option(None, "--file", "-f", help="Config file to validate")
) -> None:
    """Validate configuration file syntax and semantics."""
    cli_ctx: CLIContext = ctx.obj
    config_path = file if file is not None else get_config_path(cli_ctx.config_path)

    errors = validate_config(config_path)

    if cli_ctx.json_output:
        emit_json({"valid": not errors, "path": str(config_path), "errors": errors})
        if errors:
            raise typer.Exit(2)
    elif errors:
        err_console.print(f"[red]Config validation failed:[/red] {escape(str(config_path))}\n")
        for error in errors:
            err_console.print(f"  [red]•[/red] {escape(error)}")
        raise typer.Exit(2)
    else:
        console.print(f"[green]ok:[/green] Config valid: {escape(str(config_path))}")
