# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Main CLI entry point for dris."""

from __future__ import annotations

import logging
from pathlib import Path

from rich.markup import escape
from rich.traceback import install as rich_traceback
import typer

from dris.cli.commands import (
    register_certify_commands,
    register_config_commands,
    register_data_commands,
    register_experiment_commands,
    register_proxy_commands,
    register_report_commands,
    register_score_commands,
    register_target_commands,
)
from dris.cli.ui.output import console, err_console
from dris.core.config import DrisConfig, ExperimentConfig, get_config_path, load_config
from dris.core.errors import ConfigError, DrisError
from dris.utils.logging import configure_logging


rich_traceback(show_locals=False)

app = typer.Typer(
    name="dris",
    help="Disagreement-regularized importance sampling: proxies, scores, subsets and certificates.",
    add_completion=True,
    rich_markup_mode="rich",
    no_args_is_help=False,
)

logger = logging.getLogger("dris.cli")


class CLIContext:
    """Shared context for CLI commands."""

    def __init__(
        self,
        config: DrisConfig,
        config_path: Path,
        seed: int | None = None,
        *,
        json_output: bool = False,
        verbose: bool = False,
        quiet: bool = False,
    ) -> None:
        """Initialize CLI context with config and output settings."""
        self.config = config
        self.config_path = config_path
        self.seed_override = seed
        self.json_output = json_output
        self.verbose = verbose
        self.quiet = quiet

    @property
    def experiment(self) -> ExperimentConfig:
        """Experiment section, with ``--seed`` replacing the configured seed list."""
        experiment = self.config.experiment
        if self.seed_override is not None:
            experiment = experiment.model_copy(update={"seeds": [self.seed_override]})
        return experiment

    @property
    def seed(self) -> int:
        """Master seed for single-run commands (``--seed`` or the first configured seed)."""
        seed = self.seed_override if self.seed_override is not None else self.config.experiment.seeds[0]
        logger.info("master seed %d", seed)
        return seed

    def require_config_file(self) -> None:
        """Fail with a usage error when no config file was found."""
        if not self.config_path.exists():
            msg = f"no config file at {self.config_path}; pass --config or create ./dris.toml"
            raise ConfigError(msg)


@app.callback(invoke_without_command=True)
def main(
    ctx: typer.Context,
    *,
    config_path: Path | None = typer.Option(None, "--config", help="Path to config file"),
    json_output: bool = typer.Option(False, "--json", help="Output as JSON"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Log progress to stderr"),
    quiet: bool = typer.Option(False, "--quiet", "-q", help="Only log errors"),
    seed: int | None = typer.Option(None, "--seed", min=0, help="Master seed (overrides config seeds)"),
    version: bool = typer.Option(False, "--version", help="Show version"),
) -> None:
    """Disagreement-regularized importance sampling.

    Every randomized command derives all of its randomness from one master
    seed, echoed in its output.
    """
    if version:
        from dris import __version__

        console.print(f"dris {__version__}")
        raise typer.Exit

    configure_logging(verbose=verbose, quiet=quiet)

    try:
        config = load_config(config_path)
    except DrisError as e:
        err_console.print(f"[red]Config error:[/red] {escape(str(e))}")
        raise typer.Exit(e.exit_code) from None

    ctx.obj = CLIContext(
        config=config,
        config_path=get_config_path(config_path),
        seed=seed,
        json_output=json_output,
        verbose=verbose,
        quiet=quiet,
    )

    if ctx.invoked_subcommand is None:
        console.print(ctx.get_help())
        raise typer.Exit


register_data_commands(app)
register_proxy_commands(app)
register_score_commands(app)
register_target_commands(app)
register_certify_commands(app)
register_experiment_commands(app)
register_report_commands(app)
register_config_commands(app)


def run() -> None:
    """Entry point for the CLI."""
    app()


if __name__ == "__main__":
    run()
