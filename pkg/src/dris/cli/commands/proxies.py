# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Proxy command for dris - train the proxy ensemble and record rank snapshots."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import typer

from dris.cli.ui.output import console, emit_json, handle_errors, kv_table
from dris.core.data import load_dataset
from dris.core.harness import save_ensemble, train_proxy_ensemble
from dris.core.scores import write_rank_matrix
from dris.utils.rng import derive_seed


if TYPE_CHECKING:
    from dris.cli.main import CLIContext

RANKS_FILE = "ranks.csv"


def register_proxy_commands(app: typer.Typer) -> None:
    """Register proxy commands with the CLI app."""
    app.command("train-proxies")(train_proxies)


def train_proxies(
    ctx: typer.Context,
    *,
    data: Path = typer.Option(..., "--data", "-d", help="Training dataset (.npz)"),
    out: Path = typer.Option(..., "--out", "-o", help="Output directory for checkpoints and ranks"),
    k: int | None = typer.Option(None, "--K", help="Number of proxies (default: config)"),
    epochs: int | None = typer.Option(None, "--epochs", help="Proxy epochs (default: config)"),
    snapshot_epoch: int | None = typer.Option(None, "--snapshot-epoch", help="Epoch whose losses are ranked"),
) -> None:
    """Train K proxies on the observed labels and write their loss ranks."""
    cli_ctx: CLIContext = ctx.obj
    seed = cli_ctx.seed
    experiment = cli_ctx.config.experiment

    with handle_errors():
        observed = load_dataset(data).observed
        spec = experiment.proxy_model.to_spec(observed.d, observed.num_classes)
        cfg = experiment.proxy_train.to_train_config(derive_seed(seed, "proxy"), epochs=epochs)
        snapshot = snapshot_epoch
        if snapshot is None and epochs is None:
            snapshot = experiment.resolved_snapshot_epoch
        ensemble = train_proxy_ensemble(
            observed,
            spec,
            cfg,
            k if k is not None else experiment.proxies,
            snapshot_epoch=snapshot,
            workers=experiment.workers,
        )
        save_ensemble(ensemble, out)
        write_rank_matrix(ensemble.rank_matrix, out / RANKS_FILE)

    summary = {
        "seed": seed,
        "K": ensemble.k,
        "epochs": cfg.epochs,
        "snapshot_epoch": ensemble.snapshot_epoch,
        "directory": str(out),
    }
    if cli_ctx.json_output:
        emit_json(summary)
    elif not cli_ctx.quiet:
        console.print(kv_table("Proxy ensemble", summary))
