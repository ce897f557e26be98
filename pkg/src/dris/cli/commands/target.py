# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Target command for dris - train the final model on a subset or sampling plan."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import typer

from dris.cli.ui.output import console, emit_json, handle_errors, kv_table
from dris.core.data import load_dataset
from dris.core.harness import subset_corruption, target_schedule
from dris.core.learners import accuracy, train
from dris.core.sampler import read_plan
from dris.utils.rng import derive_seed


if TYPE_CHECKING:
    from dris.cli.main import CLIContext


def register_target_commands(app: typer.Typer) -> None:
    """Register target training commands with the CLI app."""
    app.command("train-target")(train_target)


def train_target(
    ctx: typer.Context,
    *,
    data: Path = typer.Option(..., "--data", "-d", help="Training dataset (.npz)"),
    out: Path = typer.Option(..., "--out", "-o", help="Output checkpoint (.json)"),
    plan_path: Path | None = typer.Option(None, "--plan", help="Plan written by select (default: uniform SGD)"),
    epochs: int | None = typer.Option(None, "--epochs", help="Full-data epochs before step parity (default: config)"),
    test: Path | None = typer.Option(None, "--test", help="Clean test dataset (.npz) to evaluate on"),
) -> None:
    """Train the target model; static plans get step parity with full-data training."""
    cli_ctx: CLIContext = ctx.obj
    seed = cli_ctx.seed
    experiment = cli_ctx.config.experiment

    with handle_errors():
        ds = load_dataset(data)
        plan = read_plan(plan_path) if plan_path is not None else None
        target_seed = derive_seed(seed, "target")
        base_epochs = epochs if epochs is not None else experiment.target_train.epochs
        total_epochs, order = target_schedule(plan, ds.n, base_epochs, target_seed)
        spec = experiment.target_model.to_spec(ds.d, ds.num_classes)
        cfg = experiment.target_train.to_train_config(target_seed, epochs=total_epochs)
        model = train(spec, cfg, ds.observed, order=order)
        model.save(out)

        summary: dict[str, object] = {
            "seed": seed,
            "plan": "uniform-sgd" if plan is None else f"{plan.mode} ({plan.score_label})",
            "epochs": total_epochs,
            "train_accuracy": 100.0 * accuracy(model, ds.observed),
            "frac_corrupt_in_subset": subset_corruption(plan, ds.corrupt_mask),
            "path": str(out),
        }
        if test is not None:
            summary["test_accuracy"] = 100.0 * accuracy(model, load_dataset(test).clean_view)

    if cli_ctx.json_output:
        emit_json(summary)
    elif not cli_ctx.quiet:
        console.print(kv_table("Target model", summary))
