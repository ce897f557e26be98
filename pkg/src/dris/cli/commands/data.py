# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Data commands for dris - generate the synthetic mixture and inject label noise."""

from __future__ import annotations

from pathlib import Path
from typing import TYPE_CHECKING

import typer

from dris.cli.ui.output import console, emit_json, handle_errors, kv_table
from dris.core.data import (
    export_mask,
    generate_synthetic,
    inject_targeted_noise,
    inject_uniform_noise,
    load_dataset,
    mask_digest,
    save_dataset,
)
from dris.core.learners import TrainedModel, train
from dris.core.models import NoiseKind
from dris.utils.rng import derive_seed


if TYPE_CHECKING:
    from dris.cli.main import CLIContext


def register_data_commands(app: typer.Typer) -> None:
    """Register data commands with the CLI app."""
    app.command("generate")(generate)
    app.command("corrupt")(corrupt)


def generate(
    ctx: typer.Context,
    *,
    out: Path = typer.Option(..., "--out", "-o", help="Output dataset (.npz)"),
    n: int | None = typer.Option(None, "--n", help="Number of examples (default: config)"),
    d: int | None = typer.Option(None, "--d", help="Dimension (default: config)"),
    rare_ratio: float | None = typer.Option(None, "--rare-ratio", help="Fraction in the rare cluster"),
    var_rare: float | None = typer.Option(None, "--var-rare", help="Rare-cluster variance"),
    var_common: float | None = typer.Option(None, "--var-common", help="Common-cluster variance"),
) -> None:
    """Draw the two-cluster synthetic mixture."""
    cli_ctx: CLIContext = ctx.obj
    seed = cli_ctx.seed

    with handle_errors():
        dataset_cfg = cli_ctx.config.experiment.dataset
        overrides = {
            "n": n,
            "d": d,
            "rare_ratio": rare_ratio,
            "var_rare": var_rare,
            "var_common": var_common,
        }
        dataset_cfg = dataset_cfg.model_copy(update={k: v for k, v in overrides.items() if v is not None})
        ds = generate_synthetic(dataset_cfg.synthetic_spec(derive_seed(seed, "dataset")))
        save_dataset(ds, out)

    summary = {"seed": seed, "path": str(out), "n": ds.n, "d": ds.d, "rare": int(ds.labels.sum())}
    if cli_ctx.json_output:
        emit_json(summary)
    elif not cli_ctx.quiet:
        console.print(kv_table("Synthetic dataset", summary))


def corrupt(
    ctx: typer.Context,
    *,
    data: Path = typer.Option(..., "--data", "-d", help="Clean dataset (.npz)"),
    out: Path = typer.Option(..., "--out", "-o", help="Corrupted dataset (.npz)"),
    kind: NoiseKind = typer.Option(NoiseKind.UNIFORM, "--kind", help="uniform or targeted"),
    rate: float = typer.Option(..., "--rate", help="Noise rate in [0, 1)"),
    attacker_path: Path | None = typer.Option(
        None, "--attacker", help="Attacker checkpoint for targeted noise (default: train one from proxy config)"
    ),
    mask_out: Path | None = typer.Option(None, "--mask-out", help="Also write the 0/1 corruption mask"),
) -> None:
    """Flip labels uniformly at random or by largest attacker gradient norm."""
    cli_ctx: CLIContext = ctx.obj
    seed = cli_ctx.seed
    experiment = cli_ctx.config.experiment

    with handle_errors():
        ds = load_dataset(data)
        noise_seed = derive_seed(seed, "noise")
        if kind is NoiseKind.UNIFORM:
            corrupted = inject_uniform_noise(ds, rate, noise_seed)
        elif kind is NoiseKind.TARGETED:
            if attacker_path is not None:
                attacker = TrainedModel.load(attacker_path)
            else:
                spec = experiment.proxy_model.to_spec(ds.d, ds.num_classes)
                attacker_cfg = experiment.proxy_train.to_train_config(derive_seed(seed, "attacker"))
                attacker = train(spec, attacker_cfg, ds.clean_view)
            corrupted = inject_targeted_noise(ds, rate, attacker, noise_seed)
        else:
            corrupted = ds
        save_dataset(corrupted, out)
        if mask_out is not None:
            export_mask(corrupted.corrupt_mask, mask_out)

    summary = {
        "seed": seed,
        "path": str(out),
        "kind": str(kind),
        "flipped": int(corrupted.corrupt_mask.sum()),
        "epsilon": corrupted.epsilon,
        "mask_hash": mask_digest(corrupted.corrupt_mask),
    }
    if cli_ctx.json_output:
        emit_json(summary)
    elif not cli_ctx.quiet:
        console.print(kv_table("Label noise", summary))
