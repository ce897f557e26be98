# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Score and select commands for dris - per-example scores and the plans built from them."""

from __future__ import annotations

from enum import StrEnum
from pathlib import Path
from typing import TYPE_CHECKING

import typer

from dris.cli.ui.output import console, emit_json, handle_errors, kv_table
from dris.core.data import load_dataset
from dris.core.errors import ParameterError
from dris.core.harness import compute_scores, histogram_export, load_ensemble
from dris.core.models import Method, PlanMode, ScoreKind
from dris.core.sampler import (
    DEFAULT_XI,
    online_distribution,
    proportional_distribution,
    select_by_removal,
    select_random,
    select_top_alpha,
    write_plan,
)
from dris.core.scores import read_scores, write_scores
from dris.utils.rng import derive_seed


if TYPE_CHECKING:
    from dris.cli.main import CLIContext


class SelectMode(StrEnum):
    """How select turns scores into a plan."""

    TOP_ALPHA = "top-alpha"
    REMOVAL = "removal"
    ONLINE = "online"
    RANDOM = "random"


def register_score_commands(app: typer.Typer) -> None:
    """Register score and select commands with the CLI app."""
    app.command("score")(score)
    app.command("select")(select)


def score(
    ctx: typer.Context,
    *,
    proxies: Path = typer.Option(..., "--proxies", "-p", help="Directory written by train-proxies"),
    data: Path = typer.Option(..., "--data", "-d", help="Training dataset (.npz) the proxies were trained on"),
    out: Path = typer.Option(..., "--out", "-o", help="Output scores (.csv)"),
    method: Method | None = typer.Option(None, "--method", "-m", help="Scoring method (default: config)"),
    beta: float | None = typer.Option(None, "--beta", help="Hybrid weight on gradient norm"),
    mix_k: float | None = typer.Option(None, "--k", help="Uniform-mix weight on the score"),
    histogram: Path | None = typer.Option(None, "--histogram", help="Also write the clean/corrupt histogram (.csv)"),
) -> None:
    """Score every training example from a saved proxy ensemble."""
    cli_ctx: CLIContext = ctx.obj
    experiment = cli_ctx.config.experiment
    method = method if method is not None else experiment.method

    with handle_errors():
        ds = load_dataset(data)
        ensemble = load_ensemble(proxies)
        scores = compute_scores(
            method,
            ensemble,
            ds.observed,
            beta=beta if beta is not None else experiment.beta,
            mix_k=mix_k if mix_k is not None else experiment.mix_k,
        )
        if scores is None:
            msg = f"method {method} does not score examples"
            raise ParameterError(msg)
        write_scores(scores, out)
        hist = None
        if histogram is not None:
            hist = histogram_export(scores, ds.corrupt_mask, experiment.histogram_bins, histogram)

    summary: dict[str, object] = {
        "method": str(method),
        "kind": scores.label,
        "n": len(scores),
        "min": float(scores.values.min()),
        "max": float(scores.values.max()),
        "path": str(out),
    }
    if hist is not None:
        summary["corrupt_below_clean_p10"] = hist.corrupt_below_clean_p10
        summary["corrupt_below_clean_median"] = hist.corrupt_below_clean_median
    if cli_ctx.json_output:
        emit_json(summary)
    elif not cli_ctx.quiet:
        console.print(kv_table("Scores", summary))


def select(
    ctx: typer.Context,
    *,
    out: Path = typer.Option(..., "--out", "-o", help="Output plan (.json)"),
    scores_path: Path | None = typer.Option(None, "--scores", "-s", help="Scores (.csv) written by score"),
    mode: SelectMode = typer.Option(SelectMode.TOP_ALPHA, "--mode", help="top-alpha, removal, online or random"),
    alpha: float | None = typer.Option(None, "--alpha", help="Keep fraction in (0, 1] (default: config)"),
    xi: float = typer.Option(DEFAULT_XI, "--xi", help="Smoothing constant for online plans"),
    n: int | None = typer.Option(None, "--n", help="Dataset size for random subsets without scores"),
) -> None:
    """Build a static subset or an online sampling distribution."""
    cli_ctx: CLIContext = ctx.obj
    alpha = alpha if alpha is not None else cli_ctx.config.experiment.alpha

    with handle_errors():
        scores = read_scores(scores_path) if scores_path is not None else None
        if mode is SelectMode.RANDOM:
            size = n if n is not None else (len(scores) if scores is not None else None)
            if size is None:
                msg = "random selection needs --scores or --n"
                raise ParameterError(msg)
            seed = cli_ctx.seed
            plan = select_random(size, alpha, derive_seed(seed, "random-subset"))
        elif scores is None:
            msg = f"mode {mode} needs --scores"
            raise ParameterError(msg)
        elif mode is SelectMode.TOP_ALPHA:
            plan = select_top_alpha(scores, alpha)
        elif mode is SelectMode.REMOVAL:
            plan = select_by_removal(scores, alpha)
        elif scores.kind is ScoreKind.UNIFORM_MIX:
            plan = proportional_distribution(scores)
        else:
            plan = online_distribution(scores, xi)
        write_plan(plan, out)

    summary: dict[str, object] = {"mode": str(mode), "n": plan.n, "score": plan.score_label, "path": str(out)}
    if plan.mode is PlanMode.STATIC:
        summary["kept"] = plan.size
        summary["alpha"] = alpha
    else:
        summary["xi"] = plan.xi
    if mode is SelectMode.RANDOM:
        summary["seed"] = seed
    if cli_ctx.json_output:
        emit_json(summary)
    elif not cli_ctx.quiet:
        console.print(kv_table("Sampling plan", summary))
