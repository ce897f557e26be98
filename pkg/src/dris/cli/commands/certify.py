# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Certify commands for dris - evaluate and Monte-Carlo check the separation bounds."""

from __future__ import annotations

import json
from pathlib import Path
from typing import TYPE_CHECKING, Any

from rich.markup import escape
from rich.table import Table
import typer

from dris.cli.ui.output import console, emit_json, handle_errors, kv_table, to_jsonable
from dris.core.certify import (
    TheoremParams,
    aum_auroc_bound,
    planted_rank_montecarlo,
    separation_and_contamination,
    simulate_aum_auroc,
)
from dris.core.errors import CertificateFailure, ParameterError
from dris.core.harness import planted_k_ablation


if TYPE_CHECKING:
    from dris.cli.main import CLIContext


def register_certify_commands(app: typer.Typer) -> None:
    """Register certificate commands with the CLI app."""
    app.command("certify")(certify)
    app.command("auroc")(auroc)
    app.command("k-ablation")(k_ablation)


def _parse_ints(raw: str) -> list[int]:
    try:
        return [int(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        msg = f"expected comma-separated integers, got {raw!r}"
        raise ParameterError(msg) from None


def certify(
    ctx: typer.Context,
    *,
    n: int = typer.Option(..., "--N", help="Number of examples"),
    k: int = typer.Option(..., "--K", help="Number of proxies"),
    delta: float = typer.Option(0.05, "--delta", help="Failure probability"),
    tau: float = typer.Option(0.0, "--tau", help="Bulk-corrupted rank concentration width"),
    gamma: float = typer.Option(0.0, "--gamma", help="Bulk-corrupted escape probability"),
    tau_bdry: float = typer.Option(0.0, "--tau-bdry", help="Boundary-clean rank spread"),
    alpha_trim: float = typer.Option(0.0, "--alpha-trim", help="Escaping-tail fraction of the corrupted set"),
    epsilon: float = typer.Option(0.0, "--epsilon", help="Corruption rate"),
    alpha: float = typer.Option(1.0, "--alpha", help="Keep fraction"),
    v_tail: float = typer.Option(0.0, "--v-tail", help="Mean tail sample variance"),
    boundary_covers_subset: bool = typer.Option(
        False, "--boundary-covers-subset", help="Assert the boundary-clean set has at least alpha*N members"
    ),
    montecarlo: bool = typer.Option(False, "--montecarlo", help="Verify on planted rank matrices"),
    trials: int = typer.Option(1000, "--trials", help="Monte-Carlo trials"),
    n_boundary: int | None = typer.Option(None, "--n-boundary", help="Planted boundary size (default alpha*N)"),
    require_separation: bool = typer.Option(
        False, "--require-separation", help="Exit 1 unless the separation condition holds"
    ),
    out: Path | None = typer.Option(None, "--out", "-o", help="Write the report as JSON"),
) -> None:
    """Evaluate the separation certificate and the tail-contamination cap."""
    cli_ctx: CLIContext = ctx.obj

    with handle_errors():
        params = TheoremParams(
            n=n,
            k=k,
            delta=delta,
            tau=tau,
            gamma=gamma,
            tau_bdry=tau_bdry,
            alpha_trim=alpha_trim,
            epsilon=epsilon,
            alpha=alpha,
            v_tail=v_tail,
        )
        payload: dict[str, Any]
        if montecarlo:
            seed = cli_ctx.seed
            summary = planted_rank_montecarlo(
                params, trials, seed, n_boundary=n_boundary, workers=cli_ctx.config.experiment.workers
            )
            report = summary.report
            payload = {"seed": seed, **summary.to_dict()}
        else:
            report = separation_and_contamination(params, boundary_covers_subset=boundary_covers_subset)
            payload = report.to_dict()

        if out is not None:
            out.parent.mkdir(parents=True, exist_ok=True)
            out.write_text(json.dumps(to_jsonable(payload), indent=2))
        if cli_ctx.json_output:
            emit_json(payload)
        elif not cli_ctx.quiet:
            _print_report(payload, report.notes)

        if require_separation and not report.separated:
            radius = report.mcdiarmid_radius
            msg = f"separation fails: delta' = {report.delta_prime:.6g} <= 2 * radius = {2 * radius:.6g}"
            raise CertificateFailure(msg)
        if montecarlo and not summary.passed:
            msg = f"Monte-Carlo check failed: joint violation rate {summary.joint_violation_rate:.4g}"
            raise CertificateFailure(msg)


def _print_report(payload: dict[str, Any], notes: list[str]) -> None:
    report = payload.get("report", payload)
    rows = {
        "McDiarmid radius": report["mcdiarmid_radius"],
        "theta*": report["theta_star"],
        "boundary lower bound": report["bdry_lower"],
        "delta'": report["delta_prime"],
        "separated": report["separated"],
        "subset certified": report["subset_certified"],
        "contamination cap": report["contamination_cap"],
    }
    if "trials" in payload:
        rows.update(
            {
                "trials": payload["trials"],
                "joint violation rate": payload["joint_violation_rate"],
                "violation allowance": payload["violation_allowance"],
                "max bulk in subset": payload["max_bulk_in_subset"],
                "max tail fraction": payload["max_tail_fraction"],
                "passed": payload["passed"],
            }
        )
    console.print(kv_table("Separation certificate", rows))
    for note in notes:
        console.print(f"  [yellow]note:[/yellow] {escape(note)}")


def auroc(
    ctx: typer.Context,
    *,
    delta0: float = typer.Option(..., "--delta0", help="Population gap between clean and corrupted AUM"),
    sigma: float = typer.Option(..., "--sigma", help="Per-group AUM spread"),
    nu: float = typer.Option(..., "--nu", help="Trajectory noise of a pair difference"),
    marginal_only: bool = typer.Option(False, "--marginal-only", help="Use the per-example concentration form"),
    pairs: int = typer.Option(0, "--simulate", help="Also simulate this many Gaussian pairs"),
) -> None:
    """Lower bound on the AUROC of margin-averaged scores."""
    cli_ctx: CLIContext = ctx.obj

    with handle_errors():
        payload: dict[str, Any] = {"bound": aum_auroc_bound(delta0, sigma, nu, marginal_only=marginal_only)}
        if pairs > 0:
            seed = cli_ctx.seed
            sim = simulate_aum_auroc(delta0, sigma, nu, pairs, seed)
            payload.update(seed=seed, empirical=sim.empirical, std_error=sim.std_error, dominates=sim.dominates)

    if cli_ctx.json_output:
        emit_json(payload)
    elif not cli_ctx.quiet:
        console.print(kv_table("AUROC bound", payload))


def k_ablation(
    ctx: typer.Context,
    *,
    ks: str = typer.Option("2,4,8,16", "--K", help="Comma-separated ensemble sizes"),
    n: int = typer.Option(1000, "--N", help="Number of planted examples"),
    tau: float = typer.Option(0.1, "--tau", help="Bulk-corrupted rank concentration width"),
    gamma: float = typer.Option(0.01, "--gamma", help="Bulk-corrupted escape probability"),
    tau_bdry: float = typer.Option(0.45, "--tau-bdry", help="Boundary-clean rank spread"),
    epsilon: float = typer.Option(0.2, "--epsilon", help="Corruption rate"),
    alpha: float = typer.Option(0.25, "--alpha", help="Keep fraction (sets the default boundary size)"),
    n_boundary: int | None = typer.Option(None, "--n-boundary", help="Boundary size"),
) -> None:
    """Empirical gap and bimodality of rank variance as K grows, on planted ranks."""
    cli_ctx: CLIContext = ctx.obj

    with handle_errors():
        sizes = _parse_ints(ks)
        seed = cli_ctx.seed
        params = TheoremParams(
            n=n,
            k=max(sizes, default=2),
            delta=0.05,
            tau=tau,
            gamma=gamma,
            tau_bdry=tau_bdry,
            epsilon=epsilon,
            alpha=alpha,
        )
        frame = planted_k_ablation(params, sizes, seed, n_boundary=n_boundary)

    if cli_ctx.json_output:
        emit_json({"seed": seed, "rows": frame.to_dict(orient="records")})
        return
    table = Table(title=f"K ablation (seed {seed})")
    for column in frame.columns:
        table.add_column(str(column), justify="right")
    for record in frame.itertuples(index=False):
        table.add_row(*(f"{v:.4g}" if isinstance(v, float) else str(v) for v in record))
    console.print(table)
