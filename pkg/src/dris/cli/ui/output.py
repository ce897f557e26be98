# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Console helpers shared by dris commands."""

from __future__ import annotations

from collections.abc import Iterator
from contextlib import contextmanager
import json
import math
from pathlib import Path
import sys
from typing import Any

import numpy as np
from rich.console import Console
from rich.markup import escape
from rich.table import Table
import typer

from dris.core.errors import DrisError


__all__ = ["console", "emit_json", "err_console", "handle_errors", "kv_table", "to_jsonable"]

console = Console()
err_console = Console(stderr=True)


def to_jsonable(value: Any) -> Any:  # noqa: ANN401
    """Convert numpy scalars/arrays, paths and non-finite floats for json.dumps."""
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None if math.isnan(value) else str(value)
    if isinstance(value, Path):
        return str(value)
    return value


def emit_json(payload: dict[str, Any]) -> None:
    """Write one JSON document to standard output."""
    sys.stdout.write(json.dumps(to_jsonable(payload), indent=2) + "\n")


def kv_table(title: str, rows: dict[str, Any]) -> Table:
    """Two-column key/value table."""
    table = Table(title=title, show_header=False)
    table.add_column("Key", style="cyan")
    table.add_column("Value", justify="right")
    for key, value in rows.items():
        shown = f"{value:.6g}" if isinstance(value, float) else str(value)
        table.add_row(key, shown)
    return table


@contextmanager
def handle_errors() -> Iterator[None]:
    """Turn DrisError into a diagnostic on standard error and the error's exit code."""
    try:
        yield
    except DrisError as e:
        err_console.print(f"[red]Error:[/red] {escape(str(e))}")
        raise typer.Exit(e.exit_code) from None
