# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Logging setup for the dris CLI."""

from __future__ import annotations

import logging

from rich.console import Console
from rich.logging import RichHandler


__all__ = ["configure_logging"]


def configure_logging(*, verbose: bool = False, quiet: bool = False) -> None:
    """Route ``dris.*`` loggers to a rich handler on standard error.

    Args:
        verbose: Show INFO records (progress, master seeds).
        quiet: Show only ERROR records.
    """
    level = logging.WARNING
    if verbose:
        level = logging.INFO
    if quiet:
        level = logging.ERROR

    handler = RichHandler(console=Console(stderr=True), show_path=False, rich_tracebacks=True)
    handler.setFormatter(logging.Formatter("%(message)s"))

    root = logging.getLogger("dris")
    root.handlers.clear()
    root.addHandler(handler)
    root.setLevel(level)
    root.propagate = False
