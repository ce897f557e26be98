# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Exception hierarchy for dris.

Each class carries the CLI exit code it maps to: usage-type problems
(bad parameters, unreadable files, config errors) exit 2, failed assertions
and certificates exit 1.
"""

from __future__ import annotations


__all__ = [
    "CertificateFailure",
    "ConfigError",
    "DegenerateDistributionError",
    "DivergenceError",
    "DrisError",
    "IngestionError",
    "ParameterError",
    "SchemaError",
    "UndefinedStatisticError",
]

EXIT_FAILURE = 1
EXIT_USAGE = 2


class DrisError(Exception):
    """Base class for all dris errors."""

    exit_code = EXIT_FAILURE


class ParameterError(DrisError, ValueError):
    """An argument is outside its documented range."""

    exit_code = EXIT_USAGE


class IngestionError(DrisError):
    """An input file could not be parsed."""

    exit_code = EXIT_USAGE

    def __init__(self, message: str, *, row: int | None = None, offset: int | None = None) -> None:
        """Attach the failing row or byte offset to the message."""
        where = ""
        if row is not None:
            where = f" (row {row})"
        elif offset is not None:
            where = f" (byte offset {offset})"
        super().__init__(f"{message}{where}")
        self.row = row
        self.offset = offset


class SchemaError(IngestionError):
    """Parsed content violates the expected schema."""


class ConfigError(DrisError):
    """Configuration file is missing or invalid."""

    exit_code = EXIT_USAGE


class DivergenceError(DrisError):
    """Training diverged: a non-finite loss, or an objective that ran away."""

    def __init__(self, epoch: int, *, seed: int | None = None, reason: str = "non-finite loss") -> None:
        """Record where and how training diverged."""
        where = f"epoch {epoch}" if seed is None else f"epoch {epoch} (seed {seed})"
        super().__init__(f"{reason} at {where}")
        self.epoch = epoch
        self.seed = seed
        self.reason = reason


class DegenerateDistributionError(DrisError, ValueError):
    """A sampling distribution has no positive mass to normalize."""

    exit_code = EXIT_USAGE


class UndefinedStatisticError(DrisError, ValueError):
    """A statistic was requested over an empty selection."""

    exit_code = EXIT_USAGE


class CertificateFailure(DrisError):
    """A requested certificate or Monte-Carlo assertion did not hold."""
