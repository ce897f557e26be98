# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Utility functions for dris."""

from .logging import configure_logging
from .rng import derive_rng, derive_seed, floor_count


__all__ = ["configure_logging", "derive_rng", "derive_seed", "floor_count"]
