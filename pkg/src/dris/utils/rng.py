# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Named random streams derived from a master seed.

Every random draw in dris goes through a stream keyed by (master seed, labels),
so results do not depend on the order in which components ask for randomness.
"""

from __future__ import annotations

import hashlib
import math

import numpy as np


__all__ = ["derive_rng", "derive_seed", "floor_count"]

# Absorbs binary representation error in products like 0.29 * 100
_FLOOR_SLACK = 1e-9


def _label_key(label: str | int) -> int:
    """Map a stream label to a stable 32-bit integer."""
    if isinstance(label, int):
        return label & 0xFFFFFFFF
    digest = hashlib.blake2b(label.encode(), digest_size=4).digest()
    return int.from_bytes(digest, "big")


def _sequence(seed: int, labels: tuple[str | int, ...]) -> np.random.SeedSequence:
    if seed < 0:
        msg = f"seed must be nonnegative, got {seed}"
        raise ValueError(msg)
    return np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, *(_label_key(label) for label in labels)])


def derive_rng(seed: int, *labels: str | int) -> np.random.Generator:
    """Return the generator for the named stream ``labels`` under ``seed``.

    Args:
        seed: Master seed (64-bit nonnegative integer).
        *labels: Stream name parts, e.g. ``("proxy", 3)``.

    Returns:
        A fresh PCG64 generator; equal arguments give identical streams.
    """
    return np.random.default_rng(_sequence(seed, labels))


def derive_seed(seed: int, *labels: str | int) -> int:
    """Return a child master seed for the named stream."""
    return int(_sequence(seed, labels).generate_state(1, dtype=np.uint64)[0] >> 1)


def floor_count(fraction: float, n: int) -> int:
    """Return floor(fraction * n), robust to floating-point representation."""
    return int(math.floor(fraction * n + _FLOOR_SLACK))
