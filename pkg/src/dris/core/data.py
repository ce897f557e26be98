# Copyright (c) 2025 DR-IS contributors
# SPDX-License-Identifier: MIT

"""Datasets: synthetic generation, file ingestion and label-noise injection.

This module handles:
- generate_synthetic: the two-cluster heavy-tailed benchmark
- load_dense: CSV and IDX (image + label file pair) ingestion
- inject_uniform_noise / inject_targeted_noise: the two corruption protocols
- save_dataset / load_dataset / export_mask / read_mask: persistence
"""

from __future__ import annotations

from enum import StrEnum
import hashlib
import logging
from pathlib import Path
import struct
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from dris.utils.rng import derive_rng, floor_count

from .errors import IngestionError, ParameterError, SchemaError
from .models import LabeledDataset, SyntheticSpec


if TYPE_CHECKING:
    from .learners import TrainedModel

__all__ = [
    "DenseFormat",
    "export_mask",
    "generate_synthetic",
    "inject_targeted_noise",
    "inject_uniform_noise",
    "load_dataset",
    "load_dense",
    "mask_digest",
    "read_mask",
    "save_dataset",
    "train_test_split",
]

logger = logging.getLogger(__name__)

# IDX magic: two zero bytes, a type code, then the number of dimensions
IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
_IDX_HEADER_BYTES = 4
_IDX_DTYPES: dict[int, str] = {0x08: ">u1", 0x09: ">i1", 0x0B: ">i2", 0x0C: ">i4", 0x0D: ">f4", 0x0E: ">f8"}

# Label columns may be written as 1.0 by spreadsheet tools
_LABEL_TOL = 1e-9


class DenseFormat(StrEnum):
    """File formats accepted by load_dense."""

    CSV = "csv"
    IDX_PAIR = "idx-pair"


def generate_synthetic(spec: SyntheticSpec) -> LabeledDataset:
    """Draw the two-cluster mixture.

    The common cluster (label 0) is centred at the origin with per-coordinate
    variance ``var_common``; the rare cluster (label 1, ``floor(rare_ratio * n)``
    points) is centred ``center_distance`` along the first axis with variance
    ``var_rare``. Row order is shuffled.

    Args:
        spec: Mixture parameters and seed.

    Returns:
        A clean binary dataset.
    """
    rng = derive_rng(spec.seed, "generation")
    n_rare = floor_count(spec.rare_ratio, spec.n)
    n_common = spec.n - n_rare

    rare_center = np.zeros(spec.d)
    rare_center[0] = spec.center_distance
    common = rng.normal(0.0, np.sqrt(spec.var_common), size=(n_common, spec.d))
    rare = rare_center + rng.normal(0.0, np.sqrt(spec.var_rare), size=(n_rare, spec.d))

    features = np.vstack([common, rare])
    labels = np.concatenate([np.zeros(n_common, dtype=np.int64), np.ones(n_rare, dtype=np.int64)])
    order = rng.permutation(spec.n)
    return LabeledDataset.clean(features[order], labels[order], num_classes=2)


def load_dense(
    path: Path,
    fmt: DenseFormat | str = DenseFormat.CSV,
    *,
    labels_path: Path | None = None,
    header: bool = False,
    num_classes: int | None = None,
    scale: float = 1.0,
) -> LabeledDataset:
    """Load a dense labeled dataset from disk.

    Args:
        path: CSV file (last column is the integer label) or IDX image file.
        fmt: ``csv`` or ``idx-pair``.
        labels_path: IDX label file; required for ``idx-pair``.
        header: CSV has a header row.
        num_classes: Number of classes C; inferred as max label + 1 if None.
        scale: Multiplier applied to the features (e.g. 1/255 for pixels).

    Returns:
        A clean dataset with row-major features.

    Raises:
        IngestionError: If the file is empty or malformed.
        SchemaError: If a label is negative or >= num_classes.
    """
    path = Path(path)
    fmt = DenseFormat(fmt)
    if not path.exists():
        msg = f"file not found: {path}"
        raise IngestionError(msg)

    if fmt is DenseFormat.CSV:
        features, labels = _read_csv(path, header=header)
    else:
        if labels_path is None:
            msg = "idx-pair format requires a labels file"
            raise ParameterError(msg)
        features = _read_idx(path, expected_magic=IDX_IMAGE_MAGIC)
        features = features.reshape(features.shape[0], -1).astype(np.float64)
        labels = _read_idx(Path(labels_path), expected_magic=IDX_LABEL_MAGIC).astype(np.int64)
        if labels.shape[0] != features.shape[0]:
            msg = f"label file has {labels.shape[0]} items, image file has {features.shape[0]}"
            raise SchemaError(msg)

    classes = int(labels.max()) + 1 if num_classes is None else num_classes
    bad = np.flatnonzero((labels < 0) | (labels >= classes))
    if bad.size:
        msg = f"label {labels[bad[0]]} outside [0, {classes})"
        raise SchemaError(msg, row=int(bad[0]) + 1)

    logger.info("loaded %s: N=%d d=%d C=%d", path, features.shape[0], features.shape[1], classes)
    return LabeledDataset.clean(features * scale, labels, num_classes=classes)


def _read_csv(path: Path, *, header: bool) -> tuple[np.ndarray, np.ndarray]:
    """Parse a numeric CSV whose last column is the label."""
    try:
        frame = pd.read_csv(path, header=0 if header else None, dtype=str, skipinitialspace=True)
    except pd.errors.EmptyDataError:
        msg = f"empty file: {path}"
        raise IngestionError(msg) from None
    except pd.errors.ParserError as e:
        msg = f"malformed CSV {path}: {e}"
        raise IngestionError(msg) from None

    if frame.empty:
        msg = f"no data rows in {path}"
        raise IngestionError(msg)
    if frame.shape[1] < 2:  # noqa: PLR2004
        msg = "CSV needs at least one feature column and a label column"
        raise IngestionError(msg, row=1)

    numeric = frame.apply(pd.to_numeric, errors="coerce")
    invalid = numeric.isna().any(axis=1).to_numpy()
    if invalid.any():
        first = int(np.flatnonzero(invalid)[0])
        msg = f"non-numeric or missing value in {path}"
        raise IngestionError(msg, row=first + 1 + int(header))

    values = numeric.to_numpy(dtype=np.float64)
    raw_labels = values[:, -1]
    rounded = np.rint(raw_labels)
    fractional = np.flatnonzero(np.abs(raw_labels - rounded) > _LABEL_TOL)
    if fractional.size:
        msg = f"label {raw_labels[fractional[0]]} is not an integer"
        raise SchemaError(msg, row=int(fractional[0]) + 1 + int(header))
    return np.ascontiguousarray(values[:, :-1]), rounded.astype(np.int64)


def _read_idx(path: Path, *, expected_magic: int) -> np.ndarray:
    """Decode a big-endian IDX file into an array of its declared shape."""
    if not path.exists():
        msg = f"file not found: {path}"
        raise IngestionError(msg)
    raw = path.read_bytes()
    if len(raw) < _IDX_HEADER_BYTES:
        msg = f"truncated IDX header in {path}"
        raise IngestionError(msg, offset=len(raw))

    (magic,) = struct.unpack(">I", raw[:_IDX_HEADER_BYTES])
    type_code, ndim = (magic >> 8) & 0xFF, magic & 0xFF
    if magic >> 16 != 0 or type_code not in _IDX_DTYPES:
        msg = f"bad IDX magic 0x{magic:08x} in {path}"
        raise IngestionError(msg, offset=0)
    if type_code == 0x08 and magic != expected_magic:  # noqa: PLR2004
        msg = f"expected IDX magic 0x{expected_magic:08x}, got 0x{magic:08x} in {path}"
        raise IngestionError(msg, offset=0)

    dims_end = _IDX_HEADER_BYTES + 4 * ndim
    if len(raw) < dims_end:
        msg = f"truncated IDX dimensions in {path}"
        raise IngestionError(msg, offset=len(raw))
    dims = struct.unpack(f">{ndim}I", raw[_IDX_HEADER_BYTES:dims_end])

    dtype = np.dtype(_IDX_DTYPES[type_code])
    expected = int(np.prod(dims)) * dtype.itemsize
    payload = raw[dims_end:]
    if len(payload) != expected:
        msg = f"IDX payload is {len(payload)} bytes, header declares {expected} in {path}"
        raise IngestionError(msg, offset=dims_end + min(len(payload), expected))
    if dims and dims[0] == 0:
        msg = f"IDX file {path} declares zero items"
        raise IngestionError(msg, offset=_IDX_HEADER_BYTES)
    return np.frombuffer(payload, dtype=dtype).reshape(dims)


def train_test_split(ds: LabeledDataset, test_fraction: float, seed: int) -> tuple[LabeledDataset, LabeledDataset]:
    """Split off a held-out test set before any noise is injected."""
    if not 0 < test_fraction < 1:
        msg = f"test_fraction must be in (0, 1), got {test_fraction}"
        raise ParameterError(msg)
    order = derive_rng(seed, "test-split").permutation(ds.n)
    n_test = max(1, floor_count(test_fraction, ds.n))
    return ds.subset(np.sort(order[n_test:])), ds.subset(np.sort(order[:n_test]))


# --- Noise injection ---


def _check_rate(nu: float) -> None:
    if not 0 <= nu < 1:
        msg = f"noise rate must be in [0, 1), got {nu}"
        raise ParameterError(msg)


def _flip_to_other_class(
    ds: LabeledDataset, flip_indices: np.ndarray, rng: np.random.Generator
) -> LabeledDataset:
    """Relabel ``flip_indices`` uniformly among the C-1 other classes."""
    labels = ds.clean_labels.copy()
    offsets = rng.integers(1, ds.num_classes, size=flip_indices.size)
    labels[flip_indices] = (labels[flip_indices] + offsets) % ds.num_classes
    return ds.with_labels(labels)


def inject_uniform_noise(ds: LabeledDataset, nu: float, seed: int) -> LabeledDataset:
    """Flip a uniformly random ``floor(nu * N)``-subset to another class.

    Corruption is applied to the clean labels, so the flipped count is exact.

    Args:
        ds: Dataset to corrupt.
        nu: Noise rate in [0, 1).
        seed: Master seed; selection and targets use separate streams.

    Returns:
        Corrupted dataset with updated corrupt_mask; clean_labels preserved.
    """
    _check_rate(nu)
    if ds.num_classes < 2:  # noqa: PLR2004
        msg = f"label noise needs at least 2 classes, got {ds.num_classes}"
        raise ParameterError(msg)

    n_flip = floor_count(nu, ds.n)
    chosen = derive_rng(seed, "flip-selection").choice(ds.n, size=n_flip, replace=False)
    corrupted = _flip_to_other_class(ds, np.sort(chosen), derive_rng(seed, "flip-target"))
    logger.info("uniform noise: flipped %d of %d labels", n_flip, ds.n)
    return corrupted


def inject_targeted_noise(ds: LabeledDataset, nu: float, attacker: TrainedModel, seed: int) -> LabeledDataset:
    """Flip the ``floor(nu * N)`` examples with the largest attacker gradient norm.

    Gradient norms are full-parameter norms of the per-sample loss under the
    attacker at the clean labels; equal norms are ranked by ascending index.

    Args:
        ds: Dataset to corrupt.
        nu: Noise rate in [0, 1).
        attacker: Model trained on the clean labels; used only to build the mask.
        seed: Master seed for the flip targets.

    Returns:
        Corrupted dataset with updated corrupt_mask; clean_labels preserved.
    """
    from .learners import eval_stats

    _check_rate(nu)
    if attacker.spec.input_dim != ds.d or attacker.spec.num_classes != ds.num_classes:
        msg = (
            f"attacker expects d={attacker.spec.input_dim}, C={attacker.spec.num_classes}; "
            f"dataset has d={ds.d}, C={ds.num_classes}"
        )
        raise ParameterError(msg)

    n_flip = floor_count(nu, ds.n)
    norms = eval_stats(attacker, ds.clean_view).grad_norm
    # lexsort: last key is primary -> descending norm, then ascending index
    ranking = np.lexsort((np.arange(ds.n), -norms))
    chosen = np.sort(ranking[:n_flip])
    corrupted = _flip_to_other_class(ds, chosen, derive_rng(seed, "flip-target"))
    logger.info("targeted noise: flipped %d of %d labels", n_flip, ds.n)
    return corrupted


# --- Persistence ---


def save_dataset(ds: LabeledDataset, path: Path) -> None:
    """Write a dataset (including ground truth) as a compressed ``.npz``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as f:
        np.savez_compressed(
            f,
            features=ds.features,
            labels=ds.labels,
            clean_labels=ds.clean_labels,
            corrupt_mask=ds.corrupt_mask,
            num_classes=np.array(ds.num_classes),
        )


def load_dataset(path: Path) -> LabeledDataset:
    """Read a dataset written by save_dataset."""
    path = Path(path)
    try:
        with np.load(path) as archive:
            return LabeledDataset(
                archive["features"],
                archive["labels"],
                archive["clean_labels"],
                archive["corrupt_mask"],
                int(archive["num_classes"]),
            )
    except FileNotFoundError:
        msg = f"dataset not found: {path}"
        raise IngestionError(msg) from None
    except (KeyError, ValueError, OSError) as e:
        msg = f"not a dris dataset archive: {path} ({e})"
        raise IngestionError(msg) from None


def export_mask(mask: np.ndarray, path: Path) -> None:
    """Write one ``0``/``1`` line per example."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join("1\n" if flag else "0\n" for flag in np.asarray(mask, dtype=bool)))


def read_mask(path: Path) -> np.ndarray:
    """Read a mask written by export_mask."""
    lines = Path(path).read_text().split()
    for row, line in enumerate(lines, start=1):
        if line not in ("0", "1"):
            msg = f"mask entries must be 0 or 1, got {line!r}"
            raise IngestionError(msg, row=row)
    return np.array([line == "1" for line in lines], dtype=bool)


def mask_digest(mask: np.ndarray) -> str:
    """SHA-256 of the packed mask; equal masks give equal digests."""
    packed = np.packbits(np.asarray(mask, dtype=bool))
    return hashlib.sha256(len(mask).to_bytes(8, "big") + packed.tobytes()).hexdigest()
