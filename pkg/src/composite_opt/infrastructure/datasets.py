"""Dataset sources: CSV files and the seeded synthetic generators."""
from __future__ import annotations

import logging
import re
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np
import pandas as pd

from src.composite_opt.core.dataset import Dataset
from src.composite_opt.core.errors import ContractViolation, DatasetLoadError
from src.composite_opt.core.losses import LossFamily

if TYPE_CHECKING:
    from src.composite_opt.api.schemas import DataSource

logger = logging.getLogger(__name__)

_INPUT_COLUMN = re.compile(r"^x(\d+)$")
_TARGET_COLUMN = re.compile(r"^y(\d+)$")


# ----- synthetic sources -----

def two_point_dataset(loss: LossFamily, x1=(1.0, 0.0), x2=(0.0, 1.0)) -> Dataset:
    """Two inputs in R^2 with classes 0 and 1, one-hot targets under squared loss."""
    inputs = np.array([x1, x2], dtype=float)
    return _labelled(inputs, np.array([0, 1]), 2, loss)


def gaussian_blobs(n: int, m: int, c: int, seed: int, loss: LossFamily) -> Dataset:
    """c unit-variance clusters around random centres of radius 3; sample i has class i mod c."""
    rng = np.random.default_rng(seed)
    centres = 3.0 * rng.standard_normal((c, m))
    labels = np.arange(n) % c
    inputs = centres[labels] + rng.standard_normal((n, m))
    return _labelled(inputs, labels, c, loss)


def random_regression(n: int, m: int, c: int, seed: int, loss: LossFamily) -> Dataset:
    if loss is not LossFamily.SQUARED:
        raise ContractViolation("random_regression loss", "squared", loss.value)
    rng = np.random.default_rng(seed)
    return Dataset.regression(rng.standard_normal((n, m)), rng.standard_normal((n, c)))


def _labelled(inputs: np.ndarray, labels: np.ndarray, c: int, loss: LossFamily) -> Dataset:
    if loss is LossFamily.CROSS_ENTROPY:
        return Dataset.classification(inputs, labels, c)
    return Dataset.regression(inputs, np.eye(c)[labels])


# ----- CSV -----

def _split_header(path: Path, columns: list[str]) -> tuple[list[str], list[str], bool]:
    inputs = [col for col in columns if _INPUT_COLUMN.match(col)]
    targets = [col for col in columns if _TARGET_COLUMN.match(col)]
    is_label = columns[len(inputs):] == ["label"]
    expected_inputs = [f"x{k}" for k in range(1, len(inputs) + 1)]
    expected_targets = [f"y{k}" for k in range(1, len(targets) + 1)]
    if not inputs or columns[: len(inputs)] != expected_inputs:
        raise DatasetLoadError(path, f"header must start with x1..xm, got {columns}", line=1)
    if not is_label and (not targets or columns[len(inputs):] != expected_targets):
        raise DatasetLoadError(path, f"header must continue with y1..yc or 'label', got {columns}", line=1)
    return inputs, targets, is_label


def read_dataset_csv(path: Path | str, loss: LossFamily, num_outputs: int) -> Dataset:
    """
    Parse a dataset CSV.

    Header ``x1..xm,y1..yc`` holds regression targets and ``x1..xm,label``
    holds class indices in [0, num_outputs). Errors carry the 1-based file
    line of the offending row.
    """
    path = Path(path)
    if not path.exists():
        raise DatasetLoadError(path, "file not found")
    try:
        frame = pd.read_csv(
            path,
            dtype=str,
            keep_default_na=False,
            skipinitialspace=True,
            skip_blank_lines=False,
            encoding="utf-8",
        )
    except pd.errors.ParserError as exc:
        match = re.search(r"line (\d+)", str(exc))
        raise DatasetLoadError(path, f"ragged row: {exc}", line=int(match.group(1)) if match else None) from exc
    except (pd.errors.EmptyDataError, UnicodeDecodeError) as exc:
        raise DatasetLoadError(path, str(exc)) from exc
    if frame.empty:
        raise DatasetLoadError(path, "no data rows")

    columns = [str(col).strip() for col in frame.columns]
    frame.columns = columns
    input_cols, target_cols, is_label = _split_header(path, columns)

    # blank lines stay in the frame so row k is file line k + 2
    missing = frame.isna() | (frame == "")
    if missing.any(axis=None):
        row = int(np.flatnonzero(missing.any(axis=1).to_numpy())[0])
        what = "blank line" if missing.iloc[row].all() else "missing cell"
        raise DatasetLoadError(path, f"ragged row: {what}", line=row + 2)
    numeric = frame.apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() | ~np.isfinite(numeric.astype(float))
    if bad.any(axis=None):
        row = int(np.flatnonzero(bad.any(axis=1).to_numpy())[0])
        col = columns[int(np.flatnonzero(bad.iloc[row].to_numpy())[0])]
        raise DatasetLoadError(path, f"non-numeric cell '{frame.iloc[row][col]}' in column {col}", line=row + 2)

    inputs = numeric[input_cols].to_numpy(dtype=float)
    if is_label:
        labels = numeric["label"].to_numpy(dtype=float)
        for row, label in enumerate(labels):
            if label != int(label) or not 0 <= label < num_outputs:
                raise DatasetLoadError(path, f"label {label:g} outside [0, {num_outputs})", line=row + 2)
        dataset = _labelled(inputs, labels.astype(int), num_outputs, loss)
    else:
        if loss is LossFamily.CROSS_ENTROPY:
            raise DatasetLoadError(path, "cross-entropy needs a 'label' column, got regression targets", line=1)
        if len(target_cols) != num_outputs:
            raise DatasetLoadError(path, f"expected {num_outputs} target column(s), got {len(target_cols)}", line=1)
        dataset = Dataset.regression(inputs, numeric[target_cols].to_numpy(dtype=float))

    logger.info(f"[Dataset] Loaded {path.name}: n={dataset.num_samples}, m={dataset.input_dim}, c={dataset.output_dim}")
    return dataset


def write_dataset_csv(dataset: Dataset, path: Path | str) -> Path:
    """Write a dataset in the format accepted by ``read_dataset_csv``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(dataset.inputs, columns=[f"x{k}" for k in range(1, dataset.input_dim + 1)])
    if dataset.family is LossFamily.CROSS_ENTROPY:
        frame["label"] = [kind.label_index for kind in dataset.losses]
    else:
        targets = dataset.targets()
        for k in range(dataset.output_dim):
            frame[f"y{k + 1}"] = targets[:, k]
    frame.to_csv(path, index=False, float_format="%.17g", lineterminator="\n")
    logger.info(f"[Dataset] Wrote {len(frame)} rows to {path}")
    return path


def load_dataset(source: "DataSource", loss: LossFamily, num_outputs: int) -> Dataset:
    """Resolve any configured source into a Dataset."""
    kind = source.kind
    if kind == "csv":
        return read_dataset_csv(source.path, loss, source.num_classes or num_outputs)
    if kind == "two_point":
        return two_point_dataset(loss, source.x1, source.x2)
    if kind == "gaussian_blobs":
        return gaussian_blobs(source.n, source.m, source.c, source.seed, loss)
    if kind == "random_regression":
        return random_regression(source.n, source.m, source.c, source.seed, loss)
    raise ContractViolation("data.source", "csv | two_point | gaussian_blobs | random_regression", kind)
