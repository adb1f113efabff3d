"""Datasets, centering, variation explained and train/test/fold splitting."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

REGRESSION = "regression"
CLASSIFICATION = "classification"
TASKS = (REGRESSION, CLASSIFICATION)


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass(frozen=True)
class Centering:
    """Training statistics needed to map raw rows into model coordinates."""

    task: str
    x_mean: np.ndarray
    x_scale: np.ndarray | None = None
    y_mean: np.ndarray | None = None
    classes: np.ndarray | None = None

    def apply_x(self, raw_X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(raw_X, dtype=float))
        if X.shape[1] != self.x_mean.shape[0]:
            raise DataError(
                f"expected {self.x_mean.shape[0]} feature columns, got {X.shape[1]}"
            )
        X = X - self.x_mean
        if self.x_scale is not None:
            X = X / self.x_scale
        return X

    def encode_y(self, raw_Y) -> np.ndarray:
        """Responses in model coordinates (centered, or one-hot over known classes)."""
        if self.task == REGRESSION:
            Y = np.asarray(raw_Y, dtype=float)
            if Y.ndim == 1:
                Y = Y[:, None]
            return Y - self.y_mean
        labels = np.asarray(raw_Y).ravel()
        idx = np.searchsorted(self.classes, labels)
        idx = np.clip(idx, 0, len(self.classes) - 1)
        if not np.array_equal(self.classes[idx], labels):
            raise DataError("labels outside the training classes")
        return np.eye(len(self.classes))[idx]


@dataclass(frozen=True)
class Dataset:
    """Column-centered predictors X (n x p) with responses Y (n x q).

    For classification Y is one-hot; for regression Y is column-centered.
    """

    X: np.ndarray
    Y: np.ndarray
    task: str
    centering: Centering
    feature_names: tuple[str, ...] | None = None
    response_names: tuple[str, ...] | None = None

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def q(self) -> int:
        return self.Y.shape[1]

    @property
    def column_means_x(self) -> np.ndarray:
        return self.centering.x_mean

    @property
    def column_means_y(self) -> np.ndarray | None:
        return self.centering.y_mean

    @property
    def labels(self) -> np.ndarray:
        """Class index per row (classification only)."""
        return np.argmax(self.Y, axis=1)

    def raw_x(self) -> np.ndarray:
        X = self.X if self.centering.x_scale is None else self.X * self.centering.x_scale
        return X + self.centering.x_mean

    def raw_y(self) -> np.ndarray:
        if self.task == REGRESSION:
            return self.Y + self.centering.y_mean
        return self.centering.classes[self.labels]

    def take(self, idx) -> "Dataset":
        """Subset of rows, re-centered with the subset's own statistics."""
        idx = np.asarray(idx)
        return center(
            self.raw_x()[idx],
            self.raw_y()[idx],
            self.task,
            standardize=self.centering.x_scale is not None,
            classes=self.centering.classes,
            feature_names=self.feature_names,
            response_names=self.response_names,
        )

    def transform(self, raw_X, raw_Y=None) -> tuple[np.ndarray, np.ndarray | None]:
        """Apply this dataset's (training) centering to held-out rows."""
        X = self.centering.apply_x(raw_X)
        Y = None if raw_Y is None else self.centering.encode_y(raw_Y)
        return X, Y


def center(
    raw_X,
    raw_Y,
    task: str,
    *,
    standardize: bool = False,
    n_classes: int | None = None,
    classes=None,
    feature_names: Sequence[str] | None = None,
    response_names: Sequence[str] | None = None,
) -> Dataset:
    """Center raw predictors/responses and encode class labels one-hot.

    Constant columns are kept; they center to zero. With ``standardize`` the
    centered columns are also scaled to unit variance (constant columns are
    left unscaled).
    """
    if task not in TASKS:
        raise DataError(f"unknown task {task!r}")
    X = np.asarray(raw_X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise DataError("raw_X must be a matrix")
    n = X.shape[0]
    if n < 2:
        raise DataError("need at least 2 rows")
    if not np.all(np.isfinite(X)):
        raise DataError("raw_X contains non-finite values")

    x_mean = X.mean(axis=0)
    Xc = X - x_mean
    x_scale = None
    if standardize:
        x_scale = Xc.std(axis=0)
        x_scale[x_scale == 0] = 1.0
        Xc = Xc / x_scale

    if task == REGRESSION:
        Y = np.asarray(raw_Y, dtype=float)
        if Y.ndim == 1:
            Y = Y[:, None]
        if Y.shape[0] != n:
            raise DataError(f"raw_X has {n} rows but raw_Y has {Y.shape[0]}")
        if not np.all(np.isfinite(Y)):
            raise DataError("raw_Y contains non-finite values")
        y_mean = Y.mean(axis=0)
        centering = Centering(task, x_mean, x_scale, y_mean=y_mean)
        Yc = Y - y_mean
    else:
        labels = np.asarray(raw_Y).ravel()
        if labels.shape[0] != n:
            raise DataError(f"raw_X has {n} rows but raw_Y has {labels.shape[0]}")
        if classes is None:
            if n_classes is not None and np.issubdtype(labels.dtype, np.integer):
                classes = np.arange(n_classes)
            else:
                classes = np.unique(labels)
        classes = np.asarray(classes)
        centering = Centering(task, x_mean, x_scale, classes=classes)
        Yc = centering.encode_y(labels)

    return Dataset(
        Xc,
        Yc,
        task,
        centering,
        tuple(feature_names) if feature_names is not None else None,
        tuple(response_names) if response_names is not None else None,
    )


def variation_explained(X: np.ndarray, L: np.ndarray) -> float:
    """Fraction of ||X||_F^2 captured by the span of orthonormal L."""
    total = float(np.sum(X * X))
    if total <= 0:
        raise DataError("variation explained is undefined for a zero data matrix")
    XL = X @ L
    return float(np.sum(XL * XL)) / total


@dataclass(frozen=True)
class SplitPlan:
    seed: int = 0
    test_fraction: float = 0.2
    n_folds: int = 10
    n_repeats: int = 1

    def __post_init__(self):
        if not 0 < self.test_fraction < 1:
            raise ValueError("test_fraction must lie in (0, 1)")
        if self.n_folds < 1 or self.n_repeats < 1:
            raise ValueError("n_folds and n_repeats must be positive")

    def repeat_seed(self, repeat: int) -> int:
        """Independent 63-bit seed for one repeat, derived from the master seed."""
        hi, lo = np.random.SeedSequence([self.seed, repeat]).generate_state(2)
        return ((int(hi) << 32) | int(lo)) & ((1 << 63) - 1)


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    test: np.ndarray
    folds: list[np.ndarray] = field(default_factory=list)


def split(dataset_or_n, plan: SplitPlan, repeat: int = 0) -> Split:
    """Random test hold-out plus a balanced fold partition of the training rows."""
    n = dataset_or_n if isinstance(dataset_or_n, (int, np.integer)) else dataset_or_n.n
    n_test = int(round(n * plan.test_fraction))
    n_test = min(max(n_test, 1), n - 1)
    n_train = n - n_test
    if plan.n_folds > n_train:
        raise ValueError(f"{plan.n_folds} folds exceed {n_train} training rows")
    rng = np.random.default_rng(plan.repeat_seed(repeat))
    perm = rng.permutation(n)
    test = np.sort(perm[:n_test])
    train_perm = perm[n_test:]
    folds = [np.sort(f) for f in np.array_split(train_perm, plan.n_folds)]
    return Split(np.sort(train_perm), test, folds)


def read_csv(
    path,
    response_col: str | int | None,
    task: str,
    *,
    header: bool | None = None,
) -> tuple[np.ndarray, np.ndarray | None, list[str] | None, str | None]:
    """Read a numeric CSV into (raw_X, raw_y, feature_names, response_name).

    ``header=None`` auto-detects a header row (any non-numeric first-row cell).
    ``response_col`` is a column name or 0-based index; None reads features only.
    Classification labels are kept as strings unless all are integers.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        return np.empty((0, 0)), None, None, None

    first = rows[0]
    if header is None:
        header = not all(_is_number(c) for c in first)
    names = [c.strip() for c in first] if header else None
    body = rows[1:] if header else rows
    ncol = len(first)

    resp_idx = None
    if response_col is not None:
        if isinstance(response_col, str) and not response_col.lstrip("-").isdigit():
            if names is None or response_col not in names:
                raise DataError(f"response column {response_col!r} not found in header")
            resp_idx = names.index(response_col)
        else:
            resp_idx = int(response_col) % ncol

    X = np.empty((len(body), ncol - (resp_idx is not None)))
    y = []
    for i, row in enumerate(body):
        lineno = i + 1 + bool(header)
        if len(row) != ncol:
            raise DataError(f"{path}:{lineno}: expected {ncol} columns, got {len(row)}")
        j_out = 0
        for j, cell in enumerate(row):
            cell = cell.strip()
            if j == resp_idx:
                if cell == "" or cell.lower() in ("na", "nan", "?"):
                    raise DataError(f"{path}:{lineno}: missing response in column {j}")
                y.append(cell)
                continue
            if cell == "" or cell.lower() in ("na", "nan", "?"):
                raise DataError(f"{path}:{lineno}: missing value in column {j}")
            try:
                X[i, j_out] = float(cell)
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric value {cell!r} in column {j}")
            j_out += 1

    feature_names = None
    response_name = None
    if names is not None:
        feature_names = [c for j, c in enumerate(names) if j != resp_idx]
        response_name = names[resp_idx] if resp_idx is not None else None

    raw_y = None
    if resp_idx is not None:
        if task == REGRESSION:
            try:
                raw_y = np.array([float(v) for v in y])
            except ValueError as exc:
                raise DataError(f"{path}: non-numeric regression response: {exc}")
        elif all(_is_int(v) for v in y):
            raw_y = np.array([int(float(v)) for v in y])
        else:
            raw_y = np.array(y)
    return X, raw_y, feature_names, response_name


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def _is_int(s: str) -> bool:
    try:
        return float(s) == int(float(s))
    except ValueError:
        return False
