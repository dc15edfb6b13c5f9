"""Binary-classification datasets: CSV ingestion with a JSON split sidecar."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass(eq=False)
class Dataset:
    id: str
    features: np.ndarray
    labels: np.ndarray
    train_idx: np.ndarray
    val_idx: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self.features = np.ascontiguousarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=float)
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.val_idx = np.asarray(self.val_idx, dtype=np.int64)
        n = self.features.shape[0]
        if self.features.ndim != 2:
            raise DataError(f"dataset {self.id}: features must be a 2-D matrix")
        if self.labels.shape != (n,):
            raise DataError(f"dataset {self.id}: {n} rows but {self.labels.shape[0]} labels")
        if not np.all(np.isfinite(self.features)):
            raise DataError(f"dataset {self.id}: missing or non-finite feature values")
        if not np.all((self.labels == 0) | (self.labels == 1)):
            raise DataError(f"dataset {self.id}: labels must be 0/1")
        if self.train_idx.size == 0 or self.val_idx.size == 0:
            raise DataError(f"dataset {self.id}: train and validation splits must be non-empty")
        both = np.concatenate([self.train_idx, self.val_idx])
        if both.min() < 0 or both.max() >= n:
            raise DataError(f"dataset {self.id}: split index out of range")
        if np.intersect1d(self.train_idx, self.val_idx).size:
            raise DataError(f"dataset {self.id}: train and validation splits overlap")

    @property
    def n_rows(self) -> int:
        return self.features.shape[0]

    @property
    def n_cols(self) -> int:
        return self.features.shape[1]

    @property
    def X_train(self) -> np.ndarray:
        if "X_train" not in self._cache:
            self._cache["X_train"] = np.ascontiguousarray(self.features[self.train_idx])
        return self._cache["X_train"]

    @property
    def y_train(self) -> np.ndarray:
        return self.labels[self.train_idx]

    @property
    def X_val(self) -> np.ndarray:
        if "X_val" not in self._cache:
            self._cache["X_val"] = np.ascontiguousarray(self.features[self.val_idx])
        return self._cache["X_val"]

    @property
    def y_val(self) -> np.ndarray:
        return self.labels[self.val_idx]

    def presorted(self) -> np.ndarray:
        """Training-row order per feature, computed once and shared by every tree."""
        if "presorted" not in self._cache:
            self._cache["presorted"] = np.argsort(self.X_train, axis=0, kind="stable")
        return self._cache["presorted"]


def random_split(n_rows: int, val_fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(seed).permutation(n_rows)
    n_val = max(1, int(round(n_rows * val_fraction)))
    return np.sort(perm[n_val:]), np.sort(perm[:n_val])


def split_path_for(csv_path: str | Path) -> Path:
    p = Path(csv_path)
    return p.with_name(p.stem + ".split.json")


def load_dataset(csv_path: str | Path, split_path: str | Path | None = None) -> Dataset:
    """Read a CSV (header row, last column is the 0/1 label) and its split sidecar.

    The sidecar defaults to ``<stem>.split.json`` next to the CSV and holds
    ``{"dataset_id": ..., "train": [...], "validation": [...]}``.
    """
    csv_path = Path(csv_path)
    split_path = Path(split_path) if split_path else split_path_for(csv_path)
    try:
        with csv_path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except FileNotFoundError as exc:
        raise DataError(f"dataset file not found: {csv_path}") from exc
    if len(rows) < 2:
        raise DataError(f"{csv_path}: needs a header and at least one data row")
    try:
        table = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise DataError(f"{csv_path}: non-numeric or missing value ({exc})") from exc
    if table.ndim != 2 or table.shape[1] < 2:
        raise DataError(f"{csv_path}: need at least one feature column and a label column")
    try:
        side = json.loads(split_path.read_text())
        train, val = side["train"], side["validation"]
    except FileNotFoundError as exc:
        raise DataError(f"split sidecar not found: {split_path}") from exc
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise DataError(f"malformed split sidecar {split_path}: {exc}") from exc
    return Dataset(str(side.get("dataset_id", csv_path.stem)), table[:, :-1], table[:, -1], train, val)


def save_dataset(ds: Dataset, csv_path: str | Path) -> Path:
    csv_path = Path(csv_path)
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j}" for j in range(ds.n_cols)] + ["label"])
        for row, y in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [int(y)])
    side = {"dataset_id": ds.id, "train": ds.train_idx.tolist(), "validation": ds.val_idx.tolist()}
    split_path_for(csv_path).write_text(json.dumps(side))
    return csv_path
