"""Supervised classification datasets: CSV ingestion, scaling, balance check, splits."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .core import ContractViolation, IngestionError


@dataclass(frozen=True)
class SupervisedDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int
    column_names: Optional[tuple] = None
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        X = np.array(self.features, dtype=float, ndmin=2)
        y = np.array(self.labels, dtype=np.int64).reshape(-1)
        if X.shape[0] != y.shape[0]:
            raise ContractViolation("features and labels have different lengths")
        if y.shape[0] < 1:
            raise ContractViolation("dataset must have at least one row")
        if self.num_classes < 2:
            raise ContractViolation("need at least two classes")
        if y.min() < 0 or y.max() >= self.num_classes:
            raise ContractViolation(f"labels must lie in [0, {self.num_classes})")
        if not np.all(np.isfinite(X)):
            raise ContractViolation("features must be finite")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def take(self, idx: np.ndarray) -> "SupervisedDataset":
        return SupervisedDataset(self.features[idx], self.labels[idx], self.num_classes,
                                 self.column_names, dict(self.metadata))

    def with_features(self, features: np.ndarray) -> "SupervisedDataset":
        return SupervisedDataset(features, self.labels, self.num_classes,
                                 self.column_names, dict(self.metadata))


def _encode_labels(raw: list) -> tuple[np.ndarray, dict]:
    # Dense non-negative integer labels keep their values so digit semantics survive;
    # anything else gets a first-appearance code.
    try:
        ints = [int(v) for v in raw]
        if all(str(i) == v.strip() for i, v in zip(ints, raw)) and min(ints) >= 0:
            present = set(ints)
            if present == set(range(max(ints) + 1)):
                return np.array(ints, dtype=np.int64), {str(i): i for i in sorted(present)}
    except ValueError:
        pass
    mapping: dict = {}
    codes = []
    for v in raw:
        if v not in mapping:
            mapping[v] = len(mapping)
        codes.append(mapping[v])
    return np.array(codes, dtype=np.int64), mapping


def load_csv(
    path: Union[str, Path],
    label_column: Union[str, int] = -1,
    delimiter: str = ",",
    has_header: bool = True,
) -> SupervisedDataset:
    """Read a numeric-featured classification CSV.

    ``label_column`` is a header name (requires ``has_header``) or a zero-based
    index; negative indices count from the right. The label map is stored in
    ``metadata["label_map"]``.
    """
    path = Path(path)
    if not path.exists():
        raise IngestionError(f"{path}: file not found")
    if len(delimiter) != 1:
        raise IngestionError("delimiter must be a single character")
    with path.open(newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh, delimiter=delimiter) if r and any(c.strip() for c in r)]
    header = None
    if has_header:
        if not rows:
            raise IngestionError(f"{path}: empty file")
        header, rows = [h.strip() for h in rows[0]], rows[1:]
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    width = len(header) if header is not None else len(rows[0])
    if isinstance(label_column, str):
        if header is None:
            raise IngestionError("label column given by name but the file has no header")
        if label_column not in header:
            raise IngestionError(f"{path}: label column {label_column!r} not in header {header}")
        label_idx = header.index(label_column)
    else:
        label_idx = label_column + width if label_column < 0 else label_column
        if not 0 <= label_idx < width:
            raise IngestionError(f"{path}: label column index {label_column} out of range for {width} columns")
    feat_idx = [j for j in range(width) if j != label_idx]
    names = [header[j] if header else f"col{j}" for j in range(width)]
    X = np.empty((len(rows), len(feat_idx)))
    raw_labels = []
    first_line = 2 if has_header else 1
    for i, row in enumerate(rows):
        line = first_line + i
        if len(row) != width:
            raise IngestionError(f"{path}: line {line} has {len(row)} cells, expected {width}")
        raw_labels.append(row[label_idx].strip())
        for k, j in enumerate(feat_idx):
            cell = row[j].strip()
            try:
                v = float(cell)
            except ValueError:
                raise IngestionError(
                    f"{path}: line {line}, column {names[j]!r}: non-numeric value {cell!r}"
                ) from None
            if not math.isfinite(v):
                raise IngestionError(f"{path}: line {line}, column {names[j]!r}: non-finite value {cell!r}")
            X[i, k] = v
    labels, mapping = _encode_labels(raw_labels)
    return SupervisedDataset(
        X, labels, max(len(mapping), 2),
        column_names=tuple(names[j] for j in feat_idx),
        metadata={"source": str(path), "label_column": names[label_idx], "label_map": mapping},
    )


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    std: np.ndarray

    @property
    def scale(self) -> np.ndarray:
        return np.where(self.std > 0, self.std, 1.0)

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.scale

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=float) * self.scale + self.mean

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Standardization":
        return cls(np.array(obj["mean"], dtype=float), np.array(obj["std"], dtype=float))


def standardize(ds: SupervisedDataset) -> tuple[SupervisedDataset, Standardization]:
    """Zero-mean, unit-variance columns (population stddev); constant columns become 0."""
    if ds.n < 2:
        raise ContractViolation("standardize needs at least two rows")
    mean = ds.features.mean(axis=0)
    std = ds.features.std(axis=0)
    # guard against round-off leaving a tiny spread in a constant column
    std = np.where(std <= 1e-12 * np.maximum(1.0, np.abs(mean)), 0.0, std)
    rec = Standardization(mean, std)
    return ds.with_features(rec.apply(ds.features)), rec


@dataclass(frozen=True)
class BalanceReport:
    balanced: bool
    max_class_fraction: float


def check_balanced(ds: SupervisedDataset, threshold: float = 0.5) -> BalanceReport:
    counts = np.bincount(ds.labels, minlength=ds.num_classes)
    frac = float(counts.max() / ds.n)
    return BalanceReport(frac < threshold, frac)


def train_eval_split(ds: SupervisedDataset, train_fraction: float = 0.9, seed: int = 0):
    if not 0 < train_fraction < 1:
        raise ContractViolation("train_fraction must lie in (0, 1)")
    if ds.n < 2:
        raise ContractViolation("need at least two rows to split")
    perm = np.random.default_rng(seed).permutation(ds.n)
    n_train = int(math.floor(train_fraction * ds.n))
    return ds.take(perm[:n_train]), ds.take(perm[n_train:])


def make_gaussian_clusters(
    num_classes: int = 5,
    dim: int = 10,
    num_samples: int = 20000,
    separation: float = 4.0,
    label_noise: float = 0.0,
    seed: int = 0,
) -> SupervisedDataset:
    """Unit-variance Gaussian clusters, one per class, with uniformly drawn labels.

    Cluster means are ``separation`` times the standard basis vectors when
    ``num_classes <= dim`` and random unit directions otherwise. With
    ``label_noise`` a fraction of labels is redrawn uniformly after sampling.
    """
    rng = np.random.default_rng(seed)
    if num_classes <= dim:
        centers = np.eye(dim)[:num_classes]
    else:
        centers = rng.normal(size=(num_classes, dim))
        centers /= np.linalg.norm(centers, axis=1, keepdims=True)
    centers = separation * centers
    labels = rng.integers(num_classes, size=num_samples)
    X = centers[labels] + rng.normal(size=(num_samples, dim))
    if label_noise > 0:
        flip = rng.random(num_samples) < label_noise
        labels = np.where(flip, rng.integers(num_classes, size=num_samples), labels)
    return SupervisedDataset(
        X, labels, num_classes,
        column_names=tuple(f"x{j}" for j in range(dim)),
        metadata={"source": "gaussian_clusters", "seed": seed, "separation": separation},
    )
