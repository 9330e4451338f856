"""UCR-style time series ingestion, z-normalization and subsampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np


class ParseError(ValueError):
    """Malformed UCR file; carries the 1-based line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class TimeSeries:
    values: np.ndarray
    label: Optional[int] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ValueError(f"time series must be 1-D, got shape {v.shape}")
        if v.size < 2:
            raise ValueError("time series needs at least 2 time steps")
        if not np.all(np.isfinite(v)):
            raise ValueError("time series contains NaN or Inf")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class LabeledDataset:
    """A stack of equal-length univariate series with dense labels 0..C-1.

    ``label_map`` maps the raw file label (as written) to its dense index.
    """

    X: np.ndarray
    y: np.ndarray
    num_classes: int
    name: str = ""
    label_map: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        y = np.array(self.y, dtype=np.int64)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-D (N, T), got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise ValueError("y must have one label per series")
        if X.shape[1] < 2:
            raise ValueError("series length must be at least 2")
        if not np.all(np.isfinite(X)):
            raise ValueError("dataset contains NaN or Inf")
        if self.num_classes < 2:
            raise ValueError("need at least 2 classes")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ValueError("labels must lie in 0..C-1")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    def __getitem__(self, i: int) -> TimeSeries:
        return TimeSeries(self.X[i], int(self.y[i]))

    @property
    def length(self) -> int:
        return self.X.shape[1]

    @property
    def series(self) -> list[TimeSeries]:
        return [self[i] for i in range(len(self))]

    def raw_label(self, dense: int):
        for raw, idx in self.label_map.items():
            if idx == dense:
                return raw
        return dense

    def take(self, indices) -> "LabeledDataset":
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.X[indices], self.y[indices], self.num_classes,
                              self.name, dict(self.label_map))


def _parse_label(token: str, line: int):
    try:
        value = float(token)
    except ValueError:
        raise ParseError(f"non-numeric label {token!r}", line) from None
    if not np.isfinite(value):
        raise ParseError(f"non-finite label {token!r}", line)
    return int(value) if value == int(value) else value


def _detect_delimiter(first_line: str) -> Optional[str]:
    if "\t" in first_line:
        return "\t"
    if "," in first_line:
        return ","
    return None  # whitespace


def load_ucr(path, delimiter: Optional[str] = None, name: Optional[str] = None) -> LabeledDataset:
    """Read a UCR file (label first, then the series values) into a dataset.

    ``delimiter`` may be ``"tab"``, ``"comma"``, a literal character, or None to
    auto-detect from the first non-empty line (tab preferred).
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    delimiter = {"tab": "\t", "comma": ","}.get(delimiter, delimiter)
    lines = path.read_text().splitlines()
    rows, raw_labels = [], []
    width = None
    for lineno, text in enumerate(lines, start=1):
        if not text.strip():
            continue
        if delimiter is None:
            delimiter = _detect_delimiter(text) or " "
        tokens = text.split() if delimiter == " " else [t.strip() for t in text.strip().split(delimiter)]
        if len(tokens) < 3:
            raise ParseError("expected a label and at least 2 values", lineno)
        label = _parse_label(tokens[0], lineno)
        try:
            values = [float(t) for t in tokens[1:]]
        except ValueError:
            bad = next(t for t in tokens[1:] if not _is_float(t))
            raise ParseError(f"non-numeric value {bad!r}", lineno) from None
        if width is None:
            width = len(values)
        elif len(values) != width:
            raise ParseError(f"ragged row: {len(values)} values, expected {width}", lineno)
        rows.append(values)
        raw_labels.append(label)
    if not rows:
        raise ParseError(f"empty file: {path}")

    label_map: dict = {}
    for raw in raw_labels:
        label_map.setdefault(raw, len(label_map))
    y = [label_map[r] for r in raw_labels]
    X = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(X)):
        raise ParseError("NaN/Inf values are not supported")
    if len(label_map) < 2:
        raise ParseError("file contains a single class; need at least 2")
    return LabeledDataset(X, y, len(label_map), name or _dataset_name(path), label_map)


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def _dataset_name(path: Path) -> str:
    stem = path.stem
    for suffix in ("_TRAIN", "_TEST"):
        if stem.upper().endswith(suffix):
            return stem[: -len(suffix)]
    return stem


def save_ucr(ds: LabeledDataset, path, delimiter: str = "\t", raw_labels: bool = True) -> None:
    """Write ``ds`` in UCR layout with 9 significant digits."""
    delimiter = {"tab": "\t", "comma": ","}.get(delimiter, delimiter)
    with open(path, "w") as fh:
        for x, y in zip(ds.X, ds.y):
            label = ds.raw_label(int(y)) if raw_labels else int(y)
            fh.write(delimiter.join([str(label)] + [f"{v:.9g}" for v in x]) + "\n")


def write_series_tsv(path, rows, labels=None) -> None:
    """Write bare rows (optionally label-prefixed) as TSV with 9 significant digits."""
    with open(path, "w") as fh:
        for i, row in enumerate(rows):
            cells = [f"{v:.9g}" for v in np.asarray(row, dtype=np.float64)]
            if labels is not None:
                cells.insert(0, str(labels[i]))
            fh.write("\t".join(cells) + "\n")


def read_series_tsv(path, labelled: bool = True):
    rows, labels = [], []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        cells = line.split("\t")
        if labelled:
            labels.append(int(float(cells[0])))
            cells = cells[1:]
        rows.append([float(c) for c in cells])
    X = np.array(rows, dtype=np.float64)
    return (X, np.array(labels, dtype=np.int64)) if labelled else X


def z_normalize(ds: LabeledDataset) -> LabeledDataset:
    """Per-series z-normalization with population std; constant series become zeros."""
    X = ds.X
    mu = X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, keepdims=True)
    centered = X - mu
    safe = np.where(sd > 0, sd, 1.0)
    Z = np.where(sd > 0, centered / safe, 0.0)
    return LabeledDataset(Z, ds.y, ds.num_classes, ds.name, dict(ds.label_map))


def subsample(ds: LabeledDataset, n: int, seed: int) -> LabeledDataset:
    """Draw ``n`` distinct members without replacement, kept in dataset order."""
    if n < 1:
        raise ValueError(f"subsample size must be >= 1, got {n}")
    if n >= len(ds):
        return ds
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(len(ds), size=n, replace=False))
    return ds.take(idx)


def subsample_indices(n_total: int, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"subsample size must be >= 1, got {n}")
    if n >= n_total:
        return np.arange(n_total)
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(n_total, size=n, replace=False))


def make_synthetic(n_per_class: int = 25, length: int = 64, num_classes: int = 2,
                   separation: float = 2.0, noise: float = 0.3, level_noise: float = 0.0,
                   seed: int = 0, name: str = "synthetic") -> LabeledDataset:
    """Constant class means spaced ``separation`` apart (centred on 0).

    Each series gets its class mean, a per-series level offset with std
    ``level_noise``, and i.i.d. Gaussian noise with std ``noise``. Members are
    interleaved by class.
    """
    rng = np.random.default_rng(seed)
    means = separation * (np.arange(num_classes) - (num_classes - 1) / 2.0)
    X, y = [], []
    for _ in range(n_per_class):
        for c in range(num_classes):
            level = means[c] + level_noise * rng.standard_normal()
            X.append(level + noise * rng.standard_normal(length))
            y.append(c)
    return LabeledDataset(np.array(X), np.array(y), num_classes, name,
                          {c: c for c in range(num_classes)})
