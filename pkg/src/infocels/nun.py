"""Target class selection and nearest-unlike-neighbour lookup."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .classifier import FcnModel, predict_proba
from .data import LabeledDataset, TimeSeries

METRICS = ("euclidean",)


@dataclass(frozen=True)
class NunResult:
    nun: TimeSeries
    target_class: int
    distance: float
    index: int  # row of the nun in the background dataset


def target_from_probs(probs) -> int:
    """Runner-up class: the complement in the binary case, otherwise the
    second-highest probability with ties going to the smaller index."""
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size < 2:
        raise ValueError("need at least 2 classes")
    order = np.argsort(-probs, kind="stable")
    return int(order[1])


def target_class(model: FcnModel, x) -> int:
    return target_from_probs(predict_proba(model, x))


def find_nun(x, background: LabeledDataset, target: int, metric: str = "euclidean") -> NunResult:
    """Closest background member labelled ``target``; ties keep dataset order."""
    if metric not in METRICS:
        raise ValueError(f"unknown distance metric {metric!r}")
    values = x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)
    if values.shape[0] != background.length:
        raise ValueError(f"series length {values.shape[0]} != background length {background.length}")
    candidates = np.flatnonzero(background.y == target)
    if candidates.size == 0:
        raise LookupError(f"background has no member of class {target}")
    dists = np.sqrt(np.sum((background.X[candidates] - values) ** 2, axis=1))
    best = int(np.argmin(dists))
    idx = int(candidates[best])
    return NunResult(TimeSeries(background.X[idx], target), target, float(dists[best]), idx)
