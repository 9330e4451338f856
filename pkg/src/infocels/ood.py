"""Plausibility checks: isolation forest and local outlier factor novelty detectors.

Both detectors are fitted on raw training series (each a point in R^T) and flag a
query as out-of-distribution when its score exceeds a threshold learned from
the training scores.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .data import LabeledDataset, TimeSeries

LOF_DISTANCE_FLOOR = 1e-12


def _as_matrix(points) -> np.ndarray:
    if isinstance(points, LabeledDataset):
        return points.X
    rows = [p.values if isinstance(p, TimeSeries) else np.asarray(p, dtype=np.float64) for p in points]
    return np.atleast_2d(np.asarray(rows, dtype=np.float64))


def harmonic(n: int) -> float:
    return math.fsum(1.0 / i for i in range(1, n + 1))


def average_path_length(n: int) -> float:
    """c(n): mean unsuccessful-search path length in a binary search tree of n points."""
    if n <= 1:
        return 0.0
    return 2.0 * harmonic(n - 1) - 2.0 * (n - 1) / n


# ---------------------------------------------------------------------------
# isolation forest
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IsolationTree:
    """Flat node arrays; ``feature == -1`` marks a leaf holding ``size`` samples."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    size: np.ndarray
    depth: np.ndarray

    @property
    def height(self) -> int:
        return int(self.depth.max())


def _build_tree(X: np.ndarray, rng: np.random.Generator, max_depth: int) -> IsolationTree:
    feature, threshold, left, right, size, depth = [], [], [], [], [], []

    def new_node(n, d):
        for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (size, n), (depth, d)):
            arr.append(v)
        return len(feature) - 1

    stack = [(new_node(len(X), 0), np.arange(len(X)))]
    while stack:
        node, idx = stack.pop()
        d = depth[node]
        if d >= max_depth or idx.size <= 1:
            continue
        sub = X[idx]
        lo, hi = sub.min(axis=0), sub.max(axis=0)
        splittable = np.flatnonzero(hi > lo)
        if splittable.size == 0:
            continue
        q = int(rng.choice(splittable))
        p = float(rng.uniform(lo[q], hi[q]))
        mask = sub[:, q] < p
        feature[node], threshold[node] = q, p
        left[node] = new_node(int(mask.sum()), d + 1)
        right[node] = new_node(int((~mask).sum()), d + 1)
        stack.append((left[node], idx[mask]))
        stack.append((right[node], idx[~mask]))
    return IsolationTree(*(np.asarray(a) for a in (feature, threshold, left, right, size, depth)))


def _path_lengths(tree: IsolationTree, X: np.ndarray) -> np.ndarray:
    node = np.zeros(len(X), dtype=np.int64)
    rows = np.arange(len(X))
    for _ in range(tree.height):
        f = tree.feature[node]
        inner = f >= 0
        if not inner.any():
            break
        go_left = X[rows[inner], f[inner]] < tree.threshold[node[inner]]
        node[inner] = np.where(go_left, tree.left[node[inner]], tree.right[node[inner]])
    c = np.array([average_path_length(int(s)) for s in tree.size])
    return tree.depth[node] + c[node]


@dataclass(frozen=True)
class IsolationForestModel:
    trees: tuple
    psi: int
    num_trees: int
    threshold: float
    contamination: float

    def score(self, points) -> np.ndarray:
        """Anomaly score 2^(-E[h(x)] / c(psi)) in (0, 1); higher is more anomalous."""
        X = _as_matrix(points)
        mean_h = np.mean([_path_lengths(t, X) for t in self.trees], axis=0)
        return 2.0 ** (-mean_h / average_path_length(self.psi))

    def is_outlier(self, points) -> np.ndarray:
        return self.score(points) > self.threshold


def fit_iforest(train, num_trees: int = 100, psi: int = 256, contamination: float = 0.05,
                seed: int = 0) -> IsolationForestModel:
    X = _as_matrix(train)
    if len(X) < 2:
        raise ValueError("isolation forest needs at least 2 training points")
    if not 0 <= contamination < 1:
        raise ValueError("contamination must lie in [0, 1)")
    psi = min(psi, len(X))
    max_depth = math.ceil(math.log2(psi))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(num_trees):
        sample = X[rng.choice(len(X), size=psi, replace=False)]
        trees.append(_build_tree(sample, rng, max_depth))
    model = IsolationForestModel(tuple(trees), psi, num_trees, np.inf, contamination)
    threshold = float(np.quantile(model.score(X), 1.0 - contamination))
    return IsolationForestModel(tuple(trees), psi, num_trees, threshold, contamination)


# ---------------------------------------------------------------------------
# local outlier factor (novelty mode)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LofModel:
    reference: np.ndarray
    k: int
    k_distance: np.ndarray
    lrd: np.ndarray
    train_lof: np.ndarray
    threshold: float

    def score(self, points) -> np.ndarray:
        Q = _as_matrix(points)
        D = cdist(Q, self.reference)
        nbrs = np.argsort(D, axis=1, kind="stable")[:, : self.k]
        d = np.take_along_axis(D, nbrs, axis=1)
        reach = np.maximum(self.k_distance[nbrs], d)
        lrd_q = 1.0 / np.maximum(reach.mean(axis=1), LOF_DISTANCE_FLOOR)
        return self.lrd[nbrs].mean(axis=1) / lrd_q

    def is_outlier(self, points) -> np.ndarray:
        return self.score(points) > self.threshold


def fit_lof(train, k: int = 20) -> LofModel:
    """k is clipped to |train| - 1."""
    X = _as_matrix(train)
    if k < 1:
        raise ValueError("k must be >= 1")
    if len(X) < 2:
        raise ValueError("LOF needs at least 2 reference points")
    k = min(k, len(X) - 1)
    D = cdist(X, X)
    np.fill_diagonal(D, np.inf)
    nbrs = np.argsort(D, axis=1, kind="stable")[:, :k]
    d = np.take_along_axis(D, nbrs, axis=1)
    k_distance = d[:, -1]
    reach = np.maximum(k_distance[nbrs], d)
    lrd = 1.0 / np.maximum(reach.mean(axis=1), LOF_DISTANCE_FLOOR)
    train_lof = lrd[nbrs].mean(axis=1) / lrd
    threshold = max(1.5, float(np.percentile(train_lof, 95)))
    return LofModel(X.copy(), k, k_distance, lrd, train_lof, threshold)


def lof_score(model: LofModel, x) -> float:
    values = x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)
    return float(model.score(values[None, :])[0])


# ---------------------------------------------------------------------------

def ood_rate(detector, counterfactuals) -> float:
    """Fraction of counterfactuals the detector flags as out-of-distribution."""
    X = _as_matrix(counterfactuals) if len(counterfactuals) else np.empty((0, 0))
    if X.shape[0] == 0:
        raise ValueError("no counterfactuals to assess")
    ref_len = detector.reference.shape[1] if isinstance(detector, LofModel) else None
    if ref_len is not None and X.shape[1] != ref_len:
        raise ValueError(f"series length {X.shape[1]} != detector input length {ref_len}")
    return float(np.mean(detector.is_outlier(X)))


@dataclass
class OodConfig:
    if_trees: int = 100
    if_psi: int = 256
    if_contamination: float = 0.05
    lof_k: int = 20
    per_class: bool = False
    seed: int = 0


def ood_rates(train: LabeledDataset, counterfactuals, target_classes=None,
              cfg: OodConfig | None = None) -> dict:
    """IF and LOF out-of-distribution rates for a set of counterfactuals.

    In per-class mode each counterfactual is judged by detectors fitted only on
    training members of its target class.
    """
    cfg = cfg or OodConfig()
    X = _as_matrix(counterfactuals)
    if X.shape[0] == 0:
        raise ValueError("no counterfactuals to assess")
    if not cfg.per_class:
        forest = fit_iforest(train, cfg.if_trees, cfg.if_psi, cfg.if_contamination, cfg.seed)
        lof = fit_lof(train, cfg.lof_k)
        return {"if_rate": ood_rate(forest, X), "lof_rate": ood_rate(lof, X)}
    if target_classes is None:
        raise ValueError("per-class mode needs the counterfactual target classes")
    target_classes = np.asarray(target_classes)
    if_flags = np.zeros(len(X), dtype=bool)
    lof_flags = np.zeros(len(X), dtype=bool)
    for c in np.unique(target_classes):
        members = train.X[train.y == c]
        rows = target_classes == c
        forest = fit_iforest(members, cfg.if_trees, cfg.if_psi, cfg.if_contamination, cfg.seed)
        lof = fit_lof(members, cfg.lof_k)
        if_flags[rows] = forest.is_outlier(X[rows])
        lof_flags[rows] = lof.is_outlier(X[rows])
    return {"if_rate": float(if_flags.mean()), "lof_rate": float(lof_flags.mean())}
