"""Saliency-guided counterfactuals (CELS and its un-thresholded variant Info-CELS).

A saliency map theta in [0, 1]^T interpolates every time step between the query
series and its nearest unlike neighbour. theta is learned by projected Adam on

    lambda * (1 - P(target | x')) + mean(theta) + sum((theta_t - theta_{t+1})^2) / T

CELS thresholds the learned map to {0, 1} before building the final
counterfactual; Info-CELS keeps the raw map.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .classifier import FcnModel, predict_proba, prob_and_input_gradient
from .data import LabeledDataset, TimeSeries
from .nun import find_nun, target_from_probs
from .optim import Adam, EarlyStopping

MODES = ("cels", "info-cels")


@dataclass
class CelsConfig:
    lam: float = 1.0
    learning_rate: float = 0.1
    max_epochs: int = 1000
    mode: str = "info-cels"
    threshold: float = 0.5
    patience: int = 100
    min_delta: float = 1e-6
    seed: int = 0
    record_trace: bool = False

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not 0 < self.threshold < 1:
            raise ValueError(f"threshold k must lie in (0, 1), got {self.threshold}")


@dataclass
class CounterfactualResult:
    cf: TimeSeries
    saliency: np.ndarray
    original_class: int
    target_class: int
    target_probability: float
    flipped: bool
    epochs_run: int
    final_loss: float
    probabilities: np.ndarray
    method: str = "info-cels"
    nun_index: Optional[int] = None
    raw_saliency: Optional[np.ndarray] = None
    trace: Optional[list] = field(default=None, repr=False)

    @property
    def predicted_class(self) -> int:
        return int(np.argmax(self.probabilities))

    def to_record(self) -> dict:
        return {
            "method": self.method,
            "original_class": self.original_class,
            "target_class": self.target_class,
            "predicted_class": self.predicted_class,
            "target_probability": self.target_probability,
            "flipped": self.flipped,
            "epochs_run": self.epochs_run,
            "final_loss": self.final_loss,
            "nun_index": self.nun_index,
        }


def _values(x) -> np.ndarray:
    return x.values if isinstance(x, TimeSeries) else np.asarray(x, dtype=np.float64)


def perturb(x, nun, theta) -> np.ndarray:
    """x' = x * (1 - theta) + nun * theta, elementwise."""
    x, nun, theta = _values(x), _values(nun), np.asarray(theta, dtype=np.float64)
    if not x.shape == nun.shape == theta.shape:
        raise ValueError(f"length mismatch: x {x.shape}, nun {nun.shape}, theta {theta.shape}")
    return x * (1.0 - theta) + nun * theta


def loss_max(probs, target: int) -> float:
    return float(1.0 - np.asarray(probs)[target])


def loss_budget(theta) -> float:
    return float(np.mean(theta))


def loss_treg(theta) -> float:
    # divisor is T although the sum has T-1 terms
    theta = np.asarray(theta, dtype=np.float64)
    return float(np.sum(np.diff(theta) ** 2) / theta.size)


def total_loss(probs, theta, target: int, lam: float) -> float:
    return lam * loss_max(probs, target) + loss_budget(theta) + loss_treg(theta)


def _regularizer_grad(theta: np.ndarray) -> np.ndarray:
    T = theta.size
    grad = np.full(T, 1.0 / T)
    d = theta[:-1] - theta[1:]
    grad[:-1] += 2.0 / T * d
    grad[1:] -= 2.0 / T * d
    return grad


def _loss_and_grad(model, x, nun, theta, target, lam):
    xp = x * (1.0 - theta) + nun * theta
    probs, dp_dx = prob_and_input_gradient(model, xp, target)
    loss = total_loss(probs, theta, target, lam)
    grad = -lam * dp_dx * (nun - x) + _regularizer_grad(theta)
    return loss, grad, probs


def grad_theta(model: FcnModel, x, nun, theta, target: int, lam: float) -> np.ndarray:
    """Analytic gradient of the total loss with respect to the saliency map."""
    theta = np.asarray(theta, dtype=np.float64)
    if np.any(theta < 0) or np.any(theta > 1):
        raise ValueError("theta must lie in [0, 1]")
    return _loss_and_grad(model, _values(x), _values(nun), theta, target, lam)[1]


def normalize_saliency(theta, k: float) -> np.ndarray:
    """Binarize: 1 where theta > k (strict), else 0."""
    if not 0 < k < 1:
        raise ValueError(f"threshold k must lie in (0, 1), got {k}")
    return (np.asarray(theta) > k).astype(np.float64)


def explain(model: FcnModel, x, background: LabeledDataset, cfg: CelsConfig) -> CounterfactualResult:
    """Learn a saliency map for ``x`` and return the resulting counterfactual."""
    xv = _values(x)
    probs0 = predict_proba(model, xv)
    z = int(np.argmax(probs0))
    z_target = target_from_probs(probs0)
    nn = find_nun(xv, background, z_target)
    nun = nn.nun.values

    rng = np.random.default_rng(cfg.seed)
    theta = rng.uniform(0.0, 1.0, size=xv.size)
    adam = Adam(cfg.learning_rate)
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    trace = [theta.copy()] if cfg.record_trace else None
    epochs_run = 0
    for _ in range(cfg.max_epochs):
        loss, grad, _ = _loss_and_grad(model, xv, nun, theta, z_target, cfg.lam)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite loss or gradient at epoch {epochs_run + 1}")
        theta = np.clip(adam.step(theta, grad), 0.0, 1.0)
        epochs_run += 1
        if trace is not None:
            trace.append(theta.copy())
        if stopper.update(loss):
            break

    raw = theta
    final_probs = predict_proba(model, perturb(xv, nun, raw))
    final_loss = total_loss(final_probs, raw, z_target, cfg.lam)
    if cfg.mode == "cels":
        theta = normalize_saliency(raw, cfg.threshold)
    cf = perturb(xv, nun, theta)
    probs = predict_proba(model, cf)
    return CounterfactualResult(
        cf=TimeSeries(cf, int(np.argmax(probs))),
        saliency=theta,
        original_class=z,
        target_class=z_target,
        target_probability=float(probs[z_target]),
        flipped=bool(np.argmax(probs) != z),
        epochs_run=epochs_run,
        final_loss=final_loss,
        probabilities=probs,
        method=cfg.mode,
        nun_index=nn.index,
        raw_saliency=raw,
        trace=trace,
    )
