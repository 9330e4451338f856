"""Wachter-style counterfactual baseline: optimize x' directly.

Loss: (1 - P(target | x'))^2 + beta * sum|x - x'|, minimized by Adam from x' = x.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cels import CounterfactualResult, _values
from .classifier import FcnModel, predict_proba, prob_and_input_gradient
from .data import LabeledDataset, TimeSeries
from .nun import find_nun, target_from_probs
from .optim import Adam, EarlyStopping


@dataclass
class WcfConfig:
    learning_rate: float = 0.01
    max_epochs: int = 1000
    l1_weight: float = 0.1
    patience: int = 100
    min_delta: float = 1e-6
    seed: int = 0
    record_trace: bool = False

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError(f"learning rate must be > 0, got {self.learning_rate}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.l1_weight < 0:
            raise ValueError(f"l1_weight must be >= 0, got {self.l1_weight}")


def wcf_loss(probs, x, xp, target: int, beta: float) -> float:
    return float((1.0 - probs[target]) ** 2 + beta * np.sum(np.abs(x - xp)))


def wcf_loss_and_grad(model: FcnModel, x, xp, target: int, beta: float):
    """Loss and its (sub)gradient in x'; the L1 subgradient is 0 where x' == x."""
    x, xp = _values(x), _values(xp)
    probs, dp = prob_and_input_gradient(model, xp, target)
    loss = wcf_loss(probs, x, xp, target, beta)
    grad = -2.0 * (1.0 - probs[target]) * dp + beta * np.sign(xp - x)
    return loss, grad, probs


def explain_wcf(model: FcnModel, x, background: LabeledDataset, cfg: WcfConfig) -> CounterfactualResult:
    xv = _values(x)
    probs0 = predict_proba(model, xv)
    z = int(np.argmax(probs0))
    z_target = target_from_probs(probs0)
    # nun is not used by the optimization; checked so failure modes match cels.explain
    nn = find_nun(xv, background, z_target)

    xp = xv.copy()
    adam = Adam(cfg.learning_rate)
    stopper = EarlyStopping(cfg.patience, cfg.min_delta)
    trace = [xp.copy()] if cfg.record_trace else None
    epochs_run = 0
    for _ in range(cfg.max_epochs):
        loss, grad, _ = wcf_loss_and_grad(model, xv, xp, z_target, cfg.l1_weight)
        if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite loss or gradient at epoch {epochs_run + 1}")
        xp = adam.step(xp, grad)
        epochs_run += 1
        if trace is not None:
            trace.append(xp.copy())
        if stopper.update(loss):
            break

    probs = predict_proba(model, xp)
    delta = np.abs(xp - xv)
    peak = delta.max()
    saliency = delta / peak if peak > 0 else np.zeros_like(delta)
    return CounterfactualResult(
        cf=TimeSeries(xp, int(np.argmax(probs))),
        saliency=saliency,
        original_class=z,
        target_class=z_target,
        target_probability=float(probs[z_target]),
        flipped=bool(np.argmax(probs) != z),
        epochs_run=epochs_run,
        final_loss=wcf_loss(probs, xv, xp, z_target, cfg.l1_weight),
        probabilities=probs,
        method="wcf",
        nun_index=nn.index,
        raw_saliency=saliency,
        trace=trace,
    )
