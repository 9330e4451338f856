"""Desk-scale reference setup: synthetic 2-class data and a small FCN.

Shared by the acceptance suite and ``scripts/desk_experiment.py`` so both
exercise the same configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

from .classifier import FcnModel, TrainConfig, train
from .data import LabeledDataset, make_synthetic


@dataclass(frozen=True)
class DeskSetup:
    n_per_class: int = 25
    length: int = 64
    separation: float = 1.0
    noise: float = 0.3
    # Short training keeps the softmax off saturation along x -> nun, so the
    # target-probability gradient is not swamped by the budget term at init.
    train_epochs: int = 30


@dataclass
class DeskRun:
    train: LabeledDataset
    test: LabeledDataset
    model: FcnModel
    rep: int


def build(rep: int = 0, setup: DeskSetup = DeskSetup()) -> DeskRun:
    """Data, split and classifier for repetition ``rep`` (all seeds derive from it)."""
    kw = dict(n_per_class=setup.n_per_class, length=setup.length,
              separation=setup.separation, noise=setup.noise)
    train_ds = make_synthetic(seed=10 * rep + 1, name="desk", **kw)
    test_ds = make_synthetic(seed=10 * rep + 2, name="desk", **kw)
    model = train(train_ds, TrainConfig(epochs=setup.train_epochs, seed=rep, desk_scale=True))
    return DeskRun(train_ds, test_ds, model, rep)


def explain_seed(rep: int) -> int:
    return 1000 * rep
