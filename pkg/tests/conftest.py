import numpy as np
import pytest

from infocels.classifier import FcnArch, FcnModel, TrainConfig, init_params, train
from infocels.data import LabeledDataset


def toy_dataset(n_per_class=20, length=32, noise=0.0, seed=0):
    """Class 0 is a constant -1 series, class 1 a constant +1 series."""
    rng = np.random.default_rng(seed)
    X = np.concatenate([-np.ones((n_per_class, length)), np.ones((n_per_class, length))])
    X = X + noise * rng.standard_normal(X.shape)
    y = np.repeat([0, 1], n_per_class)
    return LabeledDataset(X, y, 2, "toy")


def random_model(length=24, num_classes=2, batch_norm=False, seed=0, filters=(4, 6, 4)):
    arch = FcnArch(filters, (8, 5, 3), num_classes, length, batch_norm)
    return FcnModel(arch, init_params(arch, seed))


@pytest.fixture(scope="session")
def toy():
    return toy_dataset(noise=0.1)


@pytest.fixture(scope="session")
def toy_model(toy):
    return train(toy, TrainConfig(epochs=200, seed=0, desk_scale=True))


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import OUTCOMES
    except ImportError:
        return
    if OUTCOMES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(OUTCOMES):
            terminalreporter.write_line(OUTCOMES[n])
