import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from infocels.data import LabeledDataset
from infocels.nun import find_nun, target_from_probs


@pytest.mark.parametrize("probs, expected", [
    ([0.9, 0.1], 1),
    ([0.1, 0.9], 0),
    ([0.6, 0.1, 0.3], 2),
    ([0.5, 0.25, 0.25], 1),
    ([0.5, 0.5], 1),
])
def test_target_class(probs, expected):
    assert target_from_probs(probs) == expected


def test_forced_minimum():
    x = np.zeros(4)
    bg = LabeledDataset(np.array([[1.0, 1.0, 1.0, 1.0],     # class 1, distance 2
                                  [0.5, 0.5, 0.5, 0.5],     # class 1, distance 1
                                  [0.0, 0.0, 0.0, 0.1]]),   # class 0, closest overall
                        np.array([1, 1, 0]), 2)
    r = find_nun(x, bg, 1)
    assert r.index == 1 and r.distance == pytest.approx(1.0) and r.target_class == 1


def test_self_in_background():
    x = np.array([3.0, -1.0, 2.0])
    bg = LabeledDataset(np.array([[0.0, 0.0, 0.0], x]), np.array([0, 1]), 2)
    r = find_nun(x, bg, 1)
    assert r.index == 1 and r.distance == 0.0


def test_missing_class_and_length():
    bg = LabeledDataset(np.zeros((2, 3)), np.array([0, 0]), 2)
    with pytest.raises(LookupError):
        find_nun(np.zeros(3), bg, 1)
    with pytest.raises(ValueError):
        find_nun(np.zeros(4), bg, 0)


def test_matches_brute_force_scan_on_100_datasets():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n, T, C = rng.integers(3, 30), rng.integers(2, 12), rng.integers(2, 4)
        y = rng.integers(0, C, n)
        y[:C] = np.arange(C)
        bg = LabeledDataset(rng.standard_normal((n, T)), y, int(C))
        x = rng.standard_normal(T)
        target = int(rng.integers(0, C))
        best, best_d = None, np.inf
        for i in range(n):
            if y[i] == target:
                d = np.sqrt(sum((bg.X[i, t] - x[t]) ** 2 for t in range(T)))
                if d < best_d:
                    best, best_d = i, d
        r = find_nun(x, bg, target)
        assert r.index == best
        assert r.distance == pytest.approx(best_d, rel=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_nun_is_closest_of_its_class(seed):
    rng = np.random.default_rng(seed)
    bg = LabeledDataset(rng.standard_normal((12, 5)), np.tile([0, 1, 2], 4), 3)
    x = rng.standard_normal(5)
    r = find_nun(x, bg, 2)
    members = bg.X[bg.y == 2]
    assert r.distance <= np.min(np.linalg.norm(members - x, axis=1)) + 1e-12
    assert bg.y[r.index] == 2
