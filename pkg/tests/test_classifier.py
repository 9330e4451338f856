import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_model, toy_dataset
from infocels.classifier import (CheckpointError, FcnArch, FcnModel, TrainConfig, accuracy,
                                 input_gradient, load_model, predict, predict_proba,
                                 prob_and_input_gradient, save_model, train, _softmax)
from infocels.data import LabeledDataset


def fd_input_gradient(model, x, c, h=1e-4, coords=None):
    coords = range(x.size) if coords is None else coords
    out = {}
    for t in coords:
        e = np.zeros_like(x)
        e[t] = h
        out[t] = (predict_proba(model, x + e)[c] - predict_proba(model, x - e)[c]) / (2 * h)
    return out


@pytest.mark.parametrize("batch_norm", [False, True])
def test_input_gradient_matches_finite_differences(batch_norm):
    rng = np.random.default_rng(1)
    model = random_model(batch_norm=batch_norm, seed=3)
    x = rng.standard_normal(model.length)
    for c in (0, 1):
        g = input_gradient(model, x, c)
        coords = rng.choice(x.size, 10, replace=False)
        fd = fd_input_gradient(model, x, c, coords=coords)
        for t in coords:
            rel = abs(g[t] - fd[t]) / max(abs(fd[t]), 1e-8)
            assert rel < 1e-3 or abs(g[t] - fd[t]) < 1e-10


def test_gradient_conservation_and_purity():
    model = random_model(num_classes=3, seed=5)
    x = np.random.default_rng(0).standard_normal(model.length)
    total = sum(input_gradient(model, x, c) for c in range(3))
    np.testing.assert_allclose(total, 0.0, atol=1e-12)
    np.testing.assert_array_equal(input_gradient(model, x, 1), input_gradient(model, x.copy(), 1))
    with pytest.raises(ValueError):
        input_gradient(model, x, 3)


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 24, elements=st.floats(-50, 50)))
def test_softmax_is_a_distribution(x):
    probs, _ = predict(random_model(seed=2), x)
    assert np.all((probs >= 0) & (probs <= 1))
    assert abs(probs.sum() - 1) < 1e-6


def test_softmax_extremes_stay_finite():
    p = _softmax(np.array([[1000.0, -1000.0], [0.0, 0.0]]))
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p.sum(axis=1), 1.0)


def test_tie_break_smallest_index(monkeypatch):
    import infocels.classifier as clf
    monkeypatch.setattr(clf, "predict_proba", lambda model, x: np.array([0.5, 0.5]))
    assert clf.predict(None, np.zeros(4))[1] == 0


def test_toy_training_reaches_full_accuracy(toy, toy_model):
    assert accuracy(toy_model, toy) == 1.0
    assert toy_model.history[-1][2] == 1.0
    assert len(toy_model.history) == 200
    assert predict(toy_model, toy.X[-1])[1] == 1


def test_training_deterministic():
    ds = toy_dataset(n_per_class=6, length=16, noise=0.2)
    cfg = TrainConfig(epochs=5, seed=9, desk_scale=True)
    a, b = train(ds, cfg), train(ds, cfg)
    for n in a.params:
        np.testing.assert_array_equal(a.params[n], b.params[n])


def test_training_with_batch_norm_and_minibatches():
    ds = toy_dataset(n_per_class=8, length=16, noise=0.2)
    model = train(ds, TrainConfig(epochs=30, seed=1, batch_size=4))
    assert model.arch.batch_norm and model.arch.filters == (128, 256, 128)
    assert accuracy(model, ds) == 1.0


def test_label_permutation_symmetry():
    # swapping labels must still be learnable to the same accuracy
    ds = toy_dataset(n_per_class=10, length=16, noise=0.1)
    swapped = LabeledDataset(ds.X, 1 - ds.y, 2)
    model = train(swapped, TrainConfig(epochs=100, seed=0, desk_scale=True))
    assert accuracy(model, swapped) == 1.0


def test_config_preconditions():
    with pytest.raises(ValueError):
        TrainConfig(learning_rate=0)
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)


def test_prob_and_gradient_consistent():
    model = random_model(seed=4)
    x = np.linspace(-1, 1, model.length)
    probs, g = prob_and_input_gradient(model, x, 1)
    np.testing.assert_array_equal(probs, predict_proba(model, x))
    np.testing.assert_array_equal(g, input_gradient(model, x, 1))


def test_wrong_length_rejected():
    with pytest.raises(ValueError):
        predict_proba(random_model(), np.zeros(7))


@pytest.mark.parametrize("batch_norm", [False, True])
def test_checkpoint_round_trip_bit_exact(tmp_path, batch_norm):
    model = random_model(batch_norm=batch_norm, seed=8)
    save_model(model, tmp_path / "m.fcn")
    back = load_model(tmp_path / "m.fcn")
    assert back.arch == model.arch
    for n in model.params:
        assert back.params[n].tobytes() == model.params[n].tobytes()
    save_model(back, tmp_path / "m2.fcn")
    assert (tmp_path / "m.fcn").read_bytes() == (tmp_path / "m2.fcn").read_bytes()


def test_checkpoint_rejects_bad_files(tmp_path):
    model = random_model()
    save_model(model, tmp_path / "m.fcn")
    blob = (tmp_path / "m.fcn").read_bytes()
    (tmp_path / "magic.fcn").write_bytes(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_model(tmp_path / "magic.fcn")
    (tmp_path / "ver.fcn").write_bytes(blob[:4] + b"\x07\x00" + blob[6:])
    with pytest.raises(CheckpointError, match="version"):
        load_model(tmp_path / "ver.fcn")
    (tmp_path / "short.fcn").write_bytes(blob[:-10])
    with pytest.raises(CheckpointError, match=f"byte offset {len(blob) - 10}"):
        load_model(tmp_path / "short.fcn")
    (tmp_path / "long.fcn").write_bytes(blob + b"\x00")
    with pytest.raises(CheckpointError):
        load_model(tmp_path / "long.fcn")
