import dataclasses

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from conftest import random_model
from infocels.cels import (CelsConfig, explain, grad_theta, loss_budget, loss_max, loss_treg,
                           normalize_saliency, perturb, total_loss, _regularizer_grad)
from infocels.classifier import predict_proba


def fd_theta(model, x, nun, theta, target, lam, coords, h=1e-4):
    def f(th):
        return total_loss(predict_proba(model, perturb(x, nun, th)), th, target, lam)
    out = []
    for t in coords:
        e = np.zeros_like(theta)
        e[t] = h
        out.append((f(theta + e) - f(theta - e)) / (2 * h))
    return np.array(out)


def test_grad_theta_matches_finite_differences():
    rng = np.random.default_rng(0)
    for trial in range(10):
        model = random_model(seed=trial, batch_norm=trial % 2 == 1)
        T = model.length
        x, nun = rng.standard_normal(T), rng.standard_normal(T)
        theta = rng.uniform(0.05, 0.95, T)
        lam, target = rng.uniform(0.1, 2.0), int(rng.integers(2))
        coords = rng.choice(T, 10, replace=False)
        g = grad_theta(model, x, nun, theta, target, lam)[coords]
        fd = fd_theta(model, x, nun, theta, target, lam, coords)
        assert np.max(np.abs(g - fd) / np.maximum(np.abs(fd), 1e-8)) < 1e-3


def test_grad_nun_equals_x_is_regularizer_only():
    model = random_model()
    x = np.random.default_rng(1).standard_normal(model.length)
    theta = np.random.default_rng(2).uniform(0, 1, model.length)
    np.testing.assert_allclose(grad_theta(model, x, x, theta, 1, 3.0), _regularizer_grad(theta), atol=1e-15)


def test_constant_theta_has_zero_treg_gradient():
    theta = np.full(9, 0.3)
    np.testing.assert_allclose(_regularizer_grad(theta), np.full(9, 1 / 9))


def test_grad_theta_rejects_out_of_box():
    model = random_model()
    with pytest.raises(ValueError):
        grad_theta(model, np.zeros(24), np.ones(24), np.full(24, 1.2), 0, 1.0)


def test_perturb_examples():
    np.testing.assert_array_equal(perturb([0, 2], [2, 0], [0.5, 0.25]), [1.0, 1.5])
    with pytest.raises(ValueError):
        perturb([0, 1], [1, 0, 1], [0, 0])


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 40).flatmap(lambda T: st.tuples(
    arrays(np.float64, T, elements=st.floats(-1e6, 1e6)),
    arrays(np.float64, T, elements=st.floats(-1e6, 1e6)),
    arrays(np.float64, T, elements=st.floats(0, 1)))))
def test_perturb_identities_and_convexity(triple):
    x, nun, theta = triple
    assert np.array_equal(perturb(x, nun, np.zeros_like(x)), x)
    assert np.array_equal(perturb(x, nun, np.ones_like(x)), nun)
    xp = perturb(x, nun, theta)
    tol = 1e-9 * np.maximum(np.abs(x), np.abs(nun)) + 1e-12
    assert np.all(xp >= np.minimum(x, nun) - tol)
    assert np.all(xp <= np.maximum(x, nun) + tol)


def test_loss_arithmetic():
    assert loss_max([0.0, 1.0], 1) == 0.0
    assert loss_max([1.0, 0.0], 1) == 1.0
    assert loss_max([0.3, 0.7], 1) == pytest.approx(0.3)
    assert loss_budget(np.zeros(4)) == 0.0
    assert loss_budget(np.ones(4)) == 1.0
    assert loss_budget([0.2, 0.4, 0.6]) == pytest.approx(0.4)
    assert loss_treg(np.full(5, 0.7)) == 0.0
    assert loss_treg([0.0, 1.0]) == 0.5
    assert loss_treg([0.0, 1.0, 0.0]) == pytest.approx(2 / 3)
    assert total_loss([0.2, 0.8], np.zeros(3), 0, 0.0) == 0.0


def test_total_loss_components():
    # pick theta with budget 0.4 and treg 0.1 exactly: T=2, theta=[a, b]
    # (a+b)/2 = 0.4 and (a-b)^2/2 = 0.1  ->  a - b = sqrt(0.2)
    d = np.sqrt(0.2)
    theta = np.array([0.4 + d / 2, 0.4 - d / 2])
    probs = np.array([0.3, 0.7])
    assert total_loss(probs, theta, 1, 1.0) == pytest.approx(0.8)
    assert total_loss(probs, theta, 1, 2.0) == pytest.approx(1.1)


def test_normalize_saliency():
    np.testing.assert_array_equal(normalize_saliency([0.2, 0.8], 0.5), [0, 1])
    np.testing.assert_array_equal(normalize_saliency([0.5, 0.5000001], 0.5), [0, 1])
    np.testing.assert_array_equal(normalize_saliency(np.zeros(3), 0.5), np.zeros(3))
    for k in (0.0, 1.0):
        with pytest.raises(ValueError):
            normalize_saliency([0.1], k)


def test_config_preconditions():
    for bad in (dict(lam=-1), dict(learning_rate=0), dict(max_epochs=0), dict(mode="x"),
                dict(threshold=1.0)):
        with pytest.raises(ValueError):
            CelsConfig(**bad)


def test_info_cels_flips_toy(toy, toy_model):
    for i in (0, 3, 7):
        r = explain(toy_model, toy[i], toy, CelsConfig(seed=i))
        assert r.flipped and r.target_probability > 0.5
        assert r.original_class == 0 and r.target_class == 1 and r.predicted_class == 1


def test_trace_stays_in_box_and_cels_is_binary(toy, toy_model):
    cfg = CelsConfig(mode="cels", seed=1, record_trace=True, max_epochs=200)
    r = explain(toy_model, toy[2], toy, cfg)
    assert all(np.all((t >= 0) & (t <= 1)) for t in r.trace)
    assert set(np.unique(r.saliency)) <= {0.0, 1.0}
    np.testing.assert_array_equal(r.cf.values, perturb(toy[2], toy.X[r.nun_index], r.saliency))


def test_modes_share_the_optimization(toy, toy_model):
    cfg = CelsConfig(seed=4, max_epochs=150)
    a = explain(toy_model, toy[5], toy, cfg)
    b = explain(toy_model, toy[5], toy, dataclasses.replace(cfg, mode="cels"))
    np.testing.assert_array_equal(a.raw_saliency, b.raw_saliency)
    np.testing.assert_array_equal(a.saliency, a.raw_saliency)
    np.testing.assert_array_equal(b.saliency, normalize_saliency(a.raw_saliency, 0.5))
    assert a.epochs_run == b.epochs_run


def test_explain_deterministic(toy, toy_model):
    cfg = CelsConfig(seed=11, max_epochs=100)
    a, b = explain(toy_model, toy[25], toy, cfg), explain(toy_model, toy[25], toy, cfg)
    np.testing.assert_array_equal(a.cf.values, b.cf.values)
    assert a.to_record() == b.to_record()


def test_early_stopping_ends_run(toy, toy_model):
    r = explain(toy_model, toy[1], toy, CelsConfig(seed=0, patience=5, min_delta=1.0))
    # epoch 1 sets the best loss, then 5 epochs without improvement
    assert r.epochs_run == 6


def test_result_record_is_json_ready(toy, toy_model):
    import json
    r = explain(toy_model, toy[0], toy, CelsConfig(max_epochs=20))
    json.dumps(r.to_record())
