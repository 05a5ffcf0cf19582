import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ensembleguard.recurrent import (KINDS, PARAM_NAMES, Adam, RecurrentConfig, analytic_gradients,
                                     forward, gradient_check, hidden_state, init_recurrent,
                                     load_recurrent, predict, predict_proba, save_recurrent,
                                     train_recurrent)


def _cfg(kind, **kw):
    return RecurrentConfig(kind=kind, **kw)


@pytest.mark.parametrize("kind", KINDS)
def test_init_deterministic_and_default_shape(kind):
    a = init_recurrent(_cfg(kind, seed=3), 41, 5)
    b = init_recurrent(_cfg(kind, seed=3), 41, 5)
    for k in PARAM_NAMES:
        assert a.params[k].tobytes() == b.params[k].tobytes()
    assert a.params["V"].shape == (128, 5)
    G = 4 if kind == "LSTM" else 3
    assert a.params["W"].shape == (41, G * 128) and a.params["U"].shape == (128, G * 128)


@pytest.mark.parametrize("kind", KINDS)
def test_no_dropout_train_equals_eval(kind):
    m = init_recurrent(_cfg(kind, hidden=16, dropout_rate=0.0), 6, 3)
    x = np.random.default_rng(0).normal(size=(5, 6))
    assert np.array_equal(forward(m, x, "train", rng=1), forward(m, x, "eval"))


@pytest.mark.parametrize("kind", KINDS)
def test_zero_weights_give_uniform(kind):
    m = init_recurrent(_cfg(kind, hidden=8), 4, 5)
    for k in PARAM_NAMES:
        m.params[k][...] = 0.0
    p = forward(m, np.random.default_rng(1).normal(size=4))
    assert np.allclose(p, 0.2, atol=1e-15)


@pytest.mark.parametrize("kind", KINDS)
def test_eval_deterministic_and_normalized(kind):
    m = init_recurrent(_cfg(kind, hidden=12), 7, 4)
    x = np.random.default_rng(2).normal(size=(30, 7))
    a, b = forward(m, x), forward(m, x)
    assert np.array_equal(a, b)
    assert np.all(np.abs(a.sum(1) - 1.0) < 1e-9)


@given(st.sampled_from(KINDS), st.integers(0, 1000), st.integers(1, 4), st.integers(2, 6))
def test_softmax_normalization_property(kind, seed, T, C):
    m = init_recurrent(_cfg(kind, hidden=6, seed=seed), 3, C)
    x = np.random.default_rng(seed).normal(scale=5.0, size=(4, T, 3))
    p = forward(m, x, "train", rng=seed)
    assert np.all(np.abs(p.sum(1) - 1.0) < 1e-9) and np.all(p >= 0)


@pytest.mark.parametrize("kind", KINDS)
def test_dropout_monte_carlo_unbiased(kind):
    m = init_recurrent(_cfg(kind, hidden=16, dropout_rate=0.2, seed=4), 5, 3)
    x = np.random.default_rng(3).normal(size=5)
    ref = hidden_state(m, x)
    draws = hidden_state(m, np.tile(x, (10_000, 1)), "train", rng=11)
    err = np.linalg.norm(draws.mean(0) - ref) / np.linalg.norm(ref)
    assert err < 0.02


@pytest.mark.parametrize("kind", KINDS)
def test_toy_memorization(kind):
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(10, 4)), np.array([0, 1] * 5)
    _, trace = train_recurrent(X, _cfg(kind, hidden=16, epochs=200, batch_size=10,
                                       learning_rate=1e-2, dropout_rate=0.0), y=y)
    assert trace.train_accuracy == 1.0


@pytest.mark.parametrize("kind", KINDS)
def test_zero_learning_rate_freezes_weights(kind):
    rng = np.random.default_rng(1)
    X, y = rng.normal(size=(40, 3)), rng.integers(0, 2, 40)
    cfg = _cfg(kind, hidden=8, epochs=4, batch_size=40, learning_rate=0.0, dropout_rate=0.0)
    model, trace = train_recurrent(X, cfg, y=y)
    init = init_recurrent(cfg, 3, 2)
    for k in PARAM_NAMES:
        assert np.array_equal(model.params[k], init.params[k])
    assert max(trace.losses) - min(trace.losses) < 1e-12


@pytest.mark.parametrize("kind", KINDS)
def test_training_deterministic(kind):
    rng = np.random.default_rng(2)
    X, y = rng.normal(size=(64, 5)), rng.integers(0, 3, 64)
    cfg = _cfg(kind, hidden=8, epochs=3, batch_size=16)
    m1, t1 = train_recurrent(X, cfg, y=y)
    m2, t2 = train_recurrent(X, cfg, y=y)
    assert t1 == t2
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in PARAM_NAMES)


@pytest.mark.parametrize("kind", KINDS)
def test_first_epoch_loss_near_chance_on_shuffled_labels(kind):
    rng = np.random.default_rng(5)
    X, y = rng.normal(size=(2000, 10)), rng.permutation(np.arange(2000) % 4)
    _, trace = train_recurrent(X, _cfg(kind, hidden=32, epochs=1), y=y)
    assert trace.losses[0] <= math.log(4) + 0.1


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("T", [1, 3])
def test_gradient_check_small(kind, T):
    m = init_recurrent(_cfg(kind, hidden=8, seed=T), 4, 3)
    rng = np.random.default_rng(T)
    X, y = rng.normal(size=(2, T, 4)), np.array([0, 2])
    assert gradient_check(m, (X, y)) < 1e-4


@pytest.mark.parametrize("kind", KINDS)
def test_zero_input_gives_zero_input_weight_gradient(kind):
    m = init_recurrent(_cfg(kind, hidden=8), 4, 3)
    _, g = analytic_gradients(m, np.zeros((3, 2, 4)), np.array([0, 1, 2]))
    assert np.all(g["W"] == 0.0)
    assert np.any(g["b"] != 0.0)


def test_adam_zero_gradient_is_noop():
    params = {"a": np.array([1.0, -2.0]), "b": np.ones((2, 2))}
    before = {k: v.copy() for k, v in params.items()}
    opt = Adam(params, lr=0.1)
    for _ in range(3):
        opt.step(params, {k: np.zeros_like(v) for k, v in params.items()})
    assert all(np.array_equal(params[k], before[k]) for k in params)


def test_adam_first_step_is_lr_times_sign():
    params = {"a": np.array([0.0, 0.0])}
    Adam(params, lr=0.01).step(params, {"a": np.array([3.0, -0.5])})
    assert np.allclose(params["a"], [-0.01, 0.01], atol=1e-9)


def test_config_validation():
    for bad in (dict(kind="RNN"), dict(hidden=0), dict(dropout_rate=1.0), dict(epochs=0),
                dict(learning_rate=-1.0)):
        with pytest.raises(ValueError):
            RecurrentConfig(**bad).validate()


@pytest.mark.parametrize("kind", KINDS)
def test_save_load_round_trip(kind, tmp_path):
    rng = np.random.default_rng(6)
    X, y = rng.normal(size=(50, 4)), rng.integers(0, 3, 50)
    m, _ = train_recurrent(X, _cfg(kind, hidden=8, epochs=2, seed=9), y=y)
    save_recurrent(m, tmp_path / "m.weights")
    m2 = load_recurrent(tmp_path / "m.weights")
    assert m2.config == m.config
    assert np.array_equal(predict_proba(m2, X), predict_proba(m, X))
    assert np.array_equal(predict(m2, X), predict(m, X))
    a = (tmp_path / "m.weights").read_bytes()
    save_recurrent(m2, tmp_path / "n.weights")
    assert (tmp_path / "n.weights").read_bytes() == a


@pytest.mark.slow
@pytest.mark.parametrize("kind", KINDS)
def test_gradient_check_default_width(kind):
    m = init_recurrent(_cfg(kind, seed=0), 6, 5)
    rng = np.random.default_rng(0)
    X, y = rng.normal(size=(2, 1, 6)), np.array([1, 4])
    assert gradient_check(m, (X, y)) < 1e-4
