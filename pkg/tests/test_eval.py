import math
import warnings

import numpy as np
import pytest

from funnol.eval import (ProtocolConfig, ProtocolResult, accuracy, bound_diagnostic,
                         empirical_margin_loss, logreg_fit, logreg_predict, norm_ratio,
                         run_sparsity_experiment, run_split_protocol)
from funnol.model import zero_params
from funnol.synthetic import sincos_classes
from funnol.train import TrainConfig


def test_logreg_separable_data():
    rng = np.random.default_rng(0)
    Z = np.concatenate([rng.normal(-3, 0.5, (30, 2)), rng.normal(3, 0.5, (30, 2))])
    y = np.repeat([0, 1], 30)
    m = logreg_fit(Z, y)
    _, pred = logreg_predict(m, Z)
    assert accuracy(pred, y) == 1.0
    assert m.converged


def test_logreg_intercept_only_matches_frequencies():
    Z = np.zeros((10, 1))
    y = np.array([0] * 7 + [1] * 3)
    m = logreg_fit(Z, y, l2=0.0)
    probs, lab = logreg_predict(m, np.zeros(1))
    np.testing.assert_allclose(probs, [0.7, 0.3], atol=1e-5)
    assert lab == 0


def test_logreg_shift_invariant_predictions():
    rng = np.random.default_rng(1)
    Z = rng.normal(size=(40, 3))
    y = (Z[:, 0] + 0.5 * rng.normal(size=40) > 0).astype(int)
    a = logreg_fit(Z, y)
    b = logreg_fit(Z + 100.0, y)
    pa, _ = logreg_predict(a, Z)
    pb, _ = logreg_predict(b, Z + 100.0)
    np.testing.assert_allclose(pa, pb, atol=1e-6)


def test_logreg_three_classes_and_validation():
    rng = np.random.default_rng(2)
    centres = np.array([[0, 4], [4, 0], [-4, -4]])
    y = np.arange(60) % 3
    Z = centres[y] + rng.normal(size=(60, 2))
    m = logreg_fit(Z, y)
    probs, pred = logreg_predict(m, Z)
    assert probs.shape == (60, 3) and accuracy(pred, y) > 0.95
    np.testing.assert_allclose(probs.sum(axis=1), 1.0)
    with pytest.raises(ValueError):
        logreg_fit(Z[:2], y[:2], num_classes=3)


def test_logreg_warns_when_not_converged():
    rng = np.random.default_rng(0)
    Z = rng.normal(size=(20, 2))
    with pytest.warns(RuntimeWarning):
        m = logreg_fit(Z, np.arange(20) % 2, max_iter=2)
    assert not m.converged


def test_predict_examples():
    from funnol.eval import LogisticModel
    m = LogisticModel(np.array([[0.0, 1.0], [0.0, -1.0]]), 2)
    _, lab = logreg_predict(m, np.array([2.0]))
    assert lab == 0
    probs, lab = logreg_predict(m, np.array([0.0]))
    assert lab == 0 and probs[0] == 0.5


def test_margin_examples():
    s = np.array([[0.9, 0.1]])
    assert empirical_margin_loss(s, [0], 0.5) == 0.0
    assert empirical_margin_loss(s, [0], 1.0) == 1.0
    assert empirical_margin_loss(np.array([[0.5, 0.5]]), [0], 0.0) == 1.0


def test_margin_zero_is_error_rate_and_monotone():
    rng = np.random.default_rng(0)
    s = rng.normal(size=(200, 3))
    y = rng.integers(0, 3, 200)
    err = np.mean(np.argmax(s, axis=1) != y)
    assert empirical_margin_loss(s, y, 0.0) == pytest.approx(err)
    losses = [empirical_margin_loss(s, y, g) for g in np.linspace(0, 3, 13)]
    assert all(a <= b for a, b in zip(losses, losses[1:]))
    with pytest.raises(ValueError):
        empirical_margin_loss(s, y, -0.1)


@pytest.mark.parametrize("k", [2, 3, 5])
def test_bound_identity_and_rank_one(k):
    p = zero_params(k, k, k, "rnn")
    p.matrices.update({n: np.eye(k) for n in ("M", "V", "W", "U")})
    assert bound_diagnostic(p, 1.0) == pytest.approx(4 * math.log(k))
    ones = np.ones((k, k))
    p.matrices.update({n: ones for n in ("M", "V", "W", "U")})
    assert bound_diagnostic(p, 1.0) == pytest.approx(4 * k * math.log(k))
    assert bound_diagnostic(p, 2.0) == pytest.approx(bound_diagnostic(p, 1.0) / 4)


def test_norm_ratio_range():
    rng = np.random.default_rng(0)
    for _ in range(10):
        a = rng.normal(size=(4, 4))
        assert 1 / 4 - 1e-12 <= norm_ratio(a) <= 1 + 1e-12
    with pytest.raises(ValueError):
        norm_ratio(np.zeros((2, 2)))


def test_bound_lstm_warns():
    p = zero_params(2, 2, 2, "lstm")
    for n in p.names():
        p.matrices[n] = np.ones_like(p[n])
    with pytest.warns(RuntimeWarning, match="LSTM"):
        bound_diagnostic(p, 1.0)
    with pytest.raises(ValueError):
        bound_diagnostic(p, 0.0)


def test_protocol_result_summary():
    r = ProtocolResult("fpca", [0.8, 0.9, 1.0])
    assert r.mean == pytest.approx(0.9)
    assert r.se == pytest.approx(0.1 / math.sqrt(3))
    assert ProtocolResult("fpca", [0.7]).se == 0.0
    assert r.summary()["splits"] == 3


@pytest.fixture(scope="module")
def sincos():
    return sincos_classes(n=60, J=16, noise_sd=0.2, seed=0)


def test_fpca_protocol_separable(sincos):
    cfg = ProtocolConfig(fpca_k=4)
    r = run_split_protocol(sincos, "fpca", 3, cfg)
    assert r.splits == 3 and r.mean > 0.95
    again = run_split_protocol(sincos, "fpca", 3, cfg)
    assert again.accuracies == r.accuracies


def test_protocol_threads_match_serial(sincos):
    a = run_split_protocol(sincos, "fpca", 4, ProtocolConfig(fpca_k=3))
    b = run_split_protocol(sincos, "fpca", 4, ProtocolConfig(fpca_k=3, threads=2))
    assert a.accuracies == b.accuracies


@pytest.mark.parametrize("method", ["funnol_c", "funnol_nc"])
def test_funnol_protocol_runs(sincos, method):
    cfg = ProtocolConfig(TrainConfig(latent_dim=3, epochs=3, learning_rate=0.01, batch_size=16))
    r = run_split_protocol(sincos, method, 1, cfg)
    assert r.splits == 1 and r.se == 0.0 and 0.0 <= r.mean <= 1.0
    assert run_split_protocol(sincos, method, 1, cfg).accuracies == r.accuracies


def test_unknown_method(sincos):
    with pytest.raises(ValueError):
        run_split_protocol(sincos, "pca", 1)
    with pytest.raises(ValueError):
        run_split_protocol(sincos, "fpca", 0)


def test_sparsity_full_keep_matches_protocol(sincos):
    cfg = ProtocolConfig(fpca_k=3)
    out = run_sparsity_experiment(sincos, "fpca", [1.0, 0.5], 2, cfg)
    assert [r.keep_fraction for r in out] == [1.0, 0.5]
    assert out[0].accuracies == run_split_protocol(sincos, "fpca", 2, cfg).accuracies
    with pytest.raises(ValueError):
        run_sparsity_experiment(sincos, "fpca", [0.0], 1, cfg)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert out[1].mean > 0.8
