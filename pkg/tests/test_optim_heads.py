"""Adam updates and the linear classification heads."""

from __future__ import annotations

import numpy as np
import pytest

from clintrex.heads import BinaryHead, SoftmaxHead, macro_f1, softmax
from clintrex.optim import Adam


def test_adam_first_step_is_signed_lr():
    """With zero moment state, one bias-corrected step moves each parameter
    by lr * g / (|g| + eps), which is lr * sign(g) up to eps."""
    w = np.array([1.0, 1.0, 1.0])
    opt = Adam({"w": w}, lr=0.1)
    opt.step({"w": np.array([4.0, -0.5, 0.0])})
    assert w[0] == pytest.approx(0.9, abs=1e-6)
    assert w[1] == pytest.approx(1.1, abs=1e-6)
    assert w[2] == pytest.approx(1.0, abs=1e-12)


def test_adam_updates_in_place_and_skips_missing():
    w = np.zeros(2)
    b = np.zeros(1)
    opt = Adam({"w": w, "b": b}, lr=0.5)
    opt.step({"w": np.ones(2)})
    assert not np.allclose(w, 0.0)
    assert np.allclose(b, 0.0)


def test_adam_converges_on_quadratic():
    w = np.array([5.0, -3.0])
    opt = Adam({"w": w}, lr=0.1)
    for _ in range(500):
        opt.step({"w": 2 * w})
    assert np.abs(w).max() < 1e-3


def test_softmax_rows_normalize():
    p = softmax(np.array([[1e8, 0.0, -1e8], [0.0, 0.0, 0.0]]))
    assert np.allclose(p.sum(axis=1), 1.0)
    assert p[0, 0] == pytest.approx(1.0)
    assert np.allclose(p[1], 1 / 3)


def test_macro_f1_hand_computed():
    y_true = np.array([0, 0, 1, 2])
    y_pred = np.array([0, 1, 1, 1])
    # class 0: P=1, R=1/2, F=2/3; class 1: P=1/3, R=1, F=1/2; class 2: 0
    assert macro_f1(y_true, y_pred, 3) == pytest.approx((2 / 3 + 1 / 2 + 0) / 3)
    # absent class drags the mean down
    assert macro_f1(np.array([0, 0]), np.array([0, 0]), 2) == pytest.approx(0.5)


def test_softmax_head_fits_separable_data():
    rng = np.random.default_rng(0)
    centers = np.array([[2.0, 0.0], [-2.0, 0.0], [0.0, 2.0]])
    X = np.concatenate([rng.normal(c, 0.3, size=(30, 2)) for c in centers])
    y = np.repeat([0, 1, 2], 30)
    head = SoftmaxHead(3).fit(X, y)
    assert np.mean(head.predict(X) == y) == 1.0
    probs = head.predict_proba(X)
    assert probs.shape == (90, 3)
    assert np.allclose(probs.sum(axis=1), 1.0)


def test_softmax_head_is_deterministic():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 5))
    y = rng.integers(0, 3, size=40)
    a = SoftmaxHead(3, max_epochs=50).fit(X, y)
    b = SoftmaxHead(3, max_epochs=50).fit(X, y)
    assert np.array_equal(a.W, b.W)
    assert np.array_equal(a.b, b.b)


def test_softmax_head_restores_best_dev_epoch():
    """Training data and dev data disagree; the returned parameters must be
    the ones from the best dev epoch, not the last."""
    X = np.array([[1.0], [-1.0]])
    y = np.array([0, 1])
    dev_X = np.array([[1.0], [-1.0]])
    dev_y = np.array([1, 0])  # opposite labeling: dev is best before training moves
    head = SoftmaxHead(2, max_epochs=300, patience=10).fit(X, y, (dev_X, dev_y))
    # dev accuracy of the zero-epoch parameters is 0.5 (all ties); training
    # towards y makes dev worse, so early stopping keeps near-initial weights
    assert float(np.abs(head.W).max()) < 0.2


def test_unfitted_head_raises():
    with pytest.raises(RuntimeError):
        SoftmaxHead(2).predict(np.zeros((1, 2)))
    with pytest.raises(RuntimeError):
        BinaryHead().predict_proba(np.zeros((1, 2)))


def test_binary_head_fits_and_scores():
    rng = np.random.default_rng(2)
    X = np.concatenate([rng.normal(1.5, 0.4, (40, 3)), rng.normal(-1.5, 0.4, (40, 3))])
    y = np.concatenate([np.ones(40), np.zeros(40)])
    head = BinaryHead().fit(X, y)
    p = head.predict_proba(X)
    assert p.shape == (80,)
    assert np.all((p >= 0) & (p <= 1))
    assert np.mean((p >= 0.5) == (y >= 0.5)) == 1.0


def test_binary_head_early_stops_on_dev():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(30, 4))
    y = (X[:, 0] > 0).astype(float)
    dev = (X, 1.0 - y)  # inverted labels: no epoch can beat the start
    head = BinaryHead(max_epochs=5000, patience=5).fit(X, y, dev)
    assert len(head.history) <= 10
