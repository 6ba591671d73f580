"""Linear classification heads over fixed feature vectors.

Both heads train full batch with Adam, L2-penalize the weight matrix (not
the bias), and optionally keep the parameters from the best epoch on a
held-out set with early stopping. Weights start at zero, so training is
deterministic with no random state at all.
"""

from __future__ import annotations

import numpy as np

from .optim import Adam


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def macro_f1(y_true: np.ndarray, y_pred: np.ndarray, n_classes: int) -> float:
    """Unweighted mean of per-class F1; absent classes contribute 0."""
    scores = []
    for k in range(n_classes):
        tp = float(np.sum((y_pred == k) & (y_true == k)))
        fp = float(np.sum((y_pred == k) & (y_true != k)))
        fn = float(np.sum((y_pred != k) & (y_true == k)))
        denom = 2 * tp + fp + fn
        scores.append(2 * tp / denom if denom > 0 else 0.0)
    return float(np.mean(scores))


class SoftmaxHead:
    """Multinomial logistic regression with n_classes outputs."""

    def __init__(
        self,
        n_classes: int,
        lr: float = 5e-2,
        max_epochs: int = 2000,
        patience: int = 200,
        l2: float = 1e-4,
    ):
        self.n_classes = int(n_classes)
        self.lr = lr
        self.max_epochs = int(max_epochs)
        self.patience = int(patience)
        self.l2 = float(l2)
        self.W: np.ndarray | None = None
        self.b: np.ndarray | None = None
        self.history: list[float] = []

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        dev: tuple[np.ndarray, np.ndarray] | None = None,
        metric: str = "accuracy",
    ) -> "SoftmaxHead":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=int)
        n, f = X.shape
        self.W = np.zeros((f, self.n_classes))
        self.b = np.zeros(self.n_classes)
        opt = Adam({"W": self.W, "b": self.b}, lr=self.lr)
        onehot = np.zeros((n, self.n_classes))
        onehot[np.arange(n), y] = 1.0

        best_score = -np.inf
        best = (self.W.copy(), self.b.copy())
        stale = 0
        self.history = []
        for _ in range(self.max_epochs):
            probs = softmax(X @ self.W + self.b)
            d_logits = (probs - onehot) / n
            opt.step({"W": X.T @ d_logits + 2.0 * self.l2 * self.W, "b": d_logits.sum(axis=0)})
            if dev is None:
                continue
            score = self._score(dev[0], dev[1], metric)
            self.history.append(score)
            if score > best_score + 1e-12:
                best_score = score
                best = (self.W.copy(), self.b.copy())
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        if dev is not None:
            self.W, self.b = best
        return self

    def _score(self, X: np.ndarray, y: np.ndarray, metric: str) -> float:
        pred = self.predict(X)
        if metric == "macro_f1":
            return macro_f1(y, pred, self.n_classes)
        return float(np.mean(pred == y))

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.W is None:
            raise RuntimeError("head is not fitted")
        return softmax(np.asarray(X, dtype=float) @ self.W + self.b)

    def predict(self, X: np.ndarray) -> np.ndarray:
        # argmax of a softmax row ties to the smallest index, like np.argmax
        return np.argmax(self.predict_proba(X), axis=1)


class BinaryHead:
    """Logistic regression producing one probability per row."""

    def __init__(
        self,
        lr: float = 5e-2,
        max_epochs: int = 2000,
        patience: int = 200,
        l2: float = 1e-4,
    ):
        self.lr = lr
        self.max_epochs = int(max_epochs)
        self.patience = int(patience)
        self.l2 = float(l2)
        self.w: np.ndarray | None = None
        self.b: float = 0.0
        self.history: list[float] = []

    def fit(
        self,
        X: np.ndarray,
        y: np.ndarray,
        dev: tuple[np.ndarray, np.ndarray] | None = None,
    ) -> "BinaryHead":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        n, f = X.shape
        params = {"w": np.zeros(f), "b": np.zeros(1)}
        opt = Adam(params, lr=self.lr)

        best_score = -np.inf
        best = (params["w"].copy(), params["b"].copy())
        stale = 0
        self.history = []
        for _ in range(self.max_epochs):
            p = 1.0 / (1.0 + np.exp(-(X @ params["w"] + params["b"][0])))
            d_logit = (p - y) / n
            opt.step(
                {"w": X.T @ d_logit + 2.0 * self.l2 * params["w"], "b": np.array([d_logit.sum()])}
            )
            if dev is None:
                continue
            self.w, self.b = params["w"], float(params["b"][0])
            score = float(np.mean((self.predict_proba(dev[0]) >= 0.5) == (dev[1] >= 0.5)))
            self.history.append(score)
            if score > best_score + 1e-12:
                best_score = score
                best = (params["w"].copy(), params["b"].copy())
                stale = 0
            else:
                stale += 1
                if stale >= self.patience:
                    break
        if dev is not None:
            params["w"], params["b"] = best
        self.w = params["w"]
        self.b = float(params["b"][0])
        return self

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        if self.w is None:
            raise RuntimeError("head is not fitted")
        return 1.0 / (1.0 + np.exp(-(np.asarray(X, dtype=float) @ self.w + self.b)))
