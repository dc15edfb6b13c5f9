"""Native meta-regressors: brute-force KNN, a small ReLU MLP, and the squared-error GBDT."""
from __future__ import annotations

import numpy as np

from ..errors import ConfigError
from ..gbdt import GbdtRegressor

__all__ = ["Standardizer", "KnnRegressor", "MlpRegressor", "GbdtRegressor", "make_regressor"]


class Standardizer:
    def __init__(self, mean: np.ndarray | None = None, std: np.ndarray | None = None):
        self.mean = mean
        self.std = std

    def fit(self, X: np.ndarray) -> "Standardizer":
        self.mean = X.mean(axis=0)
        std = X.std(axis=0)
        self.std = np.where(std > 0, std, 1.0)
        return self

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "Standardizer":
        return cls(np.asarray(doc["mean"], dtype=float), np.asarray(doc["std"], dtype=float))


class KnnRegressor:
    """Mean target of the ``k`` nearest training points (Euclidean); ties keep training order."""

    kind = "knn"

    def __init__(self, k: int = 5, chunk: int = 512):
        self.k = k
        self.chunk = chunk
        self.X: np.ndarray | None = None
        self.y: np.ndarray | None = None

    def get_params(self) -> dict:
        return {"k": self.k}

    def fit(self, X: np.ndarray, y: np.ndarray) -> "KnnRegressor":
        self.X = np.asarray(X, dtype=float)
        self.y = np.asarray(y, dtype=float)
        return self

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        k = min(self.k, len(self.y))
        out = np.empty(X.shape[0])
        for s in range(0, X.shape[0], self.chunk):
            q = X[s:s + self.chunk]
            d2 = ((q[:, None, :] - self.X[None, :, :]) ** 2).sum(axis=2)
            nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
            out[s:s + self.chunk] = self.y[nearest].mean(axis=1)
        return out

    def state_dict(self) -> dict:
        return {"X": self.X.tolist(), "y": self.y.tolist()}

    def load_state(self, state: dict) -> None:
        self.X = np.asarray(state["X"], dtype=float)
        self.y = np.asarray(state["y"], dtype=float)


class MlpRegressor:
    """Feed-forward ReLU network trained on mean-squared error with Adam mini-batches."""

    kind = "mlp"

    def __init__(self, hidden: tuple[int, ...] = (64, 64), epochs: int = 200, batch_size: int = 256,
                 step_size: float = 1e-3, seed: int = 0):
        self.hidden = tuple(hidden)
        self.epochs = epochs
        self.batch_size = batch_size
        self.step_size = step_size
        self.seed = seed
        self.weights: list[np.ndarray] = []
        self.biases: list[np.ndarray] = []

    def get_params(self) -> dict:
        return {"hidden": list(self.hidden), "epochs": self.epochs, "batch_size": self.batch_size,
                "step_size": self.step_size, "seed": self.seed}

    def init_params(self, n_in: int, rng: np.random.Generator) -> None:
        sizes = [n_in, *self.hidden, 1]
        self.weights = [rng.normal(0.0, np.sqrt(2.0 / a), size=(a, b)) for a, b in zip(sizes[:-1], sizes[1:])]
        self.biases = [np.zeros(b) for b in sizes[1:]]

    def _forward(self, X: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
        acts = [X]
        a = X
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = np.maximum(a @ W + b, 0.0)
            acts.append(a)
        return (a @ self.weights[-1] + self.biases[-1])[:, 0], acts

    def predict(self, X: np.ndarray) -> np.ndarray:
        return self._forward(np.asarray(X, dtype=float))[0]

    def loss_and_grads(self, X: np.ndarray, y: np.ndarray) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
        """Mean-squared error and its exact gradient w.r.t. every weight and bias."""
        out, acts = self._forward(X)
        resid = out - y
        loss = float(np.mean(resid ** 2))
        delta = (2.0 / len(y)) * resid[:, None]
        gW, gb = [None] * len(self.weights), [None] * len(self.biases)
        for layer in range(len(self.weights) - 1, -1, -1):
            gW[layer] = acts[layer].T @ delta
            gb[layer] = delta.sum(axis=0)
            if layer:
                delta = (delta @ self.weights[layer].T) * (acts[layer] > 0)
        return loss, gW, gb

    def fit(self, X: np.ndarray, y: np.ndarray) -> "MlpRegressor":
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        rng = np.random.default_rng(self.seed)
        self.init_params(X.shape[1], rng)
        params = self.weights + self.biases
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        beta1, beta2, eps, t = 0.9, 0.999, 1e-8, 0
        for _ in range(self.epochs):
            perm = rng.permutation(len(y))
            for s in range(0, len(y), self.batch_size):
                idx = perm[s:s + self.batch_size]
                _, gW, gb = self.loss_and_grads(X[idx], y[idx])
                t += 1
                for j, (p, g) in enumerate(zip(params, gW + gb)):
                    m[j] = beta1 * m[j] + (1 - beta1) * g
                    v[j] = beta2 * v[j] + (1 - beta2) * g * g
                    p -= self.step_size * (m[j] / (1 - beta1 ** t)) / (np.sqrt(v[j] / (1 - beta2 ** t)) + eps)
        return self

    def state_dict(self) -> dict:
        return {"weights": [W.tolist() for W in self.weights], "biases": [b.tolist() for b in self.biases]}

    def load_state(self, state: dict) -> None:
        self.weights = [np.asarray(W, dtype=float) for W in state["weights"]]
        self.biases = [np.asarray(b, dtype=float) for b in state["biases"]]


def make_regressor(kind: str, params: dict | None = None):
    params = dict(params or {})
    if kind == "knn":
        return KnnRegressor(**params)
    if kind == "gbdt":
        return GbdtRegressor(**params)
    if kind == "mlp":
        if "hidden" in params:
            params["hidden"] = tuple(params["hidden"])
        return MlpRegressor(**params)
    raise ConfigError(f"unknown regressor kind {kind!r}")
