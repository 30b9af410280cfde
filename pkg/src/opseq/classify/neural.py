"""Dense feedforward network: ReLU hidden layers, softmax output,
mini-batch backpropagation with SGD or Adam, inverted dropout."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError, NumericError
from ..seeding import derive_seed
from .base import Classifier, LabeledDataset


@dataclass
class NnParams:
    layer_sizes: list[int] = field(default_factory=lambda: [2, 8, 2])  # [D, hidden..., C]
    loss: str = "cce"  # "cce" or "mse" (both applied after softmax)
    optimizer: str = "adam"  # "sgd" or "adam"
    lr: float = 0.001
    beta1: float = 0.9
    beta2: float = 0.999
    dropout_rate: float = 0.0
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0

    def __post_init__(self):
        if len(self.layer_sizes) < 2:
            raise ConfigError("layer_sizes needs at least input and output sizes")
        if self.loss not in ("cce", "mse"):
            raise ConfigError(f"unknown loss {self.loss!r}")
        if self.optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError("dropout_rate must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigError("epochs must be >= 0 and batch_size >= 1")

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "loss": self.loss,
            "optimizer": self.optimizer,
            "lr": self.lr,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "dropout_rate": self.dropout_rate,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NnParams":
        return cls(**d)


def _softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


class NeuralNetClassifier(Classifier):
    kind = "nn"

    def __init__(self, params: NnParams, families: list[str], weights=None, biases=None):
        self.params = params
        self.families = families
        sizes = params.layer_sizes
        if weights is None:
            rng = np.random.default_rng(params.seed)
            # He initialization, matched to the ReLU hidden layers
            self.weights = [
                rng.standard_normal((sizes[i], sizes[i + 1])) * math.sqrt(2.0 / sizes[i])
                for i in range(len(sizes) - 1)
            ]
            self.biases = [np.zeros(sizes[i + 1]) for i in range(len(sizes) - 1)]
        else:
            self.weights = [np.asarray(w, dtype=float) for w in weights]
            self.biases = [np.asarray(b, dtype=float) for b in biases]
        self.curves: dict[str, list[float]] = {
            "train_loss": [], "train_accuracy": [], "val_loss": [], "val_accuracy": []
        }

    # forward/backward -------------------------------------------------

    def _forward(self, X, dropout_rng=None):
        """Returns (softmax probabilities, caches). Dropout only when a rng is given."""
        rate = self.params.dropout_rate
        a = X
        caches = []
        for l in range(len(self.weights) - 1):
            z = a @ self.weights[l] + self.biases[l]
            h = np.maximum(z, 0.0)
            mask = None
            if dropout_rng is not None and rate > 0.0:
                mask = (dropout_rng.random(h.shape) >= rate) / (1.0 - rate)
                h = h * mask
            caches.append((a, z, mask))
            a = h
        z_out = a @ self.weights[-1] + self.biases[-1]
        caches.append((a, z_out, None))
        return _softmax(z_out), caches

    def _loss(self, probs, Y):
        B = probs.shape[0]
        if self.params.loss == "cce":
            return float(-np.sum(Y * np.log(np.maximum(probs, 1e-300))) / B)
        return float(np.sum((probs - Y) ** 2) / (B * Y.shape[1]))

    def _output_delta(self, probs, Y):
        B = probs.shape[0]
        if self.params.loss == "cce":
            return (probs - Y) / B
        g = 2.0 * (probs - Y) / (B * Y.shape[1])
        # chain rule through the softmax Jacobian
        return probs * (g - np.sum(g * probs, axis=1, keepdims=True))

    def loss_and_grads(self, X, Y, dropout_rng=None):
        """Loss plus exact gradients for every weight and bias (one batch)."""
        probs, caches = self._forward(np.asarray(X, dtype=float), dropout_rng)
        loss = self._loss(probs, Y)
        grads_w = [None] * len(self.weights)
        grads_b = [None] * len(self.weights)
        delta = self._output_delta(probs, Y)
        for l in range(len(self.weights) - 1, -1, -1):
            a_in, z, mask = caches[l]
            grads_w[l] = a_in.T @ delta
            grads_b[l] = delta.sum(axis=0)
            if l > 0:
                da = delta @ self.weights[l].T
                _, z_prev, mask_prev = caches[l - 1]
                if mask_prev is not None:
                    da = da * mask_prev
                delta = da * (z_prev > 0.0)
        return loss, grads_w, grads_b

    # training ----------------------------------------------------------

    def _evaluate(self, X, Y):
        probs, _ = self._forward(X)
        loss = self._loss(probs, Y)
        acc = float(np.mean(np.argmax(probs, axis=1) == np.argmax(Y, axis=1))) if len(Y) else 0.0
        return loss, acc

    def fit(self, data: LabeledDataset, validation: LabeledDataset | None = None):
        p = self.params
        if p.layer_sizes[0] != data.D:
            raise ConfigError(f"input layer size {p.layer_sizes[0]} != feature dim {data.D}")
        if p.layer_sizes[-1] != data.class_count:
            raise ConfigError(
                f"output layer size {p.layer_sizes[-1]} != class count {data.class_count}"
            )
        eye = np.eye(data.class_count)
        Y = eye[data.y]
        Y_val = eye[validation.y] if validation is not None else None

        # init consumed a stream seeded with p.seed in __init__; shuffling and
        # dropout use a derived stream so the two stay independent
        rng = np.random.default_rng(derive_seed(p.seed, 1))
        adam_t = 0
        m_w = [np.zeros_like(w) for w in self.weights]
        v_w = [np.zeros_like(w) for w in self.weights]
        m_b = [np.zeros_like(b) for b in self.biases]
        v_b = [np.zeros_like(b) for b in self.biases]

        for epoch in range(p.epochs):
            order = rng.permutation(data.size)
            for start in range(0, data.size, p.batch_size):
                idx = order[start : start + p.batch_size]
                dropout_rng = rng if p.dropout_rate > 0.0 else None
                loss, grads_w, grads_b = self.loss_and_grads(data.X[idx], Y[idx], dropout_rng)
                if not math.isfinite(loss):
                    raise NumericError(f"non-finite training loss in epoch {epoch}", iteration=epoch)
                if p.optimizer == "sgd":
                    for l in range(len(self.weights)):
                        self.weights[l] -= p.lr * grads_w[l]
                        self.biases[l] -= p.lr * grads_b[l]
                else:
                    adam_t += 1
                    c1 = 1.0 - p.beta1**adam_t
                    c2 = 1.0 - p.beta2**adam_t
                    for l in range(len(self.weights)):
                        m_w[l] = p.beta1 * m_w[l] + (1 - p.beta1) * grads_w[l]
                        v_w[l] = p.beta2 * v_w[l] + (1 - p.beta2) * grads_w[l] ** 2
                        self.weights[l] -= p.lr * (m_w[l] / c1) / (np.sqrt(v_w[l] / c2) + 1e-8)
                        m_b[l] = p.beta1 * m_b[l] + (1 - p.beta1) * grads_b[l]
                        v_b[l] = p.beta2 * v_b[l] + (1 - p.beta2) * grads_b[l] ** 2
                        self.biases[l] -= p.lr * (m_b[l] / c1) / (np.sqrt(v_b[l] / c2) + 1e-8)
            train_loss, train_acc = self._evaluate(data.X, Y)
            if not math.isfinite(train_loss):
                raise NumericError(f"non-finite training loss in epoch {epoch}", iteration=epoch)
            self.curves["train_loss"].append(train_loss)
            self.curves["train_accuracy"].append(train_acc)
            if validation is not None:
                val_loss, val_acc = self._evaluate(validation.X, Y_val)
                self.curves["val_loss"].append(val_loss)
                self.curves["val_accuracy"].append(val_acc)
        return self

    # prediction ---------------------------------------------------------

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        probs, _ = self._forward(X)
        return probs

    def predict(self, x: np.ndarray) -> int:
        x = self._check_dim(x, self.params.layer_sizes[0])
        return int(np.argmax(self.predict_proba(x[None, :])[0]))

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        return np.argmax(self.predict_proba(X), axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params.to_dict(),
            "families": self.families,
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "curves": self.curves,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NeuralNetClassifier":
        clf = cls(
            NnParams.from_dict(d["params"]),
            list(d["families"]),
            weights=d["weights"],
            biases=d["biases"],
        )
        clf.curves = d.get("curves", clf.curves)
        return clf


def nn_train(
    data: LabeledDataset, params: NnParams, validation: LabeledDataset | None = None
) -> NeuralNetClassifier:
    if validation is not None and validation.D != data.D:
        raise DataError("validation feature dimension disagrees with training")
    return NeuralNetClassifier(params, data.families).fit(data, validation)
