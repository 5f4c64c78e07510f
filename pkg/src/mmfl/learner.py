"""Softmax regression trained with mini-batch SGD on cross-entropy."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

PROB_FLOOR = 1e-12


class Examples(NamedTuple):
    """Feature rows ``x`` (n x dim) with integer labels ``y`` (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:  # type: ignore[override]
        return int(self.y.shape[0])


@dataclass(frozen=True)
class ModelWeights:
    matrix: np.ndarray  # (num_classes, dim)
    bias: np.ndarray  # (num_classes,)

    @classmethod
    def zeros(cls, dim: int, num_classes: int) -> "ModelWeights":
        return cls(np.zeros((num_classes, dim)), np.zeros(num_classes))

    @property
    def num_classes(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def copy(self) -> "ModelWeights":
        return ModelWeights(self.matrix.copy(), self.bias.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.matrix).all() and np.isfinite(self.bias).all())

    def equals(self, other: "ModelWeights") -> bool:
        """Bitwise equality of both parameter arrays."""
        return np.array_equal(self.matrix, other.matrix) and np.array_equal(
            self.bias, other.bias
        )


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1
    learning_rate: float = 0.05
    batch_size: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if not self.learning_rate >= 0:
            raise ValueError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")


def _check_shapes(w: ModelWeights, x: np.ndarray) -> None:
    if x.shape[-1] != w.dim:
        raise ValueError(f"feature dimension {x.shape[-1]} does not match model dim {w.dim}")


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def predict_proba(w: ModelWeights, x) -> np.ndarray:
    """Class probabilities ``softmax(matrix @ x + bias)``.

    Accepts a single feature vector or a 2-D batch of rows.
    """
    x = np.asarray(x, dtype=float)
    _check_shapes(w, x)
    return _softmax(x @ w.matrix.T + w.bias)


def _check_nonempty(data: Examples, what: str) -> None:
    if len(data) == 0:
        raise ValueError(f"{what} is empty")


def _per_example_loss(w: ModelWeights, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    probs = predict_proba(w, x)
    picked = probs[np.arange(len(y)), y]
    return -np.log(np.maximum(picked, PROB_FLOOR))


def local_loss(w: ModelWeights, data: Examples) -> float:
    """Mean cross-entropy of ``w`` on ``data``."""
    _check_nonempty(data, "data")
    return float(_per_example_loss(w, data.x, data.y).mean())


def loss_gradient(w: ModelWeights, data: Examples) -> ModelWeights:
    """Analytic gradient of :func:`local_loss` with respect to matrix and bias."""
    _check_nonempty(data, "data")
    probs = predict_proba(w, data.x)
    probs[np.arange(len(data)), data.y] -= 1.0
    probs /= len(data)
    return ModelWeights(probs.T @ data.x, probs.sum(axis=0))


def local_train(
    w: ModelWeights, train: Examples, cfg: TrainConfig
) -> tuple[ModelWeights, float]:
    """Run ``cfg.epochs`` passes of mini-batch SGD starting from ``w``.

    The returned loss is the running training loss of the last epoch:
    each batch's cross-entropy is taken at the weights it was fed to
    (before that batch's update), averaged over the epoch's examples.
    ``w`` itself is never modified.
    """
    _check_nonempty(train, "train set")
    _check_shapes(w, train.x)
    rng = np.random.default_rng(cfg.seed)
    matrix = w.matrix.copy()
    bias = w.bias.copy()
    n = len(train)
    lr = cfg.learning_rate
    epoch_loss = 0.0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            xb, yb = train.x[idx], train.y[idx]
            probs = _softmax(xb @ matrix.T + bias)
            rows = np.arange(len(idx))
            total += float(-np.log(np.maximum(probs[rows, yb], PROB_FLOOR)).sum())
            probs[rows, yb] -= 1.0
            probs /= len(idx)
            matrix -= lr * (probs.T @ xb)
            bias -= lr * probs.sum(axis=0)
        epoch_loss = total / n
    return ModelWeights(matrix, bias), epoch_loss


def predict(w: ModelWeights, x) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    x = np.asarray(x, dtype=float)
    _check_shapes(w, x)
    return np.argmax(x @ w.matrix.T + w.bias, axis=-1)


def accuracy(w: ModelWeights, test: Examples) -> float:
    _check_nonempty(test, "test set")
    return float(np.mean(predict(w, test.x) == test.y))


def num_correct(w: ModelWeights, test: Examples) -> int:
    return int(np.sum(predict(w, test.x) == test.y))
