"""L2-regularized logistic regression over sparse bag-of-n-gram vectors."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ValidationError
from .featurize import SparseVector, Vocabulary, to_matrix, vectorize
from .metrics import average_precision


def sigmoid(z):
    """Overflow-safe logistic function for scalars or arrays."""
    z = np.asarray(z, dtype=np.float64)
    ez = np.exp(-np.abs(z))
    out = np.where(z >= 0, 1.0 / (1.0 + ez), ez / (1.0 + ez))
    return out if out.ndim else float(out)


def log1pexp(z):
    z = np.asarray(z, dtype=np.float64)
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float = 0.0

    @classmethod
    def zeros(cls, dim: int) -> "LinearModel":
        return cls(np.zeros(dim, dtype=np.float64), 0.0)

    def copy(self) -> "LinearModel":
        return LinearModel(self.weights.copy(), float(self.bias))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(f"vocab_size\t{len(self.weights)}\n")
            fh.write(f"bias\t{float(self.bias)!r}\n")
            for w in self.weights.tolist():
                fh.write(f"{w!r}\n")

    @classmethod
    def load(cls, path) -> "LinearModel":
        with open(path, encoding="utf-8") as fh:
            size = int(fh.readline().split("\t")[1])
            bias = float(fh.readline().split("\t")[1])
            weights = np.array([float(line) for line in fh if line.strip()], dtype=np.float64)
        if len(weights) != size:
            raise ValidationError(f"{path}: header says {size} weights, found {len(weights)}")
        return cls(weights, bias)


@dataclass(frozen=True)
class LinearConfig:
    learning_rate: float = 0.5
    epochs: int = 300
    l2: float = 1e-4
    # halve the step within an epoch until the loss does not increase
    backtrack: bool = True


@dataclass
class EpochRecord:
    epoch: int
    loss: float
    step: float
    dev_auc: float | None = None


@dataclass
class TrainingLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "loss", "step", "dev_auc"])
            for r in self.records:
                writer.writerow([r.epoch, repr(r.loss), repr(r.step), "" if r.dev_auc is None else repr(r.dev_auc)])


def predict(model: LinearModel, x: SparseVector) -> float:
    if x.indices and (min(x.indices) < 0 or max(x.indices) >= len(model.weights)):
        raise ValidationError(f"feature index outside [0, {len(model.weights)})")
    z = model.bias + sum(model.weights[i] * c for i, c in x.items())
    return sigmoid(z)


def predict_matrix(model: LinearModel, X: sp.spmatrix) -> np.ndarray:
    return sigmoid(X @ model.weights + model.bias)


def loss_and_grad(weights: np.ndarray, bias: float, X, y: np.ndarray, l2: float):
    """Mean binary cross-entropy plus (l2/2)·||w||², with gradients for w and b."""
    z = X @ weights + bias
    loss = float(np.mean(log1pexp(z) - y * z) + 0.5 * l2 * weights @ weights)
    residual = (sigmoid(z) - y) / len(y)
    return loss, X.T @ residual + l2 * weights, float(residual.sum())


def _as_arrays(data, dim: int | None):
    X, y = data
    if not sp.issparse(X) and not isinstance(X, np.ndarray):
        X = to_matrix(X, dim)
    return sp.csr_matrix(X, dtype=np.float64), np.asarray(y, dtype=np.float64)


def train(train_set, dev_set=None, config: LinearConfig = LinearConfig(), dim: int | None = None,
          log: TrainingLog | None = None) -> LinearModel:
    """Full-batch gradient descent from zero weights.

    ``train_set``/``dev_set`` are ``(X, y)`` pairs where X is a CSR matrix or a list of
    SparseVectors (then ``dim`` is required). Returns the epoch with the best dev PR-AUC,
    or the last epoch when no usable dev set is given.
    """
    X, y = _as_arrays(train_set, dim)
    if X.shape[0] == 0 or len(np.unique(y)) < 2:
        raise ValidationError("training set must contain both classes")
    dev = None
    if dev_set is not None:
        Xd, yd = _as_arrays(dev_set, X.shape[1])
        if yd.any():
            dev = (Xd, yd)
    log = log if log is not None else TrainingLog()
    w, b = np.zeros(X.shape[1]), 0.0
    loss, gw, gb = loss_and_grad(w, b, X, y, config.l2)
    log.records.append(EpochRecord(0, loss, 0.0))
    best, best_auc = LinearModel(w.copy(), b), -np.inf
    for epoch in range(1, config.epochs + 1):
        step = config.learning_rate
        while True:
            w_new, b_new = w - step * gw, b - step * gb
            new_loss, new_gw, new_gb = loss_and_grad(w_new, b_new, X, y, config.l2)
            if not config.backtrack or new_loss <= loss or step < 1e-12:
                break
            step /= 2
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
        rec = EpochRecord(epoch, loss, step)
        if dev is not None:
            rec.dev_auc = average_precision(dev[0] @ w + b, dev[1])
            if rec.dev_auc > best_auc:
                best, best_auc, log.best_epoch = LinearModel(w.copy(), b), rec.dev_auc, epoch
        log.records.append(rec)
    if dev is None and config.epochs > 0:
        best, log.best_epoch = LinearModel(w, b), config.epochs
    return best


def top_features(model: LinearModel, vocab: Vocabulary, k: int) -> list[tuple[str, float]]:
    """The k highest-weight n-grams (reserved tokens excluded), ties broken lexicographically."""
    if k <= 0:
        return []
    reserved = set(vocab.reserved)
    feats = [(t, float(model.weights[i])) for i, t in enumerate(vocab.tokens) if t not in reserved]
    feats.sort(key=lambda tw: (-tw[1], tw[0]))
    return feats[:k]


class NgramClassifier:
    """Tokens -> probability, pairing a trained model with its n-gram vocabulary."""

    def __init__(self, model: LinearModel, vocab: Vocabulary):
        if len(model.weights) != len(vocab):
            raise ValidationError("model and vocabulary sizes differ")
        self.model = model
        self.vocab = vocab

    def probability(self, tokens: Sequence[str]) -> float:
        return predict(self.model, vectorize(tokens, self.vocab))

    def probabilities(self, docs: Sequence[Sequence[str]]) -> np.ndarray:
        X = to_matrix([vectorize(t, self.vocab) for t in docs], len(self.vocab))
        return predict_matrix(self.model, X)
