"""Logistic-regression and one-hidden-layer ANN baselines on raw pair features."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from gbdtkg.errors import DataError
from gbdtkg.records import TransformerRecord
from gbdtkg.triples import Relation, Triple


@dataclass(frozen=True)
class PairSample:
    features: tuple[float, ...]  # head features followed by tail features
    label: int  # 1 = Similar


def pairize(triples: Sequence[Triple], records: Mapping[str, TransformerRecord]) -> list[PairSample]:
    out = []
    for t in triples:
        for eid in (t.head, t.tail):
            if eid not in records:
                raise KeyError(f"unknown record id {eid!r}")
        feats = records[t.head].features + records[t.tail].features
        out.append(PairSample(feats, int(t.relation is Relation.SIMILAR)))
    return out


def to_arrays(samples: Sequence[PairSample]) -> tuple[np.ndarray, np.ndarray]:
    if not samples:
        return np.zeros((0, 0)), np.zeros(0)
    return np.array([s.features for s in samples], dtype=float), np.array([s.label for s in samples], dtype=float)


def sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def leaky_relu(z, slope):
    return np.where(z > 0, z, slope * z)


def cross_entropy(p, y) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _check_labels(y):
    if len(y) == 0 or y.min() == y.max():
        raise DataError("training samples need both labels")


@dataclass(frozen=True)
class BaselineHyper:
    learning_rate: float = 0.1
    epochs: int = 500
    seed: int = 0
    hidden: int = 16
    slope: float = 0.01


@dataclass(frozen=True)
class LrModel:
    w: np.ndarray
    b: float

    def to_json(self) -> str:
        return json.dumps({"kind": "lr", "w": np.asarray(self.w).tolist(), "b": self.b})

    @classmethod
    def from_json(cls, text: str) -> "LrModel":
        doc = json.loads(text)
        return cls(np.asarray(doc["w"], dtype=float), float(doc["b"]))


@dataclass(frozen=True)
class AnnModel:
    W1: np.ndarray  # (hidden, inputs)
    b1: np.ndarray
    w2: np.ndarray  # (hidden,)
    b2: float
    slope: float = 0.01

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": "ann",
                "W1": np.asarray(self.W1).tolist(),
                "b1": np.asarray(self.b1).tolist(),
                "w2": np.asarray(self.w2).tolist(),
                "b2": self.b2,
                "slope": self.slope,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "AnnModel":
        doc = json.loads(text)
        return cls(
            np.asarray(doc["W1"], dtype=float),
            np.asarray(doc["b1"], dtype=float),
            np.asarray(doc["w2"], dtype=float),
            float(doc["b2"]),
            float(doc["slope"]),
        )


def lr_proba(model: LrModel, X) -> np.ndarray:
    return sigmoid(np.asarray(X, dtype=float) @ model.w + model.b)


def predict_lr(model: LrModel, sample: PairSample) -> float:
    return float(lr_proba(model, np.asarray(sample.features))[()])


def train_lr(samples: Sequence[PairSample], hyper: BaselineHyper = BaselineHyper()):
    """Full-batch gradient descent on mean cross-entropy.

    Returns the model and the per-epoch loss trace (index 0 is the initial loss).
    """
    X, y = to_arrays(samples)
    _check_labels(y)
    rng = np.random.default_rng(hyper.seed)
    w = rng.normal(0.0, 0.01, size=X.shape[1])
    b = 0.0
    trace = [cross_entropy(sigmoid(X @ w + b), y)]
    for _ in range(hyper.epochs):
        p = sigmoid(X @ w + b)
        err = (p - y) / len(y)
        w = w - hyper.learning_rate * (X.T @ err)
        b = b - hyper.learning_rate * float(err.sum())
        trace.append(cross_entropy(sigmoid(X @ w + b), y))
    return LrModel(w, b), trace


def ann_forward(model: AnnModel, X):
    X = np.atleast_2d(np.asarray(X, dtype=float))
    z1 = X @ model.W1.T + model.b1
    a1 = leaky_relu(z1, model.slope)
    p = sigmoid(a1 @ model.w2 + model.b2)
    return p, (X, z1, a1)


def ann_proba(model: AnnModel, X) -> np.ndarray:
    return ann_forward(model, X)[0]


def predict_ann(model: AnnModel, sample: PairSample) -> float:
    return float(ann_proba(model, sample.features)[0])


def ann_gradients(model: AnnModel, X, y):
    """Backpropagated gradients of mean cross-entropy: (dW1, db1, dw2, db2)."""
    p, (X, z1, a1) = ann_forward(model, X)
    y = np.asarray(y, dtype=float)
    dz2 = (p - y) / len(y)
    dw2 = a1.T @ dz2
    db2 = float(dz2.sum())
    da1 = np.outer(dz2, model.w2)
    dz1 = da1 * np.where(z1 > 0, 1.0, model.slope)
    dW1 = dz1.T @ X
    db1 = dz1.sum(axis=0)
    return dW1, db1, dw2, db2


def train_ann(samples: Sequence[PairSample], hyper: BaselineHyper = BaselineHyper()):
    """Full-batch gradient descent; returns the model and its loss trace."""
    X, y = to_arrays(samples)
    _check_labels(y)
    rng = np.random.default_rng(hyper.seed)
    d = X.shape[1]
    model = AnnModel(
        rng.normal(0.0, 1.0 / np.sqrt(d), size=(hyper.hidden, d)),
        np.zeros(hyper.hidden),
        rng.normal(0.0, 1.0 / np.sqrt(hyper.hidden), size=hyper.hidden),
        0.0,
        hyper.slope,
    )
    lr = hyper.learning_rate
    trace = [cross_entropy(ann_proba(model, X), y)]
    for _ in range(hyper.epochs):
        dW1, db1, dw2, db2 = ann_gradients(model, X, y)
        model = AnnModel(model.W1 - lr * dW1, model.b1 - lr * db1, model.w2 - lr * dw2, model.b2 - lr * db2, model.slope)
        trace.append(cross_entropy(ann_proba(model, X), y))
    return model, trace


def accuracy(proba: np.ndarray, y: np.ndarray) -> float:
    """Threshold at 0.5; a probability of exactly 0.5 counts as Similar."""
    return float(np.mean((np.asarray(proba) >= 0.5) == (np.asarray(y) == 1)))
