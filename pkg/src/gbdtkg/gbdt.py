"""Gradient-boosted regression trees with squared loss.

The ensemble is used twice: as a fault score (``predict_raw``) and as a
feature-crossing map that encodes a sample by the leaf it reaches in every
tree (``feature_cross``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from gbdtkg.errors import DataError, ShapeError
from gbdtkg.records import N_FEATURES, TransformerRecord, feature_matrix, label_vector


@dataclass(frozen=True)
class GbdtParams:
    n_trees: int = 30
    max_depth: int = 3
    shrinkage: float = 0.1
    min_samples_leaf: int = 2

    def __post_init__(self):
        if self.n_trees < 0:
            raise ValueError("n_trees must be >= 0")
        if self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if not 0.0 < self.shrinkage <= 1.0:
            raise ValueError("shrinkage must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")


@dataclass(frozen=True)
class Leaf:
    value: float
    leaf_ordinal: int


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


def n_leaves(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 1
    return n_leaves(node.left) + n_leaves(node.right)


def find_leaf(node: TreeNode, x: np.ndarray) -> Leaf:
    while isinstance(node, Split):
        node = node.left if x[node.feature_index] <= node.threshold else node.right
    return node


@dataclass(frozen=True)
class GbdtModel:
    init_score: float
    trees: tuple[TreeNode, ...]
    shrinkage: float
    params: GbdtParams = field(default_factory=GbdtParams)

    @property
    def leaf_counts(self) -> tuple[int, ...]:
        return tuple(n_leaves(t) for t in self.trees)

    @property
    def total_leaves(self) -> int:
        return sum(self.leaf_counts)

    def to_json(self) -> str:
        doc = {
            "init_score": self.init_score,
            "shrinkage": self.shrinkage,
            "params": {
                "n_trees": self.params.n_trees,
                "max_depth": self.params.max_depth,
                "shrinkage": self.params.shrinkage,
                "min_samples_leaf": self.params.min_samples_leaf,
            },
            "trees": [_node_to_dict(t) for t in self.trees],
        }
        return json.dumps(doc, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "GbdtModel":
        doc = json.loads(text)
        params = GbdtParams(**doc["params"]) if "params" in doc else GbdtParams(
            n_trees=len(doc["trees"]), shrinkage=doc["shrinkage"]
        )
        return cls(
            init_score=float(doc["init_score"]),
            trees=tuple(_node_from_dict(t) for t in doc["trees"]),
            shrinkage=float(doc["shrinkage"]),
            params=params,
        )


def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"value": node.value, "leaf_ordinal": node.leaf_ordinal}
    return {
        "feature_index": node.feature_index,
        "threshold": node.threshold,
        "left": _node_to_dict(node.left),
        "right": _node_to_dict(node.right),
    }


def _node_from_dict(doc: dict) -> TreeNode:
    if "value" in doc:
        return Leaf(float(doc["value"]), int(doc["leaf_ordinal"]))
    return Split(
        int(doc["feature_index"]),
        float(doc["threshold"]),
        _node_from_dict(doc["left"]),
        _node_from_dict(doc["right"]),
    )


def best_split(x: np.ndarray, r: np.ndarray, min_samples_leaf: int = 1):
    """Greedy variance-reduction split over all midpoints of sorted unique values.

    Returns ``(feature_index, threshold, gain)`` or ``None`` when no split with
    positive gain respects ``min_samples_leaf``. Ties keep the lowest feature
    index, then the lowest threshold.
    """
    n, p = x.shape
    total = r.sum()
    base = total * total / n
    best = None
    best_gain = 0.0
    for j in range(p):
        order = np.argsort(x[:, j], kind="stable")
        xs = x[order, j]
        csum = np.cumsum(r[order])
        for i in range(min_samples_leaf - 1, n - min_samples_leaf):
            # candidate boundary between positions i and i+1
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            sl = csum[i]
            sr = total - sl
            gain = sl * sl / nl + sr * sr / (n - nl) - base
            if gain > best_gain:
                best_gain = gain
                best = (j, 0.5 * (xs[i] + xs[i + 1]), gain)
    return best


def _grow(x, r, depth, params, counter):
    split = None
    if depth < params.max_depth and len(r) >= 2 * params.min_samples_leaf:
        split = best_split(x, r, params.min_samples_leaf)
    if split is None:
        leaf = Leaf(float(r.mean()), counter[0])
        counter[0] += 1
        return leaf
    j, thr, _ = split
    mask = x[:, j] <= thr
    left = _grow(x[mask], r[mask], depth + 1, params, counter)
    right = _grow(x[~mask], r[~mask], depth + 1, params, counter)
    return Split(j, float(thr), left, right)


def fit_tree(x: np.ndarray, r: np.ndarray, params: GbdtParams) -> TreeNode:
    """Fit one depth-bounded regression tree to residuals ``r``."""
    return _grow(np.asarray(x, float), np.asarray(r, float), 0, params, [0])


def tree_predict(tree: TreeNode, x: np.ndarray) -> np.ndarray:
    return np.array([find_leaf(tree, row).value for row in np.atleast_2d(x)])


def train_gbdt_arrays(x: np.ndarray, y: np.ndarray, params: GbdtParams = GbdtParams()):
    """Boost on raw arrays. Returns the model and the per-stage training MSE."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(y) < params.min_samples_leaf:
        raise DataError(f"{len(y)} samples is fewer than min_samples_leaf={params.min_samples_leaf}")
    f0 = float(y.mean())
    pred = np.full(len(y), f0)
    trees = []
    mse = [float(np.mean((y - pred) ** 2))]
    for _ in range(params.n_trees):
        tree = fit_tree(x, y - pred, params)
        trees.append(tree)
        pred = pred + params.shrinkage * tree_predict(tree, x)
        mse.append(float(np.mean((y - pred) ** 2)))
    return GbdtModel(f0, tuple(trees), params.shrinkage, params), mse


def train_gbdt(records: Sequence[TransformerRecord], params: GbdtParams = GbdtParams()) -> GbdtModel:
    """Fit the ensemble on Fault=1 / Stable=0 targets."""
    if len(records) < 2:
        raise DataError("need at least 2 records to train")
    y = label_vector(records)
    if y.min() == y.max():
        raise DataError("training records contain a single class")
    model, _ = train_gbdt_arrays(feature_matrix(records), y, params)
    return model


def _check_features(features) -> np.ndarray:
    x = np.asarray(features, dtype=float)
    if x.shape != (N_FEATURES,):
        raise ShapeError(f"expected {N_FEATURES} features, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("features must be finite")
    return x


def predict_raw(model: GbdtModel, features) -> float:
    x = _check_features(features)
    return model.init_score + model.shrinkage * math.fsum(find_leaf(t, x).value for t in model.trees)


def feature_cross(model: GbdtModel, features) -> np.ndarray:
    """One-hot leaf indicators concatenated over trees (length ``total_leaves``)."""
    x = _check_features(features)
    if not model.trees:
        raise ValueError("no trees to cross")
    out = np.zeros(model.total_leaves)
    offset = 0
    for tree, count in zip(model.trees, model.leaf_counts):
        out[offset + find_leaf(tree, x).leaf_ordinal] = 1.0
        offset += count
    return out


def cross_matrix(model: GbdtModel, records: Sequence[TransformerRecord]) -> np.ndarray:
    return np.array([feature_cross(model, rec.features) for rec in records]).reshape(
        len(records), model.total_leaves
    )
