"""Random forest of CART trees (Gini impurity, midpoint thresholds)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..seeding import derive_seed
from .base import Classifier, LabeledDataset


@dataclass
class RfParams:
    n_estimators: int = 1000
    min_samples_split: int = 2
    min_samples_leaf: int = 1
    max_features: str | int = "auto"  # "auto" = floor(sqrt(D)), "all" = D
    max_depth: int | None = 50
    bootstrap: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ConfigError("n_estimators must be >= 1")
        if self.min_samples_split < 2:
            raise ConfigError("min_samples_split must be >= 2")
        if self.min_samples_leaf < 1:
            raise ConfigError("min_samples_leaf must be >= 1")
        if isinstance(self.max_features, str) and self.max_features not in ("auto", "all"):
            raise ConfigError(f"unknown max_features {self.max_features!r}")

    def mtry(self, D: int) -> int:
        if self.max_features == "auto":
            return max(1, int(np.sqrt(D)))
        if self.max_features == "all":
            return D
        return min(int(self.max_features), D)

    def to_dict(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "max_depth": self.max_depth,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RfParams":
        return cls(**d)


def _majority(counts: np.ndarray) -> int:
    return int(np.argmax(counts))  # vote ties resolve to the smaller label id


def _best_split(X, y, feature_ids, n_classes, min_leaf):
    """Best (weighted Gini, feature, threshold) over the candidate features.

    Thresholds sit at midpoints between consecutive distinct sorted values;
    splits leaving a child below min_leaf are rejected. Returns None when
    no candidate feature admits a valid split.
    """
    n = y.shape[0]
    best = None
    eye = np.eye(n_classes)
    for f in feature_ids:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left_counts = np.cumsum(eye[y[order]], axis=0)
        total = left_counts[-1]
        boundaries = np.nonzero(xs[1:] > xs[:-1])[0]  # split after index b
        if boundaries.size == 0:
            continue
        n_left = boundaries + 1
        n_right = n - n_left
        valid = (n_left >= min_leaf) & (n_right >= min_leaf)
        if not np.any(valid):
            continue
        lc = left_counts[boundaries]
        rc = total[None, :] - lc
        gini_l = 1.0 - np.sum((lc / n_left[:, None]) ** 2, axis=1)
        gini_r = 1.0 - np.sum((rc / n_right[:, None]) ** 2, axis=1)
        weighted = np.where(valid, (n_left * gini_l + n_right * gini_r) / n, np.inf)
        bix = int(np.argmin(weighted))  # ties keep the lowest threshold
        if np.isinf(weighted[bix]):
            continue
        if best is None or weighted[bix] < best[0] - 1e-15:
            b = boundaries[bix]
            best = (float(weighted[bix]), int(f), float((xs[b] + xs[b + 1]) / 2.0))
    return best


def _grow_tree(X, y, n_classes, params: RfParams, rng: np.random.Generator, depth: int):
    counts = np.bincount(y, minlength=n_classes)
    node_label = _majority(counts)
    if (
        np.count_nonzero(counts) <= 1
        or y.shape[0] < params.min_samples_split
        or (params.max_depth is not None and depth >= params.max_depth)
    ):
        return node_label
    mtry = params.mtry(X.shape[1])
    feature_ids = np.sort(rng.choice(X.shape[1], size=mtry, replace=False))
    split = _best_split(X, y, feature_ids, n_classes, params.min_samples_leaf)
    if split is None:
        return node_label
    _, f, threshold = split
    left = X[:, f] <= threshold
    right = ~left
    return (
        f,
        threshold,
        _grow_tree(X[left], y[left], n_classes, params, rng, depth + 1),
        _grow_tree(X[right], y[right], n_classes, params, rng, depth + 1),
    )


def _tree_predict(node, x) -> int:
    while isinstance(node, tuple):
        f, threshold, left, right = node
        node = left if x[f] <= threshold else right
    return node


class RandomForestClassifier(Classifier):
    kind = "rf"

    def __init__(self, trees: list, params: RfParams, families: list[str], D: int):
        self.trees = trees
        self.params = params
        self.families = families
        self.D = D

    def predict(self, x: np.ndarray) -> int:
        x = self._check_dim(x, self.D)
        votes = np.bincount(
            [_tree_predict(t, x) for t in self.trees], minlength=len(self.families)
        )
        return _majority(votes)

    def _node_to_json(self, node):
        if isinstance(node, tuple):
            return [node[0], node[1], self._node_to_json(node[2]), self._node_to_json(node[3])]
        return node

    @staticmethod
    def _node_from_json(node):
        if isinstance(node, list):
            return (
                int(node[0]),
                float(node[1]),
                RandomForestClassifier._node_from_json(node[2]),
                RandomForestClassifier._node_from_json(node[3]),
            )
        return int(node)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "params": self.params.to_dict(),
            "families": self.families,
            "D": self.D,
            "trees": [self._node_to_json(t) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RandomForestClassifier":
        return cls(
            trees=[cls._node_from_json(t) for t in d["trees"]],
            params=RfParams.from_dict(d["params"]),
            families=list(d["families"]),
            D=int(d["D"]),
        )


def rf_train(data: LabeledDataset, params: RfParams) -> RandomForestClassifier:
    """Grow the forest; per-tree RNG is derived from (seed, tree index).

    With bootstrap each tree sees a resample of the data (drawn before the
    tree's feature subsets); without it every tree sees the full set and
    diversity comes from per-node feature sampling alone.
    """
    if data.size == 0:
        raise DataError("cannot train a forest on an empty dataset")
    trees = []
    for t in range(params.n_estimators):
        rng = np.random.default_rng(derive_seed(params.seed, t))
        if params.bootstrap:
            idx = rng.integers(0, data.size, size=data.size)
            X_t, y_t = data.X[idx], data.y[idx]
        else:
            X_t, y_t = data.X, data.y
        trees.append(_grow_tree(X_t, y_t, data.class_count, params, rng, depth=0))
    return RandomForestClassifier(trees, params, data.families, data.D)
