"""k-nearest-neighbor classification (lazy, brute force distances)."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigError, DataError
from .base import Classifier, LabeledDataset


def knn_predict(train: LabeledDataset, k: int, query: np.ndarray) -> int:
    """Majority label among the k nearest training points (Euclidean).

    Distance ties are broken by lower training-sample index (stable sort);
    vote ties by smaller label id.
    """
    if not 1 <= k <= train.size:
        raise ConfigError(f"k must lie in [1, {train.size}], got {k}")
    query = np.asarray(query, dtype=float)
    if query.shape != (train.D,):
        raise DataError(f"query has shape {query.shape}, expected ({train.D},)")
    d2 = np.einsum("ij,ij->i", train.X - query, train.X - query)
    nearest = np.argsort(d2, kind="stable")[:k]
    votes = np.bincount(train.y[nearest], minlength=train.class_count)
    return int(np.argmax(votes))


class KnnClassifier(Classifier):
    kind = "knn"

    def __init__(self, train: LabeledDataset, k: int):
        if not 1 <= k <= train.size:
            raise ConfigError(f"k must lie in [1, {train.size}], got {k}")
        self.train = train
        self.k = k
        self.families = train.families

    def predict(self, x: np.ndarray) -> int:
        return knn_predict(self.train, self.k, x)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "k": self.k,
            "families": self.families,
            "X": self.train.X.tolist(),
            "y": self.train.y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "KnnClassifier":
        train = LabeledDataset(
            X=np.asarray(d["X"], dtype=float),
            y=np.asarray(d["y"], dtype=np.int64),
            families=list(d["families"]),
        )
        return cls(train, int(d["k"]))


def train_knn(data: LabeledDataset, k: int) -> KnnClassifier:
    return KnnClassifier(data, k)
