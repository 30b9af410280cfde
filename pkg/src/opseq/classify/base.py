"""Shared dataset container and the uniform prediction interface."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..features import FeatureVector


@dataclass
class LabeledDataset:
    """Feature matrix with integer family labels.

    Label ids index ``families``; they are assigned by sorted family name
    so that id order (and with it every tie-breaking rule) is deterministic.
    """

    X: np.ndarray
    y: np.ndarray
    families: list[str]
    sample_ids: list[str] | None = None

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.X.ndim != 2:
            raise DataError("feature matrix must be 2-dimensional")
        if self.X.shape[0] != self.y.shape[0]:
            raise DataError("feature and label counts disagree")
        if len(self.families) < 2:
            raise DataError("a labeled dataset needs at least 2 families")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= len(self.families)):
            raise DataError("labels outside [0, class_count)")

    @property
    def size(self) -> int:
        return self.X.shape[0]

    @property
    def D(self) -> int:
        return self.X.shape[1]

    @property
    def class_count(self) -> int:
        return len(self.families)

    def subset(self, indices) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(
            X=self.X[idx],
            y=self.y[idx],
            families=self.families,
            sample_ids=[self.sample_ids[i] for i in idx] if self.sample_ids else None,
        )

    @classmethod
    def from_feature_vectors(
        cls, features: list[FeatureVector], families: list[str] | None = None
    ) -> "LabeledDataset":
        if not features:
            raise DataError("no feature vectors supplied")
        if families is None:
            families = sorted({fv.family for fv in features})
        fam_to_id = {f: i for i, f in enumerate(families)}
        try:
            y = np.array([fam_to_id[fv.family] for fv in features], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"feature vector with unknown family {exc.args[0]!r}") from exc
        X = np.stack([fv.values for fv in features])
        return cls(X=X, y=y, families=list(families), sample_ids=[fv.sample_id for fv in features])


class Classifier:
    """Interface shared by all trained classifiers."""

    kind: str = "?"
    families: list[str]

    def predict(self, x: np.ndarray) -> int:
        raise NotImplementedError

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.array([self.predict(x) for x in X], dtype=np.int64)

    def to_dict(self) -> dict:
        raise NotImplementedError

    def _check_dim(self, x: np.ndarray, D: int) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (D,):
            raise DataError(f"query has shape {x.shape}, expected ({D},)")
        return x


def predict(clf: Classifier, query: np.ndarray) -> int:
    """Predict the label id for one query vector (pure dispatch)."""
    return clf.predict(np.asarray(query, dtype=float))


def save_classifier(clf: Classifier, path) -> None:
    Path(path).write_text(json.dumps(clf.to_dict(), indent=2, sort_keys=True))


def load_classifier(path) -> Classifier:
    from .forest import RandomForestClassifier
    from .knn import KnnClassifier
    from .neural import NeuralNetClassifier
    from .svm import SvmOneVsRest

    d = json.loads(Path(path).read_text())
    kinds = {
        "knn": KnnClassifier,
        "svm": SvmOneVsRest,
        "rf": RandomForestClassifier,
        "nn": NeuralNetClassifier,
    }
    if d.get("kind") not in kinds:
        raise DataError(f"unknown classifier kind {d.get('kind')!r}")
    return kinds[d["kind"]].from_dict(d)
