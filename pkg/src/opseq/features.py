"""Engineered feature vectors and their CSV interchange format.

The CSV layout is ``sample_id,family,f0..f{D-1}``, one row per sample.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError


@dataclass
class FeatureVector:
    """One sample's engineered features with label and provenance."""

    values: np.ndarray
    provenance: str  # "hmm2vec" or "word2vec"
    sample_id: str
    family: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise DataError("feature values must be one-dimensional")


def write_features_csv(path, features: list[FeatureVector]) -> None:
    if not features:
        raise DataError("no feature vectors to write")
    dim = features[0].values.shape[0]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "family"] + [f"f{i}" for i in range(dim)])
        for fv in features:
            if fv.values.shape[0] != dim:
                raise DataError(f"feature length mismatch for sample {fv.sample_id!r}")
            writer.writerow([fv.sample_id, fv.family] + [repr(float(v)) for v in fv.values])


def read_features_csv(path, provenance: str = "unknown") -> list[FeatureVector]:
    path = Path(path)
    out: list[FeatureVector] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[:2] != ["sample_id", "family"]:
            raise DataError(f"{path}: not a feature CSV (bad header)")
        dim = len(header) - 2
        for row in reader:
            if len(row) != dim + 2:
                raise DataError(f"{path}: row for {row[0] if row else '?'} has wrong width")
            out.append(
                FeatureVector(
                    values=np.array([float(v) for v in row[2:]]),
                    provenance=provenance,
                    sample_id=row[0],
                    family=row[1],
                )
            )
    if not out:
        raise DataError(f"{path}: no feature rows")
    return out
