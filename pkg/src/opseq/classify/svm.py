"""Soft-margin SVM trained with simplified SMO, one-vs-rest for multiclass.

The dual is solved with a two-variable working set: the first index comes
from a sweep over all examples, the second is drawn uniformly (seeded).
Training ends once no sweep changes any pair for ``max_passes`` consecutive
sweeps, i.e. the KKT conditions hold within ``tol``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..seeding import derive_seed
from .base import Classifier, LabeledDataset

SUPPORT_EPS = 1e-8


@dataclass
class SvmParams:
    kernel: str = "linear"  # "linear" or "rbf"
    C: float = 1.0
    gamma: float = 0.001  # rbf width: K(x, z) = exp(-gamma * ||x - z||^2)
    tol: float = 1e-3
    max_passes: int = 5
    max_sweeps: int = 2000  # safety cap on total sweeps

    def __post_init__(self):
        if self.kernel not in ("linear", "rbf"):
            raise ConfigError(f"unknown kernel {self.kernel!r}")
        if self.C <= 0:
            raise ConfigError("C must be positive")
        if self.kernel == "rbf" and self.gamma <= 0:
            raise ConfigError("gamma must be positive for the rbf kernel")

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel,
            "C": self.C,
            "gamma": self.gamma,
            "tol": self.tol,
            "max_passes": self.max_passes,
            "max_sweeps": self.max_sweeps,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmParams":
        return cls(**d)


def kernel_matrix(params: SvmParams, X: np.ndarray, Z: np.ndarray) -> np.ndarray:
    if params.kernel == "linear":
        return X @ Z.T
    sq = (
        np.einsum("ij,ij->i", X, X)[:, None]
        - 2.0 * X @ Z.T
        + np.einsum("ij,ij->i", Z, Z)[None, :]
    )
    return np.exp(-params.gamma * np.maximum(sq, 0.0))


class SvmBinary(Classifier):
    """A single binary machine; decision f(x) = sum_i alpha_i y_i K(x_i, x) + b."""

    kind = "svm-binary"

    def __init__(self, X, y_signed, alphas, b, params: SvmParams, classes, families):
        self.X = np.asarray(X, dtype=float)
        self.y_signed = np.asarray(y_signed, dtype=float)
        self.alphas = np.asarray(alphas, dtype=float)
        self.b = float(b)
        self.params = params
        self.classes = [int(c) for c in classes]  # [negative label, positive label]
        self.families = families

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        K = kernel_matrix(self.params, self.X, X)
        return (self.alphas * self.y_signed) @ K + self.b

    def predict(self, x: np.ndarray) -> int:
        x = self._check_dim(x, self.X.shape[1])
        return self.classes[1] if float(self.decision_function(x)[0]) > 0 else self.classes[0]

    def kkt_residual(self) -> float:
        """Largest violation of the dual KKT conditions at the current solution."""
        f = self.decision_function(self.X)
        margins = self.y_signed * f
        C = self.params.C
        viol = np.zeros_like(margins)
        at_zero = self.alphas <= SUPPORT_EPS
        at_c = self.alphas >= C - SUPPORT_EPS
        interior = ~(at_zero | at_c)
        viol[at_zero] = np.maximum(0.0, 1.0 - margins[at_zero])
        viol[at_c] = np.maximum(0.0, margins[at_c] - 1.0)
        viol[interior] = np.abs(margins[interior] - 1.0)
        return float(viol.max()) if viol.size else 0.0

    def dual_objective(self) -> float:
        K = kernel_matrix(self.params, self.X, self.X)
        ay = self.alphas * self.y_signed
        return float(self.alphas.sum() - 0.5 * ay @ K @ ay)

    def to_dict(self) -> dict:
        keep = self.alphas > SUPPORT_EPS
        return {
            "kind": self.kind,
            "params": self.params.to_dict(),
            "classes": self.classes,
            "families": self.families,
            "X": self.X[keep].tolist(),
            "y_signed": self.y_signed[keep].tolist(),
            "alphas": self.alphas[keep].tolist(),
            "b": self.b,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmBinary":
        return cls(
            X=np.asarray(d["X"], dtype=float),
            y_signed=np.asarray(d["y_signed"], dtype=float),
            alphas=np.asarray(d["alphas"], dtype=float),
            b=float(d["b"]),
            params=SvmParams.from_dict(d["params"]),
            classes=d["classes"],
            families=list(d["families"]),
        )


def _try_pair(K, y, alphas, b, i, j, E_i, C):
    """Attempt the two-variable update on (i, j); returns the new b or None.

    Mutates alphas on success. The two-variable subproblem is solved in
    closed form and clipped to the feasible segment; a clipped step below
    1e-12 counts as no progress.
    """
    f_j = float((alphas * y) @ K[:, j] + b)
    E_j = f_j - y[j]
    a_i_old, a_j_old = alphas[i], alphas[j]
    if y[i] != y[j]:
        L, H = max(0.0, a_j_old - a_i_old), min(C, C + a_j_old - a_i_old)
    else:
        L, H = max(0.0, a_i_old + a_j_old - C), min(C, a_i_old + a_j_old)
    if L >= H:
        return None
    eta = 2.0 * K[i, j] - K[i, i] - K[j, j]
    if eta >= 0:
        return None
    a_j = min(H, max(L, a_j_old - y[j] * (E_i - E_j) / eta))
    if abs(a_j - a_j_old) < 1e-12:
        return None
    a_i = a_i_old + y[i] * y[j] * (a_j_old - a_j)
    alphas[i], alphas[j] = a_i, a_j
    b1 = b - E_i - y[i] * (a_i - a_i_old) * K[i, i] - y[j] * (a_j - a_j_old) * K[i, j]
    b2 = b - E_j - y[i] * (a_i - a_i_old) * K[i, j] - y[j] * (a_j - a_j_old) * K[j, j]
    if 0 < a_i < C:
        return b1
    if 0 < a_j < C:
        return b2
    return (b1 + b2) / 2.0


def _smo(K: np.ndarray, y: np.ndarray, params: SvmParams, rng: np.random.Generator):
    """Two-variable SMO on a precomputed Gram matrix; returns (alphas, b).

    Per sweep, every KKT violator i pairs with a second index scanned from
    a seeded random starting position until some partner admits progress
    (the desired step is often blocked by a partner's box bound, so a
    single draw is not enough). The run ends after max_passes consecutive
    sweeps with no violator at all, or at the max_sweeps safety cap.
    """
    n = y.shape[0]
    C = params.C
    tol = params.tol
    alphas = np.zeros(n)
    b = 0.0
    passes = 0
    sweeps = 0
    while passes < params.max_passes and sweeps < params.max_sweeps:
        violators = 0
        for i in range(n):
            f_i = float((alphas * y) @ K[:, i] + b)
            E_i = f_i - y[i]
            r = y[i] * E_i
            if not ((r < -tol and alphas[i] < C) or (r > tol and alphas[i] > 0)):
                continue
            violators += 1
            start = int(rng.integers(0, n))
            for off in range(n):
                j = (start + off) % n
                if j == i:
                    continue
                new_b = _try_pair(K, y, alphas, b, i, j, E_i, C)
                if new_b is not None:
                    b = new_b
                    break
        passes = passes + 1 if violators == 0 else 0
        sweeps += 1
    return alphas, b


def svm_train(data: LabeledDataset, params: SvmParams, seed: int = 0) -> SvmBinary:
    """Train one binary machine on a dataset containing exactly two classes.

    The class with the larger label id is the positive (+1) side.
    """
    present = np.unique(data.y)
    if present.size != 2:
        raise DataError(f"binary SVM needs exactly 2 classes present, got {present.size}")
    neg, pos = int(present[0]), int(present[1])
    y = np.where(data.y == pos, 1.0, -1.0)
    K = kernel_matrix(params, data.X, data.X)
    alphas, b = _smo(K, y, params, np.random.default_rng(seed))
    return SvmBinary(data.X, y, alphas, b, params, [neg, pos], data.families)


class SvmOneVsRest(Classifier):
    kind = "svm"

    def __init__(self, machines: list[SvmBinary], families: list[str]):
        if len(machines) != len(families):
            raise DataError(
                f"one-vs-rest needs one machine per class: {len(machines)} machines "
                f"for {len(families)} families"
            )
        self.machines = machines
        self.families = families

    def decision_values(self, x: np.ndarray) -> np.ndarray:
        return np.array([m.decision_function(x)[0] for m in self.machines])

    def predict(self, x: np.ndarray) -> int:
        x = self._check_dim(x, self.machines[0].X.shape[1])
        return int(np.argmax(self.decision_values(x)))

    def predict_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        scores = np.stack([m.decision_function(X) for m in self.machines], axis=1)
        return np.argmax(scores, axis=1)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "families": self.families,
            "machines": [m.to_dict() for m in self.machines],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SvmOneVsRest":
        return cls(
            machines=[SvmBinary.from_dict(m) for m in d["machines"]],
            families=list(d["families"]),
        )


def svm_train_multiclass(data: LabeledDataset, params: SvmParams, seed: int = 0) -> SvmOneVsRest:
    """One binary machine per class (class vs rest), argmax decision value."""
    C = data.class_count
    machines = []
    for c in range(C):
        y_bin = np.where(data.y == c, 1, 0)
        if y_bin.sum() == 0 or y_bin.sum() == data.size:
            raise DataError(f"class {c} ({data.families[c]!r}) is absent or covers all of training")
        ovr = LabeledDataset(
            X=data.X,
            y=y_bin.astype(np.int64),
            families=["rest", data.families[c]],
            sample_ids=data.sample_ids,
        )
        machines.append(svm_train(ovr, params, seed=derive_seed(seed, c)))
    return SvmOneVsRest(machines, data.families)


def svm_predict_multiclass(machines: SvmOneVsRest | list[SvmBinary], query: np.ndarray) -> int:
    """Argmax of per-class decision values; ties go to the smaller label id."""
    if isinstance(machines, SvmOneVsRest):
        return machines.predict(np.asarray(query, dtype=float))
    if not machines:
        raise DataError("no machines supplied")
    values = [m.decision_function(query)[0] for m in machines]
    return int(np.argmax(values))
