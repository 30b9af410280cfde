"""Per-sample word embeddings over opcode streams.

One embedding model is trained per sample: skip-gram with negative
sampling over all (center, context) pairs within the window, updates
applied serially for determinism. The center ("input") vectors are the
exported embeddings. Negative draws come from a unigram^0.75 distribution
over the sample's own token counts.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .corpus import OpcodeSequence, Vocabulary
from .errors import ConfigError, DataError
from .features import FeatureVector


@dataclass
class W2vParams:
    epochs: int = 5
    lr_initial: float = 0.025
    lr_final: float = 0.0001
    negatives: int = 5
    noise_power: float = 0.75

    def __post_init__(self):
        if self.epochs < 0 or self.negatives < 0:
            raise ConfigError("epochs and negatives must be >= 0")
        if self.lr_initial <= 0 or self.lr_final <= 0:
            raise ConfigError("learning rates must be positive")

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "lr_initial": self.lr_initial,
            "lr_final": self.lr_final,
            "negatives": self.negatives,
            "noise_power": self.noise_power,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "W2vParams":
        return cls(**d)


@dataclass
class EmbeddingMatrix:
    """Trained center embeddings: one length-N vector per vocabulary opcode."""

    N: int
    M: int
    window: int
    vectors: np.ndarray  # (M, N)
    params: W2vParams
    seed: int | None = None
    sample_id: str | None = None
    family: str | None = None
    epoch_losses: list[float] = field(default_factory=list, repr=False)
    # the output-side ("context") matrix; kept for model scoring, not serialized
    context_vectors: np.ndarray | None = field(default=None, repr=False)

    def validate(self) -> None:
        if self.vectors.shape != (self.M, self.N):
            raise DataError("embedding matrix shape disagrees with M and N")
        if not np.all(np.isfinite(self.vectors)):
            raise DataError("embedding matrix has non-finite entries")

    def pair_score(self, center_id: int, context_id: int) -> float:
        """Model score (center . context dot product) for one ordered pair."""
        if self.context_vectors is None:
            raise DataError("this embedding matrix was loaded without context vectors")
        return float(self.vectors[center_id] @ self.context_vectors[context_id])

    def to_dict(self) -> dict:
        d = {
            "N": self.N,
            "M": self.M,
            "W": self.window,
            "params": self.params.to_dict(),
            "vectors": self.vectors.tolist(),
            "seed": self.seed,
        }
        if self.sample_id is not None:
            d["sample_id"] = self.sample_id
        if self.family is not None:
            d["family"] = self.family
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def from_dict(cls, d: dict) -> "EmbeddingMatrix":
        return cls(
            N=int(d["N"]),
            M=int(d["M"]),
            window=int(d["W"]),
            vectors=np.asarray(d["vectors"], dtype=float),
            params=W2vParams.from_dict(d["params"]),
            seed=d.get("seed"),
            sample_id=d.get("sample_id"),
            family=d.get("family"),
        )

    @classmethod
    def load(cls, path) -> "EmbeddingMatrix":
        return cls.from_dict(json.loads(Path(path).read_text()))


def _log_sigmoid(x: np.ndarray | float) -> np.ndarray | float:
    """log(sigmoid(x)), stable for any finite x."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, -np.log1p(np.exp(-np.abs(x))), x - np.log1p(np.exp(-np.abs(x))))
    return out if out.ndim else float(out)


def _sigmoid(x):
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
    return out if out.ndim else float(out)


def sgns_loss_and_grad(center: np.ndarray, context: np.ndarray, negatives: np.ndarray):
    """Negative-sampling objective for one (center, context) pair.

    loss = -log sigmoid(u.v) - sum_i log sigmoid(-u.n_i), computed with the
    stable log-sigmoid so saturation never produces inf. Returns
    (loss, grad_center, grad_context, grad_negatives).
    """
    u = np.asarray(center, dtype=float)
    v = np.asarray(context, dtype=float)
    negs = np.asarray(negatives, dtype=float).reshape(-1, u.shape[0]) if np.size(negatives) else np.zeros((0, u.shape[0]))
    s_pos = _sigmoid(u @ v)
    loss = -_log_sigmoid(u @ v)
    grad_center = (s_pos - 1.0) * v
    grad_context = (s_pos - 1.0) * u
    grad_negatives = np.zeros_like(negs)
    for i in range(negs.shape[0]):
        s_neg = _sigmoid(u @ negs[i])
        loss += -_log_sigmoid(-(u @ negs[i]))
        grad_center = grad_center + s_neg * negs[i]
        grad_negatives[i] = s_neg * u
    return float(loss), grad_center, grad_context, grad_negatives


@njit(cache=True)
def _sgns_epoch(centers, contexts, negs, Wc, Wx, lr0, lr1, total_updates, start_update):
    """Run one epoch of serial SGNS updates in place; returns summed loss.

    The learning rate decays linearly from lr0 (update 0) to lr1 (last
    update) over the whole training run. Negative draws equal to the true
    context are skipped.
    """
    P = centers.shape[0]
    N = Wc.shape[1]
    k = negs.shape[1]
    denom = total_updates - 1 if total_updates > 1 else 1
    total_loss = 0.0
    acc = np.empty(N)
    for p in range(P):
        u_idx = centers[p]
        v_idx = contexts[p]
        lr = lr0 + (lr1 - lr0) * ((start_update + p) / denom)
        f = 0.0
        for d in range(N):
            f += Wc[u_idx, d] * Wx[v_idx, d]
        if f >= 0.0:
            s = 1.0 / (1.0 + math.exp(-f))
            total_loss += math.log1p(math.exp(-f))
        else:
            e = math.exp(f)
            s = e / (1.0 + e)
            total_loss += math.log1p(e) - f
        g = s - 1.0
        for d in range(N):
            acc[d] = g * Wx[v_idx, d]
            Wx[v_idx, d] -= lr * g * Wc[u_idx, d]
        for i in range(k):
            n_idx = negs[p, i]
            if n_idx == v_idx:
                continue
            f = 0.0
            for d in range(N):
                f += Wc[u_idx, d] * Wx[n_idx, d]
            if f >= 0.0:
                s = 1.0 / (1.0 + math.exp(-f))
                total_loss += f + math.log1p(math.exp(-f))
            else:
                e = math.exp(f)
                s = e / (1.0 + e)
                total_loss += math.log1p(e)
            for d in range(N):
                acc[d] += s * Wx[n_idx, d]
                Wx[n_idx, d] -= lr * s * Wc[u_idx, d]
        for d in range(N):
            Wc[u_idx, d] -= lr * acc[d]
    return total_loss


def _training_pairs(ids: np.ndarray, window: int) -> tuple[np.ndarray, np.ndarray]:
    """All (center, context) id pairs within the window, in scan order."""
    L = ids.shape[0]
    centers = []
    contexts = []
    for t in range(L):
        lo = max(0, t - window)
        hi = min(L, t + window + 1)
        for c in range(lo, hi):
            if c == t:
                continue
            centers.append(ids[t])
            contexts.append(ids[c])
    return np.asarray(centers, dtype=np.int64), np.asarray(contexts, dtype=np.int64)


def train_word2vec(
    seq,
    vocab: Vocabulary,
    N: int,
    W: int,
    params: W2vParams | None = None,
    seed: int = 0,
) -> EmbeddingMatrix:
    """Train one skip-gram model on one filtered sequence.

    Center vectors start uniform in [-0.5/N, 0.5/N] (seeded), context
    vectors at zero; opcodes absent from the sequence keep their initial
    vectors. With zero epochs the initialization is returned unchanged.
    The result is a pure function of (seq, vocab.M, N, W, params, seed).
    """
    params = params or W2vParams()
    if N < 1 or W < 1:
        raise ConfigError(f"need N >= 1 and W >= 1, got N={N}, W={W}")
    M = vocab.M
    ids = seq.ids() if isinstance(seq, OpcodeSequence) else np.asarray(seq, dtype=np.int64)
    if ids.size < 2:
        raise DataError("word2vec training needs at least 2 tokens to form a pair")
    if ids.min() < 0 or ids.max() >= M:
        raise DataError(f"sequence holds ids outside [0, {M})")

    rng = np.random.default_rng(seed)
    Wc = (rng.random((M, N)) - 0.5) / N
    Wx = np.zeros((M, N))

    counts = np.bincount(ids, minlength=M).astype(float)
    noise = counts**params.noise_power
    noise /= noise.sum()

    centers, contexts = _training_pairs(ids, W)
    P = centers.shape[0]
    total_updates = params.epochs * P
    epoch_losses: list[float] = []
    for e in range(params.epochs):
        if params.negatives > 0:
            negs = rng.choice(M, size=(P, params.negatives), p=noise).astype(np.int64)
        else:
            negs = np.zeros((P, 0), dtype=np.int64)
        loss = _sgns_epoch(
            centers, contexts, negs, Wc, Wx,
            params.lr_initial, params.lr_final, total_updates, e * P,
        )
        if not math.isfinite(loss):
            raise DataError(f"non-finite embedding loss in epoch {e}")
        epoch_losses.append(loss / P)

    emb = EmbeddingMatrix(
        N=N,
        M=M,
        window=W,
        vectors=Wc,
        params=params,
        seed=seed,
        sample_id=getattr(seq, "sample_id", None),
        family=getattr(seq, "family", None),
        epoch_losses=epoch_losses,
        context_vectors=Wx,
    )
    emb.validate()
    return emb


def word2vec_features(emb: EmbeddingMatrix, vocab: Vocabulary) -> FeatureVector:
    """Concatenate per-opcode embeddings in vocabulary rank order (id 0 first)."""
    if emb.M != vocab.M:
        raise DataError(f"embedding M={emb.M} does not match vocabulary M={vocab.M}")
    return FeatureVector(
        values=emb.vectors.reshape(-1).copy(),
        provenance="word2vec",
        sample_id=emb.sample_id or "",
        family=emb.family or "",
    )
