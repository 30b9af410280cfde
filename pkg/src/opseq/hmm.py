"""Discrete hidden Markov models trained per sample with scaled Baum-Welch,
plus the emission-matrix feature vectors derived from them.

The forward/backward recursions use per-step scaling so log-likelihoods
stay finite for sequences of any length. The hot loops are numba-compiled;
one EM step for N=2, M=31, T=2000 runs in well under a millisecond.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numba import njit

from .corpus import OpcodeSequence, Vocabulary
from .errors import ConfigError, DataError, NumericError, UnsupportedShapeError
from .features import FeatureVector
from .seeding import derive_seed

EMISSION_FLOOR = 1e-10
ROW_SUM_ATOL = 1e-9


@dataclass
class HmmModel:
    """A trained discrete HMM: row-stochastic A (NxN), B (NxM), pi (N)."""

    N: int
    M: int
    A: np.ndarray
    B: np.ndarray
    pi: np.ndarray
    log_likelihood: float = float("nan")
    iterations: int = 0
    seed: int | None = None
    sample_id: str | None = None
    family: str | None = None
    log_history: np.ndarray | None = field(default=None, repr=False)

    def validate(self) -> None:
        for name, mat in (("A", self.A), ("B", self.B), ("pi", self.pi[None, :])):
            if not np.all(np.isfinite(mat)):
                raise NumericError(f"{name} contains non-finite entries")
            if np.any(mat < -1e-12) or np.any(mat > 1.0 + 1e-12):
                raise DataError(f"{name} has entries outside [0, 1]")
            if np.max(np.abs(mat.sum(axis=1) - 1.0)) > ROW_SUM_ATOL:
                raise DataError(f"{name} rows do not sum to 1 within {ROW_SUM_ATOL}")
        if self.A.shape != (self.N, self.N) or self.B.shape != (self.N, self.M):
            raise DataError("A/B shapes disagree with N and M")

    def to_dict(self) -> dict:
        d = {
            "N": self.N,
            "M": self.M,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "pi": self.pi.tolist(),
            "log_likelihood": self.log_likelihood,
            "iterations": self.iterations,
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
    def from_dict(cls, d: dict) -> "HmmModel":
        return cls(
            N=int(d["N"]),
            M=int(d["M"]),
            A=np.asarray(d["A"], dtype=float),
            B=np.asarray(d["B"], dtype=float),
            pi=np.asarray(d["pi"], dtype=float),
            log_likelihood=float(d["log_likelihood"]),
            iterations=int(d["iterations"]),
            seed=d.get("seed"),
            sample_id=d.get("sample_id"),
            family=d.get("family"),
        )

    @classmethod
    def load(cls, path) -> "HmmModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class RestartPolicy:
    """Restart counts keyed on training-sequence length.

    Sequences of threshold_low..threshold_high tokens (inclusive) get
    restarts_short random restarts; everything else gets restarts_long.
    """

    threshold_low: int = 1000
    threshold_high: int = 5000
    restarts_short: int = 100
    restarts_long: int = 50

    def __post_init__(self):
        if self.restarts_short < 1 or self.restarts_long < 1:
            raise ConfigError("restart counts must be >= 1")

    def restarts_for(self, length: int) -> int:
        if self.threshold_low <= length <= self.threshold_high:
            return self.restarts_short
        return self.restarts_long

    @classmethod
    def fixed(cls, restarts: int) -> "RestartPolicy":
        """A policy that always runs the given number of restarts."""
        return cls(restarts_short=restarts, restarts_long=restarts)


@njit(cache=True)
def _forward_scaled(seq, A, B, pi):
    """Scaled forward pass; returns log P(O | lambda), -inf if impossible."""
    T = seq.shape[0]
    N = A.shape[0]
    alpha = np.empty(N)
    nxt = np.empty(N)
    logp = 0.0
    for i in range(N):
        alpha[i] = pi[i] * B[i, seq[0]]
    c = alpha.sum()
    if c <= 0.0:
        return -np.inf
    logp += np.log(c)
    for i in range(N):
        alpha[i] /= c
    for t in range(1, T):
        for j in range(N):
            s = 0.0
            for i in range(N):
                s += alpha[i] * A[i, j]
            nxt[j] = s * B[j, seq[t]]
        c = nxt.sum()
        if c <= 0.0:
            return -np.inf
        logp += np.log(c)
        for j in range(N):
            alpha[j] = nxt[j] / c
    return logp


@njit(cache=True)
def _bw_step(seq, A, B, pi, floor):
    """One scaled Baum-Welch iteration.

    Returns (logL of the input parameters, A_new, B_new, pi_new). The
    emission matrix is floored at ``floor`` and renormalized to keep later
    scoring finite.
    """
    T = seq.shape[0]
    N = A.shape[0]
    M = B.shape[1]

    alpha = np.empty((T, N))
    beta = np.empty((T, N))
    c = np.empty(T)

    # forward
    for i in range(N):
        alpha[0, i] = pi[i] * B[i, seq[0]]
    c[0] = alpha[0].sum()
    if c[0] <= 0.0:
        return -np.inf, A.copy(), B.copy(), pi.copy()
    for i in range(N):
        alpha[0, i] /= c[0]
    for t in range(1, T):
        for j in range(N):
            s = 0.0
            for i in range(N):
                s += alpha[t - 1, i] * A[i, j]
            alpha[t, j] = s * B[j, seq[t]]
        c[t] = alpha[t].sum()
        if c[t] <= 0.0:
            return -np.inf, A.copy(), B.copy(), pi.copy()
        for j in range(N):
            alpha[t, j] /= c[t]

    logp = np.log(c).sum()

    # backward, scaled by the forward constants
    for i in range(N):
        beta[T - 1, i] = 1.0
    for t in range(T - 2, -1, -1):
        for i in range(N):
            s = 0.0
            for j in range(N):
                s += A[i, j] * B[j, seq[t + 1]] * beta[t + 1, j]
            beta[t, i] = s / c[t + 1]

    # accumulate expected counts
    A_num = np.zeros((N, N))
    gamma_sum_nolast = np.zeros(N)
    B_num = np.zeros((N, M))
    gamma_sum = np.zeros(N)
    gamma0 = np.empty(N)
    for t in range(T):
        norm = 0.0
        for i in range(N):
            norm += alpha[t, i] * beta[t, i]
        for i in range(N):
            g = alpha[t, i] * beta[t, i] / norm
            B_num[i, seq[t]] += g
            gamma_sum[i] += g
            if t == 0:
                gamma0[i] = g
            if t < T - 1:
                gamma_sum_nolast[i] += g
        if t < T - 1:
            for i in range(N):
                for j in range(N):
                    A_num[i, j] += alpha[t, i] * A[i, j] * B[j, seq[t + 1]] * beta[t + 1, j] / c[t + 1]

    A_new = np.empty((N, N))
    B_new = np.empty((N, M))
    pi_new = np.empty(N)
    for i in range(N):
        if gamma_sum_nolast[i] > 0.0:
            for j in range(N):
                A_new[i, j] = A_num[i, j] / gamma_sum_nolast[i]
        else:
            for j in range(N):
                A_new[i, j] = A[i, j]
        row = 0.0
        for j in range(N):
            row += A_new[i, j]
        for j in range(N):
            A_new[i, j] /= row
        if gamma_sum[i] > 0.0:
            for k in range(M):
                b = B_num[i, k] / gamma_sum[i]
                B_new[i, k] = b if b > floor else floor
        else:
            for k in range(M):
                B_new[i, k] = B[i, k] if B[i, k] > floor else floor
        row = 0.0
        for k in range(M):
            row += B_new[i, k]
        for k in range(M):
            B_new[i, k] /= row
        pi_new[i] = gamma0[i]
    row = pi_new.sum()
    for i in range(N):
        pi_new[i] /= row
    return logp, A_new, B_new, pi_new


def _as_ids(seq, M: int) -> np.ndarray:
    ids = seq.ids() if isinstance(seq, OpcodeSequence) else np.asarray(seq, dtype=np.int64)
    if ids.size and (ids.min() < 0 or ids.max() >= M):
        raise DataError(f"sequence holds symbol ids outside [0, {M})")
    return ids


def forward_log_prob(model: HmmModel, seq) -> float:
    """log P(O | lambda) via the scaled forward algorithm."""
    ids = _as_ids(seq, model.M)
    if ids.size < 1:
        raise DataError("cannot score an empty sequence")
    return float(_forward_scaled(ids, model.A, model.B, model.pi))


def _random_stochastic(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    """Uniform rows with a +/-0.05 per-cell perturbation, floored and renormalized."""
    mat = 1.0 / cols + rng.uniform(-0.05, 0.05, size=(rows, cols))
    mat = np.maximum(mat, EMISSION_FLOOR)
    return mat / mat.sum(axis=1, keepdims=True)


def baum_welch(
    seq,
    N: int,
    M: int,
    seed: int = 0,
    max_iters: int = 500,
    tol: float = 1e-6,
    check_each_iteration: bool = True,
) -> HmmModel:
    """Train one HMM on one sequence from a seeded random initialization.

    Iterates scaled forward-backward re-estimation until the absolute
    log-likelihood improvement drops below ``tol`` or ``max_iters`` is
    reached. The per-iteration log-likelihoods (of each pre-update
    parameter set, final parameters included) are kept in ``log_history``.
    """
    if N < 1:
        raise ConfigError(f"N must be >= 1, got {N}")
    ids = _as_ids(seq, M)
    if ids.size < 2:
        raise DataError("training requires a sequence of length >= 2")
    rng = np.random.default_rng(seed)
    A = _random_stochastic(rng, N, N)
    B = _random_stochastic(rng, N, M)
    pi = _random_stochastic(rng, 1, N)[0]

    history = []
    iterations = 0
    for it in range(max_iters):
        logp, A_new, B_new, pi_new = _bw_step(ids, A, B, pi, EMISSION_FLOOR)
        if not math.isfinite(logp):
            raise NumericError(f"non-finite log-likelihood at iteration {it}", iteration=it)
        history.append(logp)
        A, B, pi = A_new, B_new, pi_new
        iterations = it + 1
        if check_each_iteration:
            if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B)) and np.all(np.isfinite(pi))):
                raise NumericError(f"non-finite parameters at iteration {it}", iteration=it)
            if (
                np.max(np.abs(A.sum(axis=1) - 1.0)) > ROW_SUM_ATOL
                or np.max(np.abs(B.sum(axis=1) - 1.0)) > ROW_SUM_ATOL
                or abs(pi.sum() - 1.0) > ROW_SUM_ATOL
            ):
                raise NumericError(f"row-stochasticity lost at iteration {it}", iteration=it)
        if it > 0 and abs(history[-1] - history[-2]) < tol:
            break

    final_logp = float(_forward_scaled(ids, A, B, pi))
    if not math.isfinite(final_logp):
        raise NumericError("non-finite log-likelihood after convergence", iteration=iterations)
    history.append(final_logp)
    model = HmmModel(
        N=N,
        M=M,
        A=A,
        B=B,
        pi=pi,
        log_likelihood=final_logp,
        iterations=iterations,
        seed=seed,
        sample_id=getattr(seq, "sample_id", None),
        family=getattr(seq, "family", None),
        log_history=np.asarray(history),
    )
    model.validate()
    return model


def train_with_restarts(
    seq,
    N: int,
    M: int,
    policy: RestartPolicy | None = None,
    seed: int = 0,
    max_iters: int = 500,
    tol: float = 1e-6,
) -> HmmModel:
    """Best-of-R Baum-Welch: highest final log-likelihood wins.

    R comes from the policy and the sequence length. Restart r uses the
    derived seed ``derive_seed(seed, r)``, so any execution order gives the
    same winner; ties keep the lowest restart index.
    """
    policy = policy or RestartPolicy()
    ids = _as_ids(seq, M)
    restarts = policy.restarts_for(int(ids.size))
    best: HmmModel | None = None
    for r in range(restarts):
        model = baum_welch(
            seq, N, M, seed=derive_seed(seed, r), max_iters=max_iters, tol=tol,
            check_each_iteration=False,
        )
        if best is None or model.log_likelihood > best.log_likelihood:
            best = model
    best.validate()
    return best


def hmm2vec(model: HmmModel, vocab: Vocabulary, allow_general_n: bool = False) -> FeatureVector:
    """Flatten the emission matrix into a feature vector with anchored row order.

    The anchor opcode is vocabulary id 0 (the corpus-wide most frequent);
    the state most likely to emit it supplies the first M-block, which
    makes the vector invariant to hidden-state permutations of the model.
    N other than 2 requires ``allow_general_n``, in which case rows are
    ordered by descending anchor probability with index tie-breaking.
    """
    if model.M != vocab.M:
        raise DataError(f"model M={model.M} does not match vocabulary M={vocab.M}")
    if model.N != 2 and not allow_general_n:
        raise UnsupportedShapeError(
            f"hmm2vec expects N=2 hidden states, got N={model.N} "
            "(pass allow_general_n=True for the extended ordering)"
        )
    if model.N == 2:
        anchor = 0 if model.B[0, 0] >= model.B[1, 0] else 1
        order = [anchor, 1 - anchor]
    else:
        order = sorted(range(model.N), key=lambda s: (-model.B[s, 0], s))
    values = np.concatenate([model.B[s] for s in order])
    return FeatureVector(
        values=values,
        provenance="hmm2vec",
        sample_id=model.sample_id or "",
        family=model.family or "",
    )
