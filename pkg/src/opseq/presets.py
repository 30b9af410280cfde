"""Canned experiment grids, classifier parameter sets, and synthetic
family generators used by the scripts, the CLI, and the acceptance suite.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .corpus import FamilyGenerator, generate_synthetic_corpus, symbol_names, write_corpus
from .errors import ConfigError
from .harness import ExperimentConfig, Report, rule_of_thumb_k

SVM_C_VALUES = (1, 10, 100, 1000)
SVM_GAMMA_VALUES = (0.001, 0.0001)
W2V_N_VALUES = (2, 31, 100)
W2V_W_VALUES = (1, 5, 10, 30, 100)
OPCODE_COUNT_VALUES = (20, 31, 40)
SCRAMBLE_FRACTIONS = (0.0, 0.1, 0.2, 0.3, 0.4)


def svm_grid_points() -> list[dict]:
    """The 12-row kernel/C/gamma grid: 4 linear rows plus 8 rbf rows."""
    points = [
        {"classifier": "svm", "classifier_params": {"kernel": "linear", "C": float(c)}}
        for c in SVM_C_VALUES
    ]
    for c in SVM_C_VALUES:
        for gamma in SVM_GAMMA_VALUES:
            points.append(
                {
                    "classifier": "svm",
                    "classifier_params": {"kernel": "rbf", "C": float(c), "gamma": gamma},
                }
            )
    return points


def w2v_sweep_points(n_values=W2V_N_VALUES, w_values=W2V_W_VALUES) -> list[dict]:
    """Embedding-length x window sweep (15 runs with the default values)."""
    return [{"N": int(n), "W": int(w)} for n in n_values for w in w_values]


def knn_sweep_points(k_max: int = 100) -> list[dict]:
    return [
        {"classifier": "knn", "classifier_params": {"k": k}} for k in range(1, k_max + 1)
    ]


def flag_knn_operating_point(report: Report) -> int:
    """Mark the sqrt-of-training-size row in a kNN sweep report; returns that k."""
    if not report.grid_table or not report.sizes:
        raise ConfigError("report does not hold a grid table with partition sizes")
    k_rule = rule_of_thumb_k(report.sizes["train"])
    for row in report.grid_table:
        params = row["point"].get("classifier_params", {})
        row["operating_point"] = params.get("k") == k_rule
    return k_rule


def binary_sweep_configs(
    base: ExperimentConfig,
    m_values=OPCODE_COUNT_VALUES,
    w_values=W2V_W_VALUES,
) -> list[ExperimentConfig]:
    """Word2vec binary-pair sweep over vocabulary size and window (N=2).

    Vocabulary size changes the feature space, so each point is a full
    config rather than a grid override.
    """
    return [
        base.replace(feature="word2vec", N=2, M=int(m), W=int(w))
        for m in m_values
        for w in w_values
    ]


def random_search_points(space: dict[str, list], budget: int = 50, seed: int = 0) -> list[dict]:
    """Seeded uniform draws over a declared parameter grid.

    Each of the ``budget`` points picks one value per axis uniformly at
    random; duplicates are allowed, matching a plain randomized search.
    Returns grid-search override points of the form
    ``{"classifier_params": {...}}``.
    """
    if budget < 1:
        raise ConfigError("random search budget must be >= 1")
    if not space:
        raise ConfigError("random search needs a non-empty parameter space")
    rng = np.random.default_rng(seed)
    keys = sorted(space)
    points = []
    for _ in range(budget):
        params = {k: space[k][int(rng.integers(0, len(space[k])))] for k in keys}
        points.append({"classifier_params": params})
    return points


def rf_search_space() -> dict[str, list]:
    """Declared grid for the forest randomized search (both reported winners lie inside)."""
    return {
        "n_estimators": [200, 400, 600, 800, 1000, 1200, 1400],
        "min_samples_split": [2, 5, 10],
        "min_samples_leaf": [1, 2, 4],
        "max_features": ["auto", "all"],
        "max_depth": [10, 20, 30, 40, 50, None],
        "bootstrap": [True, False],
    }


def rf_params_primary(n_estimators: int = 1000) -> dict:
    """Randomized-search winner for the emission-matrix features."""
    return {
        "n_estimators": int(n_estimators),
        "min_samples_split": 2,
        "min_samples_leaf": 1,
        "max_features": "auto",
        "max_depth": 50,
        "bootstrap": False,
    }


def rf_params_alternate(n_estimators: int = 1400) -> dict:
    """Randomized-search winner for the embedding features."""
    return {
        "n_estimators": int(n_estimators),
        "min_samples_split": 2,
        "min_samples_leaf": 1,
        "max_features": "auto",
        "max_depth": 40,
        "bootstrap": False,
    }


def nn_params_wide(loss: str = "mse", optimizer: str = "adam", epochs: int = 200, **overrides) -> dict:
    """The 200/500-unit architecture trained for 200 epochs."""
    params = {
        "hidden_sizes": [200, 500],
        "loss": loss,
        "optimizer": optimizer,
        "lr": 0.001,
        "epochs": epochs,
        "dropout_rate": 0.0,
        "batch_size": 32,
    }
    params.update(overrides)
    return params


def nn_params_narrow(**overrides) -> dict:
    """The 20/200-unit architecture with categorical cross-entropy."""
    params = {
        "hidden_sizes": [20, 200],
        "loss": "cce",
        "optimizer": "adam",
        "lr": 0.001,
        "epochs": 200,
        "dropout_rate": 0.0,
        "batch_size": 32,
    }
    params.update(overrides)
    return params


def nn_params_regularized(**overrides) -> dict:
    """Wide architecture with 0.5 dropout against overfitting."""
    params = nn_params_wide(loss="cce", optimizer="adam")
    params["dropout_rate"] = 0.5
    params.update(overrides)
    return params


def nn_params_reduced(**overrides) -> dict:
    """Short schedule: 50 epochs, Adam at lr 1e-4 with betas (0.9, 0.999)."""
    params = nn_params_regularized(epochs=50, lr=0.0001, beta1=0.9, beta2=0.999)
    params.update(overrides)
    return params


def _family_emissions(M: int, f: int) -> np.ndarray:
    """Two emission rows for synthetic family f: anchored on symbol 0 with
    family-specific peaks, every symbol kept strictly positive."""
    b0 = np.zeros(M)
    b1 = np.zeros(M)
    peaks0 = (1 + f, 8 + f)
    peaks1 = (15 + f, 22 + f)
    b0[0], b0[peaks0[0]], b0[peaks0[1]] = 0.35, 0.25, 0.12
    b1[0], b1[peaks1[0]], b1[peaks1[1]] = 0.15, 0.30, 0.12
    for row in (b0, b1):
        rest = np.nonzero(row == 0)[0]
        row[rest] = (1.0 - row.sum()) / rest.size
    return np.stack([b0, b1])


def default_seven_families(M: int = 31) -> list[FamilyGenerator]:
    """Seven separable two-state generators over an M-symbol alphabet.

    Designed so every pair of families differs by at least 0.4 in L1
    distance on each emission row, while symbol 0 stays the corpus-wide
    most frequent opcode.
    """
    if M < 29:
        raise ConfigError("the seven-family preset needs at least 29 symbols")
    families = []
    for f in range(7):
        families.append(
            FamilyGenerator(
                label=f"fam_{chr(ord('a') + f)}",
                A=np.array([[0.84 + 0.01 * f, 0.16 - 0.01 * f], [0.12, 0.88]]),
                B=_family_emissions(M, f),
                pi=np.array([0.6, 0.4]),
            )
        )
    return families


def binary_pair(M: int = 31) -> list[FamilyGenerator]:
    """Two well-separated families for binary and robustness experiments."""
    return default_seven_families(M)[:2]


def write_synthetic_corpus(
    out_dir,
    families: list[FamilyGenerator],
    samples_per_family: int,
    length_range: tuple[int, int],
    seed: int,
) -> Path:
    """Generate and write a synthetic corpus; returns the manifest path.

    Sequences are written as mnemonic files (opNN naming) so the standard
    vocabulary pipeline applies unchanged.
    """
    manifest, sequences = generate_synthetic_corpus(
        families, samples_per_family, length_range, seed
    )
    n_symbols = max(g.n_symbols for g in families)
    return write_corpus(out_dir, manifest, sequences, names=symbol_names(n_symbols))


def load_family_specs(path) -> tuple[list[FamilyGenerator], dict]:
    """Read a synthetic-corpus spec file.

    Either explicit generators:
        {"seed": 7, "samples_per_family": 100, "length_range": [1000, 3000],
         "families": [{"label": "fam_a", "A": [[..]], "B": [[..]], "pi": [..]}]}
    or a preset reference:
        {"preset": "seven" | "pair", "M": 31, "seed": ..., ...}
    Returns (generators, corpus keyword arguments).
    """
    try:
        spec = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    kwargs = {
        "samples_per_family": int(spec.get("samples_per_family", 100)),
        "length_range": tuple(spec.get("length_range", (1000, 3000))),
        "seed": int(spec.get("seed", 0)),
    }
    if "preset" in spec:
        M = int(spec.get("M", 31))
        if spec["preset"] == "seven":
            return default_seven_families(M), kwargs
        if spec["preset"] == "pair":
            return binary_pair(M), kwargs
        raise ConfigError(f"unknown corpus preset {spec['preset']!r}")
    if "families" not in spec:
        raise ConfigError("corpus spec needs either a preset or explicit families")
    generators = [
        FamilyGenerator(
            label=str(fam["label"]),
            A=np.asarray(fam["A"], dtype=float),
            B=np.asarray(fam["B"], dtype=float),
            pi=np.asarray(fam["pi"], dtype=float),
        )
        for fam in spec["families"]
    ]
    return generators, kwargs
