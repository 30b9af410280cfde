"""End-to-end experiment orchestration: stratified splits, per-sample
feature training, classifier fitting, grid search, robustness series, and
machine-readable reports.

Everything is a pure function of (config, seed): per-sample and per-stage
seeds are derived once up front, so serial and parallel schedules produce
byte-identical reports (timing fields aside).
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from joblib import Parallel, delayed

from . import corpus as corpus_mod
from .classify import (
    LabeledDataset,
    NnParams,
    RfParams,
    SvmParams,
    nn_train,
    rf_train,
    svm_train_multiclass,
    train_knn,
)
from .corpus import MIN_ADMITTED_LENGTH, OpcodeSequence, Vocabulary
from .embed import W2vParams, train_word2vec, word2vec_features
from .errors import ConfigError, DataError, NumericError, OpseqError
from .features import FeatureVector
from .hmm import RestartPolicy, hmm2vec, train_with_restarts
from .seeding import derive_seed

# purpose tags for derived seeds
_TAG_SCRAMBLE, _TAG_HMM, _TAG_W2V, _TAG_SPLIT, _TAG_CLF = 0, 1, 2, 3, 4

FEATURE_KINDS = ("hmm2vec", "word2vec")
CLASSIFIER_KINDS = ("knn", "svm", "rf", "nn")


def rule_of_thumb_k(train_size: int) -> int:
    """The k ~ sqrt(S) operating point for kNN."""
    return max(1, round(math.sqrt(train_size)))


@dataclass
class ExperimentConfig:
    """One experiment: corpus, feature engineering choice, classifier, split."""

    manifest: str
    feature: str = "hmm2vec"
    M: int = 31
    N: int = 2  # hidden states (hmm2vec) or embedding length (word2vec)
    W: int = 1  # word2vec window
    classifier: str = "rf"
    classifier_params: dict = field(default_factory=dict)
    split: tuple = (0.7, 0.3)
    seed: int = 0
    scramble_fraction: float = 0.0
    restarts: int | None = None  # None -> length-based RestartPolicy
    w2v: dict = field(default_factory=dict)  # W2vParams overrides
    min_length: int = MIN_ADMITTED_LENGTH

    _FIELDS = (
        "manifest", "feature", "M", "N", "W", "classifier", "classifier_params",
        "split", "seed", "scramble_fraction", "restarts", "w2v", "min_length",
    )

    def __post_init__(self):
        self.split = tuple(float(f) for f in self.split)
        self.validate()

    def validate(self) -> None:
        if self.feature not in FEATURE_KINDS:
            raise ConfigError(f"unknown feature kind {self.feature!r}")
        if self.classifier not in CLASSIFIER_KINDS:
            raise ConfigError(f"unknown classifier {self.classifier!r}")
        if len(self.split) not in (2, 3):
            raise ConfigError("split must have 2 (train,test) or 3 (train,val,test) fractions")
        if any(f <= 0 for f in self.split):
            raise ConfigError("split fractions must be positive")
        if abs(sum(self.split) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(self.split)}")
        if not 0.0 <= self.scramble_fraction <= 1.0:
            raise ConfigError("scramble_fraction must lie in [0, 1]")
        if self.M < 1 or self.N < 1 or self.W < 1:
            raise ConfigError("M, N, and W must all be >= 1")
        if self.restarts is not None and self.restarts < 1:
            raise ConfigError("restarts override must be >= 1")
        if "seed" in self.classifier_params:
            raise ConfigError("classifier_params may not carry a seed; the config seed governs")
        try:
            W2vParams(**self.w2v)
        except TypeError as exc:
            raise ConfigError(f"bad w2v parameters: {exc}") from exc

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "feature": self.feature,
            "M": self.M,
            "N": self.N,
            "W": self.W,
            "classifier": self.classifier,
            "classifier_params": dict(self.classifier_params),
            "split": list(self.split),
            "seed": self.seed,
            "scramble_fraction": self.scramble_fraction,
            "restarts": self.restarts,
            "w2v": dict(self.w2v),
            "min_length": self.min_length,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        unknown = set(d) - set(cls._FIELDS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "manifest" not in d:
            raise ConfigError("config requires a manifest path")
        kwargs = dict(d)
        if "split" in kwargs:
            kwargs["split"] = tuple(kwargs["split"])
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            d = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return cls.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    def replace(self, **overrides) -> "ExperimentConfig":
        d = self.to_dict()
        d.update(overrides)
        return ExperimentConfig.from_dict(d)


@dataclass
class ConfusionMatrix:
    """CxC counts; rows are true families, columns predicted."""

    counts: np.ndarray
    families: list[str]

    @classmethod
    def from_predictions(cls, y_true, y_pred, families: list[str]) -> "ConfusionMatrix":
        C = len(families)
        counts = np.zeros((C, C), dtype=np.int64)
        for t, p in zip(np.asarray(y_true), np.asarray(y_pred)):
            counts[int(t), int(p)] += 1
        return cls(counts, list(families))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else 0.0

    def per_class_accuracy(self) -> list[float]:
        rows = self.counts.sum(axis=1)
        return [
            float(self.counts[i, i] / rows[i]) if rows[i] else 0.0
            for i in range(len(self.families))
        ]

    def to_dict(self) -> dict:
        return {
            "families": self.families,
            "counts": self.counts.tolist(),
            "overall_accuracy": self.overall_accuracy,
            "per_class_accuracy": self.per_class_accuracy(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConfusionMatrix":
        return cls(np.asarray(d["counts"], dtype=np.int64), list(d["families"]))


@dataclass
class Report:
    """Result of one experiment run; serialization is bit-stable except timings."""

    config: dict
    accuracy: float
    confusion: ConfusionMatrix
    timings: dict = field(default_factory=dict)
    curves: dict | None = None
    grid_table: list | None = None
    sizes: dict | None = None  # train/val/test partition sizes

    def to_dict(self, include_timings: bool = True) -> dict:
        d = {
            "config": self.config,
            "accuracy": self.accuracy,
            "confusion": self.confusion.to_dict(),
        }
        if self.sizes is not None:
            d["sizes"] = self.sizes
        if self.curves is not None:
            d["curves"] = self.curves
        if self.grid_table is not None:
            d["grid_table"] = self.grid_table
        if include_timings:
            d["timings"] = self.timings
        return d

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "Report":
        return cls(
            config=d["config"],
            accuracy=float(d["accuracy"]),
            confusion=ConfusionMatrix.from_dict(d["confusion"]),
            timings=d.get("timings", {}),
            curves=d.get("curves"),
            grid_table=d.get("grid_table"),
            sizes=d.get("sizes"),
        )


@dataclass
class RobustnessReport:
    """Accuracy as a function of the scramble fraction for one config."""

    config: dict
    fractions: list[float]
    accuracies: list[float]
    reports: list[Report]

    def to_dict(self, include_timings: bool = True) -> dict:
        return {
            "config": self.config,
            "fractions": self.fractions,
            "accuracies": self.accuracies,
            "reports": [r.to_dict(include_timings) for r in self.reports],
        }

    def to_json(self, include_timings: bool = True) -> str:
        return json.dumps(self.to_dict(include_timings), indent=2, sort_keys=True)


def _largest_remainder(n: int, fractions) -> list[int]:
    exact = [n * f for f in fractions]
    base = [int(math.floor(e)) for e in exact]
    rem = n - sum(base)
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - base[i]), i))
    for i in order[:rem]:
        base[i] += 1
    # guarantee every partition at least one sample (needs n >= len(fractions))
    while min(base) == 0:
        base[int(np.argmax(base))] -= 1
        base[base.index(0)] += 1
    return base


def split_indices(labels: np.ndarray, fractions, seed: int) -> list[np.ndarray]:
    """Stratified index partitions: shuffle within each family, cut by fractions.

    Partition sizes per family come from largest-remainder rounding (with a
    repair step so no partition is left empty). Raises when a family holds
    fewer samples than there are partitions.
    """
    labels = np.asarray(labels)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigError("split fractions must sum to 1")
    rng = np.random.default_rng(seed)
    parts: list[list[int]] = [[] for _ in fractions]
    for fam in np.unique(labels):
        idx = np.nonzero(labels == fam)[0]
        if idx.size < len(fractions):
            raise DataError(
                f"family id {int(fam)} has {idx.size} samples, fewer than {len(fractions)} partitions"
            )
        idx = idx[rng.permutation(idx.size)]
        sizes = _largest_remainder(idx.size, fractions)
        start = 0
        for p, size in enumerate(sizes):
            parts[p].extend(int(i) for i in idx[start : start + size])
            start += size
    return [np.array(sorted(p), dtype=np.int64) for p in parts]


def split(dataset: LabeledDataset, fractions, seed: int) -> list[LabeledDataset]:
    """Stratified split of a labeled dataset into disjoint, exhaustive partitions."""
    return [dataset.subset(idx) for idx in split_indices(dataset.y, fractions, seed)]


def _stage(exc: OpseqError, stage: str, sample_id: str | None = None) -> OpseqError:
    """Rewrap an error so it names the pipeline stage (and sample) it came from."""
    where = f"stage {stage}" + (f", sample {sample_id}" if sample_id else "")
    if isinstance(exc, ConfigError):
        return ConfigError(f"[{where}] {exc}")
    if isinstance(exc, NumericError):
        return NumericError(f"[{where}] {exc}")
    return DataError(f"[{where}] {exc}")


def _feature_one(seq_tokens, sample_id, family, vocab_dict, config_dict, sample_seed):
    """Train one sample's feature vector (runs in worker processes)."""
    try:
        seq = OpcodeSequence(sample_id, family, seq_tokens)
        vocab = Vocabulary.from_dict(vocab_dict)
        cfg = ExperimentConfig.from_dict(config_dict)
        if cfg.feature == "hmm2vec":
            policy = RestartPolicy() if cfg.restarts is None else RestartPolicy.fixed(cfg.restarts)
            model = train_with_restarts(seq, N=cfg.N, M=cfg.M, policy=policy, seed=sample_seed)
            return hmm2vec(model, vocab)
        emb = train_word2vec(
            seq, vocab, N=cfg.N, W=cfg.W, params=W2vParams(**cfg.w2v), seed=sample_seed
        )
        return word2vec_features(emb, vocab)
    except OpseqError as exc:
        raise _stage(exc, "features", sample_id) from exc


def compute_features(
    sequences: list[OpcodeSequence],
    vocab: Vocabulary,
    config: ExperimentConfig,
    n_jobs: int = 1,
) -> list[FeatureVector]:
    """Per-sample feature training, optionally fanned out over processes.

    HMM seeds are derived per sample; word2vec uses one shared seed so the
    per-sample embeddings stay mutually comparable. Results are returned in
    input order regardless of schedule.
    """
    cfg_dict = config.to_dict()
    vocab_dict = vocab.to_dict()
    if config.feature == "hmm2vec":
        seeds = [derive_seed(config.seed, _TAG_HMM, i) for i in range(len(sequences))]
    else:
        shared = derive_seed(config.seed, _TAG_W2V)
        seeds = [shared] * len(sequences)
    tasks = [
        (s.tokens, s.sample_id, s.family, vocab_dict, cfg_dict, seeds[i])
        for i, s in enumerate(sequences)
    ]
    if n_jobs == 1:
        return [_feature_one(*t) for t in tasks]
    return list(Parallel(n_jobs=n_jobs)(delayed(_feature_one)(*t) for t in tasks))


def _build_classifier_params(config: ExperimentConfig, D: int, C: int, train_size: int):
    params = dict(config.classifier_params)
    try:
        if config.classifier == "knn":
            k = params.pop("k", None)
            if params:
                raise ConfigError(f"unknown knn parameters: {sorted(params)}")
            return {"k": int(k) if k is not None else rule_of_thumb_k(train_size)}
        if config.classifier == "svm":
            return SvmParams(**params)
        if config.classifier == "rf":
            return RfParams(**params, seed=derive_seed(config.seed, _TAG_CLF))
        hidden = params.pop("hidden_sizes", [200, 500])
        return NnParams(
            layer_sizes=[D, *hidden, C],
            seed=derive_seed(config.seed, _TAG_CLF),
            **params,
        )
    except TypeError as exc:
        raise ConfigError(f"bad {config.classifier} parameters: {exc}") from exc


def _train_and_eval(config, dataset, train_idx, val_idx, test_idx):
    train_ds = dataset.subset(train_idx)
    test_ds = dataset.subset(test_idx)
    val_ds = dataset.subset(val_idx) if val_idx is not None else None

    curves = None
    try:
        params = _build_classifier_params(config, dataset.D, dataset.class_count, train_ds.size)
        if config.classifier == "knn":
            clf = train_knn(train_ds, params["k"])
        elif config.classifier == "svm":
            clf = svm_train_multiclass(train_ds, params, seed=derive_seed(config.seed, _TAG_CLF))
        elif config.classifier == "rf":
            clf = rf_train(train_ds, params)
        else:
            clf = nn_train(train_ds, params, validation=val_ds)
            curves = clf.curves
    except OpseqError as exc:
        raise _stage(exc, "train") from exc

    y_pred = clf.predict_batch(test_ds.X)
    confusion = ConfusionMatrix.from_predictions(test_ds.y, y_pred, dataset.families)
    return confusion, curves, clf


def _load_filter_scramble(config: ExperimentConfig, timings: dict):
    t0 = time.perf_counter()
    try:
        manifest, sequences = corpus_mod.load_corpus(config.manifest)
    except OpseqError as exc:
        raise _stage(exc, "load") from exc
    timings["load"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    try:
        vocab = corpus_mod.build_vocabulary(sequences, config.M)
        filtered = corpus_mod.filter_corpus(sequences, vocab, min_length=config.min_length)
    except OpseqError as exc:
        raise _stage(exc, "vocabulary") from exc
    timings["vocabulary"] = time.perf_counter() - t0

    if config.scramble_fraction > 0.0:
        t0 = time.perf_counter()
        filtered = [
            corpus_mod.scramble(
                seq, config.scramble_fraction, derive_seed(config.seed, _TAG_SCRAMBLE, i)
            )
            for i, seq in enumerate(filtered)
        ]
        timings["scramble"] = time.perf_counter() - t0
    return manifest, vocab, filtered


def run_experiment(config: ExperimentConfig, n_jobs: int = 1) -> Report:
    """Execute the full pipeline for one config and return its report.

    Pipeline: load -> vocabulary/filter -> optional scramble -> per-sample
    feature training -> stratified split -> classifier training ->
    evaluation on the held-out test partition. The validation partition of
    a 3-way split is used by the nn classifier and folded into training for
    every other classifier.
    """
    timings: dict[str, float] = {}
    total0 = time.perf_counter()
    manifest, vocab, filtered = _load_filter_scramble(config, timings)

    t0 = time.perf_counter()
    features = compute_features(filtered, vocab, config, n_jobs=n_jobs)
    timings["features"] = time.perf_counter() - t0

    dataset = LabeledDataset.from_feature_vectors(features, sorted(manifest.families))

    t0 = time.perf_counter()
    try:
        parts = split_indices(dataset.y, config.split, derive_seed(config.seed, _TAG_SPLIT))
    except OpseqError as exc:
        raise _stage(exc, "split") from exc
    if len(parts) == 2:
        train_idx, val_idx, test_idx = parts[0], None, parts[1]
    else:
        train_idx, val_idx, test_idx = parts
        if config.classifier != "nn":
            train_idx = np.array(sorted(np.concatenate([train_idx, val_idx])), dtype=np.int64)
            val_idx = None
    timings["split"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    confusion, curves, _ = _train_and_eval(config, dataset, train_idx, val_idx, test_idx)
    timings["train_eval"] = time.perf_counter() - t0
    timings["total"] = time.perf_counter() - total0

    return Report(
        config=config.to_dict(),
        accuracy=confusion.overall_accuracy,
        confusion=confusion,
        timings=timings,
        curves=curves,
        sizes={
            "train": int(train_idx.size),
            "val": int(val_idx.size) if val_idx is not None else 0,
            "test": int(test_idx.size),
        },
    )


_GRID_KEYS = {"feature", "N", "W", "classifier", "classifier_params", "scramble_fraction", "restarts", "w2v"}


def grid_search(config: ExperimentConfig, grid: list[dict], n_jobs: int = 1) -> Report:
    """Run the pipeline once per grid point on a shared corpus and split.

    Grid points are override dicts limited to feature/classifier choices;
    corpus, M, seed, and split are fixed for comparability. Features are
    cached across points that share feature parameters. The table is
    sorted by accuracy (descending, stable) with the best row flagged.
    """
    if not grid:
        raise ConfigError("grid must contain at least one point")
    for point in grid:
        unknown = set(point) - _GRID_KEYS
        if unknown:
            raise ConfigError(f"grid point may not override {sorted(unknown)}")

    timings: dict[str, float] = {}
    total0 = time.perf_counter()
    # load unscrambled; each grid point applies its own effective fraction
    manifest, vocab, filtered = _load_filter_scramble(
        config.replace(scramble_fraction=0.0), timings
    )
    families = sorted(manifest.families)

    feature_cache: dict[str, list[FeatureVector]] = {}
    rows = []
    best = None
    sizes = None
    for gi, point in enumerate(grid):
        cfg = config.replace(**point)
        fkey = json.dumps(
            {
                "feature": cfg.feature,
                "N": cfg.N,
                "W": cfg.W,
                "restarts": cfg.restarts,
                "w2v": cfg.w2v,
                "scramble_fraction": cfg.scramble_fraction,
            },
            sort_keys=True,
        )
        if fkey not in feature_cache:
            seqs = filtered
            if cfg.scramble_fraction > 0.0:
                seqs = [
                    corpus_mod.scramble(
                        s, cfg.scramble_fraction, derive_seed(cfg.seed, _TAG_SCRAMBLE, i)
                    )
                    for i, s in enumerate(filtered)
                ]
            feature_cache[fkey] = compute_features(seqs, vocab, cfg, n_jobs=n_jobs)
        dataset = LabeledDataset.from_feature_vectors(feature_cache[fkey], families)
        parts = split_indices(dataset.y, cfg.split, derive_seed(cfg.seed, _TAG_SPLIT))
        if len(parts) == 2:
            train_idx, val_idx, test_idx = parts[0], None, parts[1]
        else:
            train_idx, val_idx, test_idx = parts
            if cfg.classifier != "nn":
                train_idx = np.array(sorted(np.concatenate([train_idx, val_idx])), dtype=np.int64)
                val_idx = None
        sizes = {
            "train": int(train_idx.size),
            "val": int(val_idx.size) if val_idx is not None else 0,
            "test": int(test_idx.size),
        }
        confusion, _, _ = _train_and_eval(cfg, dataset, train_idx, val_idx, test_idx)
        rows.append(
            {
                "point": point,
                "accuracy": confusion.overall_accuracy,
                "confusion": confusion.to_dict(),
                "order": gi,
            }
        )
        if best is None or confusion.overall_accuracy > best[0]:
            best = (confusion.overall_accuracy, confusion)

    rows.sort(key=lambda r: (-r["accuracy"], r["order"]))
    for r in rows:
        r["best"] = r is rows[0]
        del r["order"]
    timings["total"] = time.perf_counter() - total0
    return Report(
        config=config.to_dict(),
        accuracy=rows[0]["accuracy"],
        confusion=best[1],
        timings=timings,
        grid_table=rows,
        sizes=sizes,
    )


def robustness_study(config: ExperimentConfig, fractions: list[float], n_jobs: int = 1) -> RobustnessReport:
    """Re-run one binary-pair config at each scramble fraction.

    Requires a two-family corpus. The fraction-0 entry runs the pipeline
    with scrambling skipped entirely, so it is bit-identical to the
    unscrambled baseline.
    """
    manifest = corpus_mod.CorpusManifest.load(config.manifest)
    if len(manifest.families) != 2:
        raise DataError(
            f"robustness study requires a binary family pair, got {len(manifest.families)} families"
        )
    reports = [
        run_experiment(config.replace(scramble_fraction=float(f)), n_jobs=n_jobs)
        for f in fractions
    ]
    return RobustnessReport(
        config=config.to_dict(),
        fractions=[float(f) for f in fractions],
        accuracies=[r.accuracy for r in reports],
        reports=reports,
    )


def emit_report(report, fmt: str = "json", path=None) -> str:
    """Serialize a report as json, csv, or a text table; optionally write it.

    The csv form of an experiment report is its confusion matrix (header
    plus one row per family); for a robustness series it is the
    fraction/accuracy table.
    """
    if fmt == "json":
        text = report.to_json()
    elif fmt == "csv":
        if isinstance(report, RobustnessReport):
            lines = ["fraction,accuracy"]
            lines += [f"{f},{a}" for f, a in zip(report.fractions, report.accuracies)]
        else:
            cm = report.confusion
            lines = ["family," + ",".join(cm.families)]
            for i, fam in enumerate(cm.families):
                lines.append(fam + "," + ",".join(str(int(c)) for c in cm.counts[i]))
        text = "\n".join(lines) + "\n"
    elif fmt == "text":
        text = render_text_report(report)
    else:
        raise ConfigError(f"unknown report format {fmt!r}")
    if path is not None:
        Path(path).write_text(text)
    return text


def render_text_report(report) -> str:
    if isinstance(report, RobustnessReport):
        lines = ["scramble robustness", "fraction  accuracy"]
        for f, a in zip(report.fractions, report.accuracies):
            lines.append(f"{f:>8.2f}  {100.0 * a:6.2f}%")
        return "\n".join(lines) + "\n"
    cm = report.confusion
    width = max(8, max(len(f) for f in cm.families) + 1)
    header = " " * width + "".join(f"{f:>{width}}" for f in cm.families) + f"{'acc':>8}"
    lines = [f"overall accuracy: {100.0 * report.accuracy:.2f}%", header]
    per_class = cm.per_class_accuracy()
    for i, fam in enumerate(cm.families):
        row = f"{fam:>{width}}" + "".join(f"{int(c):>{width}}" for c in cm.counts[i])
        lines.append(row + f"{100.0 * per_class[i]:>7.1f}%")
    if report.grid_table:
        lines.append("")
        lines.append("grid results (best first):")
        for r in report.grid_table:
            flag = " *" if r.get("best") else ""
            lines.append(f"  {json.dumps(r['point'], sort_keys=True)}: {100.0 * r['accuracy']:.2f}%{flag}")
    return "\n".join(lines) + "\n"
