"""The ``opseq`` command line: corpus preparation, per-sample feature
training, classification, and the experiment harness.

Exit codes: 0 success, 1 config error (including usage), 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import corpus as corpus_mod
from . import presets
from .classify import (
    LabeledDataset,
    nn_train,
    rf_train,
    save_classifier,
    svm_train_multiclass,
    train_knn,
)
from .embed import EmbeddingMatrix, W2vParams, train_word2vec, word2vec_features
from .errors import ConfigError, DataError, NumericError, OpseqError
from .features import read_features_csv, write_features_csv
from .harness import (
    ConfusionMatrix,
    ExperimentConfig,
    Report,
    emit_report,
    grid_search,
    robustness_study,
    run_experiment,
)
from .hmm import HmmModel, RestartPolicy, hmm2vec, train_with_restarts
from .seeding import derive_seed

log = logging.getLogger("opseq")


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage problems are config errors (exit 1)
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _cmd_extract(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for listing_path in args.listings:
        listing_path = Path(listing_path)
        listing = corpus_mod.RawListing(
            sample_id=listing_path.stem, family=args.family, text=listing_path.read_text()
        )
        seq = corpus_mod.parse_disassembly(listing, malformed_tolerance=args.malformed_tolerance)
        corpus_mod.write_sequence_file(out_dir / f"{seq.sample_id}.ops", seq)
        entries.append(corpus_mod.ManifestEntry(seq.sample_id, seq.family, f"{seq.sample_id}.ops"))
        log.info("extracted %d opcodes from %s", seq.length, listing_path)
    if args.manifest_out:
        manifest = corpus_mod.CorpusManifest(
            families=sorted({e.family for e in entries}), entries=entries
        )
        manifest.save(args.manifest_out)
    return 0


def _cmd_vocab(args) -> int:
    _, sequences = corpus_mod.load_corpus(args.manifest)
    vocab = corpus_mod.build_vocabulary(sequences, args.M)
    vocab.save(args.out)
    log.info("vocabulary of %d opcodes written to %s", vocab.M, args.out)
    return 0


def _cmd_scramble(args) -> int:
    manifest_path = Path(args.manifest)
    manifest, sequences = corpus_mod.load_corpus(manifest_path)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, seq in enumerate(sequences):
        scrambled = corpus_mod.scramble(seq, args.fraction, derive_seed(args.seed, i))
        entry = next(e for e in manifest.entries if e.sample_id == seq.sample_id)
        corpus_mod.write_sequence_file(out_dir / entry.path, scrambled)
    manifest.save(out_dir / "manifest.json")
    return 0


def _cmd_synth(args) -> int:
    generators, kwargs = presets.load_family_specs(args.spec)
    manifest_path = presets.write_synthetic_corpus(args.out_dir, generators, **kwargs)
    log.info("synthetic corpus written under %s", manifest_path.parent)
    return 0


def _load_filtered(manifest_path, vocab_path):
    vocab = corpus_mod.Vocabulary.load(vocab_path)
    _, sequences = corpus_mod.load_corpus(manifest_path)
    return vocab, corpus_mod.filter_corpus(sequences, vocab)


def _cmd_hmm_train(args) -> int:
    vocab, filtered = _load_filtered(args.manifest, args.vocab)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    policy = RestartPolicy() if args.restarts is None else RestartPolicy.fixed(args.restarts)
    for i, seq in enumerate(filtered):
        model = train_with_restarts(
            seq, N=args.N, M=vocab.M, policy=policy, seed=derive_seed(args.seed, 1, i)
        )
        model.save(out_dir / f"{seq.sample_id}.json")
        log.info("trained %s (logL %.3f)", seq.sample_id, model.log_likelihood)
    return 0


def _cmd_hmm2vec(args) -> int:
    vocab = corpus_mod.Vocabulary.load(args.vocab)
    model_paths = sorted(Path(args.models).glob("*.json"))
    if not model_paths:
        raise DataError(f"no model files under {args.models}")
    features = [hmm2vec(HmmModel.load(p), vocab) for p in model_paths]
    write_features_csv(args.out, features)
    return 0


def _cmd_w2v_train(args) -> int:
    vocab, filtered = _load_filtered(args.manifest, args.vocab)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = W2vParams(epochs=args.epochs, negatives=args.negatives)
    for seq in filtered:
        emb = train_word2vec(seq, vocab, N=args.N, W=args.W, params=params, seed=args.seed)
        emb.save(out_dir / f"{seq.sample_id}.json")
    return 0


def _cmd_w2v_features(args) -> int:
    vocab = corpus_mod.Vocabulary.load(args.vocab)
    emb_paths = sorted(Path(args.emb).glob("*.json"))
    if not emb_paths:
        raise DataError(f"no embedding files under {args.emb}")
    features = [word2vec_features(EmbeddingMatrix.load(p), vocab) for p in emb_paths]
    write_features_csv(args.out, features)
    return 0


def _cmd_classify(args) -> int:
    train_fv = read_features_csv(args.train)
    test_fv = read_features_csv(args.test)
    families = sorted({fv.family for fv in train_fv})
    train_ds = LabeledDataset.from_feature_vectors(train_fv, families)
    test_ds = LabeledDataset.from_feature_vectors(test_fv, families)
    params = json.loads(Path(args.params).read_text()) if args.params else {}

    cfg = ExperimentConfig(
        manifest="-", feature="hmm2vec", classifier=args.algo,
        classifier_params=params, seed=args.seed,
    )
    from .harness import _build_classifier_params  # same translation as the harness

    built = _build_classifier_params(cfg, train_ds.D, train_ds.class_count, train_ds.size)
    if args.algo == "knn":
        clf = train_knn(train_ds, built["k"])
    elif args.algo == "svm":
        clf = svm_train_multiclass(train_ds, built, seed=derive_seed(args.seed, 4))
    elif args.algo == "rf":
        clf = rf_train(train_ds, built)
    else:
        clf = nn_train(train_ds, built)

    y_pred = clf.predict_batch(test_ds.X)
    confusion = ConfusionMatrix.from_predictions(test_ds.y, y_pred, families)
    report = Report(
        config={"algo": args.algo, "params": params, "seed": args.seed},
        accuracy=confusion.overall_accuracy,
        confusion=confusion,
        curves=getattr(clf, "curves", None),
    )
    emit_report(report, fmt=args.format, path=args.out)
    if args.save_model:
        save_classifier(clf, args.save_model)
    print(f"accuracy: {report.accuracy:.4f}")
    return 0


def _cmd_experiment(args) -> int:
    config = ExperimentConfig.load(args.config)
    report = run_experiment(config, n_jobs=args.jobs)
    emit_report(report, fmt=args.format, path=args.out)
    print(f"accuracy: {report.accuracy:.4f}")
    return 0


def _cmd_grid(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.grid == "svm-table":
        grid = presets.svm_grid_points()
    elif args.grid == "w2v-sweep":
        grid = presets.w2v_sweep_points()
    elif args.grid == "knn-sweep":
        grid = presets.knn_sweep_points()
    else:
        spec = json.loads(Path(args.grid).read_text())
        grid = spec["points"] if isinstance(spec, dict) else spec
    report = grid_search(config, grid, n_jobs=args.jobs)
    emit_report(report, fmt=args.format, path=args.out)
    best = report.grid_table[0]
    print(f"best accuracy: {best['accuracy']:.4f} at {json.dumps(best['point'], sort_keys=True)}")
    return 0


def _cmd_robustness(args) -> int:
    config = ExperimentConfig.load(args.config)
    fractions = [float(f) for f in args.fractions.split(",")]
    series = robustness_study(config, fractions, n_jobs=args.jobs)
    emit_report(series, fmt=args.format, path=args.out)
    for f, a in zip(series.fractions, series.accuracies):
        print(f"fraction {f:.2f}: accuracy {a:.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="opseq", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="parse disassembly listings into opcode files")
    p.add_argument("listings", nargs="+")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--family", default="unknown")
    p.add_argument("--malformed-tolerance", type=float, default=0.0)
    p.add_argument("--manifest-out", default=None)
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("vocab", help="build the top-M opcode vocabulary")
    p.add_argument("--manifest", required=True)
    p.add_argument("-M", type=int, default=31)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_vocab)

    p = sub.add_parser("scramble", help="write a block-scrambled copy of a corpus")
    p.add_argument("--manifest", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_scramble)

    p = sub.add_parser("synth", help="generate a synthetic labeled corpus")
    p.add_argument("--spec", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("hmm-train", help="train one HMM per sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("-N", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--restarts", type=int, default=None, help="override the length-based policy")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_hmm_train)

    p = sub.add_parser("hmm2vec", help="flatten trained HMMs into feature vectors")
    p.add_argument("--models", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_hmm2vec)

    p = sub.add_parser("w2v-train", help="train one embedding model per sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("-N", type=int, default=31)
    p.add_argument("-W", type=int, default=1)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--negatives", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_w2v_train)

    p = sub.add_parser("w2v-features", help="concatenate embeddings into feature vectors")
    p.add_argument("--emb", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_w2v_features)

    p = sub.add_parser("classify", help="train and evaluate one classifier on feature CSVs")
    p.add_argument("--algo", required=True, choices=["knn", "svm", "rf", "nn"])
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--params", default=None, help="JSON parameter file")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="json", choices=["json", "csv", "text"])
    p.add_argument("--save-model", default=None)
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("experiment", help="run one end-to-end experiment config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="json", choices=["json", "csv", "text"])
    p.add_argument("--jobs", type=int, default=-1)
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("grid", help="grid search over classifier or embedding parameters")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", required=True,
                   help="grid JSON file or preset: svm-table, w2v-sweep, knn-sweep")
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="json", choices=["json", "csv", "text"])
    p.add_argument("--jobs", type=int, default=-1)
    p.set_defaults(func=_cmd_grid)

    p = sub.add_parser("robustness", help="accuracy versus scramble fraction")
    p.add_argument("--config", required=True)
    p.add_argument("--fractions", default="0,0.1,0.2,0.3,0.4")
    p.add_argument("--out", default=None)
    p.add_argument("--format", default="json", choices=["json", "csv", "text"])
    p.add_argument("--jobs", type=int, default=-1)
    p.set_defaults(func=_cmd_robustness)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(
            level=logging.INFO if args.verbose else logging.WARNING,
            format="%(levelname)s %(name)s: %(message)s",
        )
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric error: {exc}", file=sys.stderr)
        return 3
    except OpseqError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
