"""Seven-family multiclass experiment on a synthetic corpus.

Generates the corpus (if needed), then runs the emission-matrix features
through a random forest and the embedding features through a linear SVM,
writing one JSON report per run.

    python scripts/run_multiclass.py --out-dir runs/multiclass --jobs -1
"""

import argparse
import sys
from pathlib import Path

from opseq.harness import ExperimentConfig, emit_report, run_experiment
from opseq.presets import default_seven_families, rf_params_primary, write_synthetic_corpus


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/multiclass")
    ap.add_argument("--samples", type=int, default=100, help="samples per family")
    ap.add_argument("--min-len", type=int, default=1000)
    ap.add_argument("--max-len", type=int, default=3000)
    ap.add_argument("--trees", type=int, default=200)
    ap.add_argument("--restarts", type=int, default=3)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--jobs", type=int, default=-1)
    args = ap.parse_args()

    out_dir = Path(args.out_dir)
    corpus_dir = out_dir / "corpus"
    manifest = corpus_dir / "manifest.json"
    if not manifest.exists():
        print("generating corpus ...", flush=True)
        manifest = write_synthetic_corpus(
            corpus_dir,
            default_seven_families(31),
            samples_per_family=args.samples,
            length_range=(args.min_len, args.max_len),
            seed=args.seed,
        )

    runs = {
        "hmm2vec_rf": ExperimentConfig(
            manifest=str(manifest), feature="hmm2vec", M=31, N=2,
            classifier="rf", classifier_params=rf_params_primary(args.trees),
            split=(0.7, 0.3), seed=args.seed, restarts=args.restarts,
        ),
        "word2vec_svm": ExperimentConfig(
            manifest=str(manifest), feature="word2vec", M=31, N=31, W=1,
            classifier="svm", classifier_params={"kernel": "linear", "C": 100.0},
            split=(0.7, 0.3), seed=args.seed,
        ),
    }
    for name, cfg in runs.items():
        print(f"running {name} ...", flush=True)
        report = run_experiment(cfg, n_jobs=args.jobs)
        emit_report(report, fmt="json", path=out_dir / f"{name}.json")
        feat_s = report.timings.get("features", 0.0)
        print(f"  accuracy {report.accuracy:.4f}  (feature training {feat_s:.1f}s)")
        print(emit_report(report, fmt="text"))
    return 0


if __name__ == "__main__":
    sys.exit(main())
