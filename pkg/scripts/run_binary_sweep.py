"""Binary-pair sweep over vocabulary size and embedding window.

Fifteen word2vec+SVM runs (M in {20, 31, 40} x W in {1, 5, 10, 30, 100},
N=2) on a two-family synthetic corpus, reported as one accuracy table.

    python scripts/run_binary_sweep.py --out-dir runs/binary_sweep
"""

import argparse
import json
import sys
from pathlib import Path

from opseq.harness import ExperimentConfig, run_experiment
from opseq.presets import binary_pair, binary_sweep_configs, write_synthetic_corpus


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/binary_sweep")
    ap.add_argument("--samples", type=int, default=100, help="samples per family")
    ap.add_argument("--min-len", type=int, default=500)
    ap.add_argument("--max-len", type=int, default=1500)
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--jobs", type=int, default=-1)
    args = ap.parse_args()

    out_dir = Path(args.out_dir)
    manifest = out_dir / "corpus" / "manifest.json"
    if not manifest.exists():
        print("generating corpus ...", flush=True)
        manifest = write_synthetic_corpus(
            out_dir / "corpus",
            binary_pair(41),
            samples_per_family=args.samples,
            length_range=(args.min_len, args.max_len),
            seed=args.seed,
        )

    base = ExperimentConfig(
        manifest=str(manifest), feature="word2vec", N=2, W=1,
        classifier="svm", classifier_params={"kernel": "linear", "C": 100.0},
        split=(0.7, 0.3), seed=args.seed,
    )
    rows = []
    for cfg in binary_sweep_configs(base):
        report = run_experiment(cfg, n_jobs=args.jobs)
        rows.append({"M": cfg.M, "W": cfg.W, "accuracy": report.accuracy})
        print(f"M={cfg.M:>3} W={cfg.W:>4}: accuracy {report.accuracy:.4f}", flush=True)

    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "sweep.json").write_text(json.dumps(rows, indent=2))
    best = max(rows, key=lambda r: r["accuracy"])
    print(f"best: M={best['M']} W={best['W']} accuracy {best['accuracy']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
