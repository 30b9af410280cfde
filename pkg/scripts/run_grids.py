"""Hyperparameter studies on a synthetic seven-family corpus: the 12-row
SVM kernel/C/gamma grid, the 15-point embedding N x W sweep, a kNN sweep
with the sqrt-of-training-size operating point flagged, and a seeded
randomized search over the forest grid.

    python scripts/run_grids.py --out-dir runs/grids --samples 30
"""

import argparse
import sys
from pathlib import Path

from opseq.harness import ExperimentConfig, emit_report, grid_search
from opseq.presets import (
    default_seven_families,
    flag_knn_operating_point,
    knn_sweep_points,
    random_search_points,
    rf_search_space,
    svm_grid_points,
    w2v_sweep_points,
    write_synthetic_corpus,
)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out-dir", default="runs/grids")
    ap.add_argument("--samples", type=int, default=30, help="samples per family")
    ap.add_argument("--min-len", type=int, default=300)
    ap.add_argument("--max-len", type=int, default=800)
    ap.add_argument("--restarts", type=int, default=2)
    ap.add_argument("--search-budget", type=int, default=12)
    ap.add_argument("--seed", type=int, default=5)
    ap.add_argument("--jobs", type=int, default=-1)
    args = ap.parse_args()

    out_dir = Path(args.out_dir)
    manifest = out_dir / "corpus" / "manifest.json"
    if not manifest.exists():
        print("generating corpus ...", flush=True)
        manifest = write_synthetic_corpus(
            out_dir / "corpus",
            default_seven_families(31),
            samples_per_family=args.samples,
            length_range=(args.min_len, args.max_len),
            seed=args.seed,
        )

    hmm_base = ExperimentConfig(
        manifest=str(manifest), feature="hmm2vec", M=31, N=2,
        classifier="svm", split=(0.7, 0.3), seed=args.seed, restarts=args.restarts,
    )

    print("SVM kernel/C/gamma grid on emission-matrix features ...", flush=True)
    svm_report = grid_search(hmm_base, svm_grid_points(), n_jobs=args.jobs)
    emit_report(svm_report, fmt="json", path=out_dir / "svm_grid.json")
    print(emit_report(svm_report, fmt="text"))

    print("embedding N x W sweep with a kNN classifier ...", flush=True)
    w2v_base = hmm_base.replace(
        feature="word2vec", classifier="knn", classifier_params={"k": 5}, restarts=None
    )
    sweep_report = grid_search(w2v_base, w2v_sweep_points(), n_jobs=args.jobs)
    emit_report(sweep_report, fmt="json", path=out_dir / "w2v_sweep.json")
    print(emit_report(sweep_report, fmt="text"))

    print("kNN k-sweep on emission-matrix features ...", flush=True)
    knn_base = hmm_base.replace(classifier="knn", classifier_params={})
    k_max = min(100, int(7 * args.samples * 0.7) - 1)
    knn_report = grid_search(knn_base, knn_sweep_points(k_max=k_max), n_jobs=args.jobs)
    k_rule = flag_knn_operating_point(knn_report)
    emit_report(knn_report, fmt="json", path=out_dir / "knn_sweep.json")
    at_rule = next(
        r["accuracy"]
        for r in knn_report.grid_table
        if r["point"]["classifier_params"]["k"] == k_rule
    )
    print(f"best k: {knn_report.grid_table[0]['point']['classifier_params']['k']} "
          f"({knn_report.accuracy:.4f}); operating point k={k_rule} ({at_rule:.4f})")

    print("randomized search over the forest grid ...", flush=True)
    rf_base = hmm_base.replace(classifier="rf", classifier_params={})
    points = random_search_points(rf_search_space(), budget=args.search_budget, seed=args.seed)
    rf_report = grid_search(rf_base, points, n_jobs=args.jobs)
    emit_report(rf_report, fmt="json", path=out_dir / "rf_search.json")
    best = rf_report.grid_table[0]
    print(f"best forest params {best['point']['classifier_params']} "
          f"accuracy {best['accuracy']:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
