"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with ``pytest tests/test_acceptance.py -v -s``. The synthetic
end-to-end criteria build a 7-family corpus of 100 samples per family
(lengths 1000-3000) once per session; feature training fans out over all
cores.
"""

import itertools
import time

import numpy as np
import pytest

from opseq.classify import RfParams, SvmParams, rf_train, svm_train
from opseq.classify.svm import kernel_matrix
from opseq.embed import sgns_loss_and_grad
from opseq.harness import ExperimentConfig, grid_search, robustness_study, run_experiment
from opseq.hmm import RestartPolicy, baum_welch, forward_log_prob, hmm2vec, train_with_restarts
from opseq.presets import (
    binary_pair,
    default_seven_families,
    rf_params_primary,
    svm_grid_points,
    w2v_sweep_points,
    write_synthetic_corpus,
)

from conftest import id_vocab
from test_classify import (
    brute_force_knn,
    dataset,
    dual_objective,
    nn_fd_check,
    reference_dual_solver,
    separable_set,
)
from test_hmm import brute_force_log_prob, model_from, random_model

N_JOBS = -1  # parallel feature training for the end-to-end criteria


def _report(criterion: int, summary: str, t0: float) -> None:
    print(f"ACCEPTANCE PASS criterion {criterion}: {summary} ({time.perf_counter() - t0:.1f}s)")


@pytest.fixture(scope="module")
def seven_corpus_full(tmp_path_factory):
    families = default_seven_families(31)
    # the planted generators must be pairwise separable in emission space
    for fa, fb in itertools.combinations(families, 2):
        for row in range(2):
            assert np.abs(fa.B[row] - fb.B[row]).sum() >= 0.4
    out = tmp_path_factory.mktemp("acceptance_seven")
    return write_synthetic_corpus(
        out, families, samples_per_family=100, length_range=(1000, 3000), seed=2024
    )


@pytest.fixture(scope="module")
def pair_corpus_small(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_pair")
    return write_synthetic_corpus(
        out, binary_pair(31), samples_per_family=40, length_range=(300, 600), seed=77
    )


@pytest.fixture(scope="module")
def pair_corpus_micro(tmp_path_factory):
    out = tmp_path_factory.mktemp("acceptance_micro")
    return write_synthetic_corpus(
        out, binary_pair(31), samples_per_family=12, length_range=(80, 140), seed=31
    )


def test_criterion_01_forward_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1001)
    for _ in range(200):
        N = int(rng.integers(1, 4))
        M = int(rng.integers(1, 5))
        T = int(rng.integers(1, 9))
        model = random_model(rng, N, M)
        seq = rng.integers(0, M, size=T)
        got = forward_log_prob(model, seq)
        want = brute_force_log_prob(model.A, model.B, model.pi, seq)
        assert got == pytest.approx(want, rel=1e-9)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _report(1, "scaled forward matches exhaustive path sums on 200 instances", t0)


def test_criterion_02_em_monotonicity():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1002)
    for run in range(50):
        seq = rng.integers(0, 8, size=500)
        model = baum_welch(seq, N=2, M=8, seed=run)
        worst = float(np.min(np.diff(model.log_history)))
        assert worst >= -1e-8
    elapsed = time.perf_counter() - t0
    assert elapsed < 30.0
    _report(2, "log-likelihood non-decreasing over 50 random trainings", t0)


def test_criterion_03_planted_model_recovery():
    t0 = time.perf_counter()
    planted_B = np.array([[0.9, 0.1], [0.1, 0.9]])
    from opseq.corpus import FamilyGenerator

    gen = FamilyGenerator(
        "planted", np.array([[0.95, 0.05], [0.05, 0.95]]), planted_B, np.array([0.6, 0.4])
    )
    hits = 0
    for seed in range(10):
        seq = gen.sample(5000, np.random.default_rng(3000 + seed))
        model = train_with_restarts(seq, N=2, M=2, policy=RestartPolicy.fixed(50), seed=seed)
        err = min(
            np.max(np.abs(model.B[perm, :] - planted_B)) for perm in ([0, 1], [1, 0])
        )
        hits += err <= 0.05
    assert hits >= 9
    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    _report(3, f"best-of-50 recovery within 0.05 for {hits}/10 seeds", t0)


def test_criterion_04_hmm2vec_shape_and_anchoring():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1004)
    vocab = id_vocab(31)
    for _ in range(100):
        model = random_model(rng, 2, 31)
        fv = hmm2vec(model, vocab)
        assert fv.values.shape == (62,)
        swapped = model_from(model.A[[1, 0]][:, [1, 0]], model.B[[1, 0]], model.pi[[1, 0]])
        assert np.array_equal(fv.values, hmm2vec(swapped, vocab).values)
    _report(4, "length-62 vectors, bit-identical under state permutation (100 models)", t0)


def test_criterion_05_sgns_gradient_check():
    t0 = time.perf_counter()
    from test_embed import fd_gradients

    rng = np.random.default_rng(1005)
    for trial in range(100):
        N = int(rng.integers(1, 9))
        k = 0 if trial % 2 == 0 else int(rng.integers(1, 6))
        u = rng.uniform(-1, 1, N)
        v = rng.uniform(-1, 1, N)
        negs = rng.uniform(-1, 1, (k, N))
        _, gc, gx, gn = sgns_loss_and_grad(u, v, negs)
        fc, fx, fn = fd_gradients(u, v, negs)
        for a, f in ((gc, fc), (gx, fx), (gn, fn)):
            np.testing.assert_allclose(a, f, rtol=1e-5, atol=1e-8)
    elapsed = time.perf_counter() - t0
    assert elapsed < 5.0
    _report(5, "analytic SGNS gradients match central differences (100 configs)", t0)


def test_criterion_06_classifier_oracles():
    t0 = time.perf_counter()
    rng = np.random.default_rng(1006)

    # kNN vs brute force, exact, 1000 queries
    X = rng.normal(size=(200, 4))
    y = rng.integers(0, 3, size=200)
    ds = dataset(X, y)
    from opseq.classify import knn_predict

    for _ in range(1000):
        q = rng.normal(size=4)
        assert knn_predict(ds, 7, q) == brute_force_knn(X, y, 7, q, 3)

    # SVM: KKT residual and dual-objective agreement on 20 separable instances
    for trial in range(20):
        Xs, ys = separable_set(rng)
        params = SvmParams(kernel="linear", C=10.0, tol=1e-5, max_passes=5)
        clf = svm_train(dataset(Xs, ys), params, seed=trial)
        assert clf.kkt_residual() <= 1e-3
        y_signed = np.where(ys == 1, 1.0, -1.0)
        K = kernel_matrix(params, Xs, Xs)
        ref = reference_dual_solver(K, y_signed, params.C)
        assert abs(clf.dual_objective() - dual_objective(K, y_signed, ref)) <= 1e-3

    # NN gradients vs finite differences, both losses
    nn_fd_check("cce", np.random.default_rng(1061))
    nn_fd_check("mse", np.random.default_rng(1062))

    # RF degenerate single tree memorizes consistent data exactly
    Xr = rng.normal(size=(80, 5))
    yr = rng.integers(0, 3, size=80)
    tree = rf_train(
        dataset(Xr, yr),
        RfParams(n_estimators=1, bootstrap=False, max_features="all", max_depth=None, seed=0),
    )
    assert np.array_equal(tree.predict_batch(Xr), yr)

    elapsed = time.perf_counter() - t0
    assert elapsed < 120.0
    _report(6, "kNN, SVM, NN, and RF all agree with their oracles", t0)


def test_criterion_07_end_to_end_multiclass(seven_corpus_full):
    t0 = time.perf_counter()
    hmm_cfg = ExperimentConfig(
        manifest=str(seven_corpus_full),
        feature="hmm2vec",
        M=31,
        N=2,
        classifier="rf",
        classifier_params=rf_params_primary(n_estimators=200),
        split=(0.7, 0.3),
        seed=7,
        restarts=3,
    )
    hmm_report = run_experiment(hmm_cfg, n_jobs=N_JOBS)
    assert hmm_report.sizes["train"] == 490 and hmm_report.sizes["test"] == 210
    assert hmm_report.accuracy >= 0.95

    w2v_cfg = ExperimentConfig(
        manifest=str(seven_corpus_full),
        feature="word2vec",
        M=31,
        N=31,
        W=1,
        classifier="svm",
        classifier_params={"kernel": "linear", "C": 100.0},
        split=(0.7, 0.3),
        seed=7,
    )
    w2v_report = run_experiment(w2v_cfg, n_jobs=N_JOBS)
    assert w2v_report.accuracy >= 0.90

    elapsed = time.perf_counter() - t0
    assert elapsed < 600.0
    _report(
        7,
        f"hmm2vec+rf {hmm_report.accuracy:.3f} (>=0.95), "
        f"word2vec+svm {w2v_report.accuracy:.3f} (>=0.90)",
        t0,
    )


def test_criterion_08_robustness_shape(pair_corpus_small):
    t0 = time.perf_counter()
    presets = {
        "knn": {"k": 5},
        "svm": {"kernel": "linear", "C": 100.0},
        "rf": rf_params_primary(n_estimators=50),
        "nn": {"hidden_sizes": [32], "epochs": 30, "loss": "cce"},
    }
    for clf_kind, params in presets.items():
        cfg = ExperimentConfig(
            manifest=str(pair_corpus_small),
            feature="hmm2vec",
            M=31,
            N=2,
            classifier=clf_kind,
            classifier_params=params,
            split=(0.7, 0.3),
            seed=19,
            restarts=2,
        )
        series = robustness_study(cfg, [0.0, 0.4], n_jobs=N_JOBS)
        assert series.accuracies[1] <= series.accuracies[0], clf_kind
        baseline = run_experiment(cfg, n_jobs=N_JOBS)
        assert series.reports[0].to_json(include_timings=False) == baseline.to_json(
            include_timings=False
        ), clf_kind
    _report(8, "accuracy(0.4) <= accuracy(0) for all 4 classifier presets; fraction 0 = baseline", t0)


def test_criterion_09_determinism(pair_corpus_micro):
    t0 = time.perf_counter()
    configs = [
        ExperimentConfig(
            manifest=str(pair_corpus_micro), feature="hmm2vec", M=31, N=2,
            classifier="knn", classifier_params={"k": 3}, seed=5, restarts=2,
        ),
        ExperimentConfig(
            manifest=str(pair_corpus_micro), feature="word2vec", M=31, N=8, W=2,
            classifier="nn",
            classifier_params={"hidden_sizes": [16], "epochs": 10},
            split=(0.6, 0.2, 0.2), seed=5,
        ),
    ]
    for cfg in configs:
        a = run_experiment(cfg, n_jobs=1)
        b = run_experiment(cfg, n_jobs=2)
        assert a.to_json(include_timings=False) == b.to_json(include_timings=False)
    _report(9, "byte-identical reports (timings aside) across reruns and schedules", t0)


def test_criterion_10_grid_parity(pair_corpus_micro):
    t0 = time.perf_counter()
    points = svm_grid_points()
    assert len(points) == 12
    expected_rows = [("linear", c, None) for c in (1, 10, 100, 1000)] + [
        ("rbf", c, g) for c in (1, 10, 100, 1000) for g in (0.001, 0.0001)
    ]
    got_rows = [
        (
            p["classifier_params"]["kernel"],
            int(p["classifier_params"]["C"]),
            p["classifier_params"].get("gamma"),
        )
        for p in points
    ]
    assert got_rows == expected_rows

    base = ExperimentConfig(
        manifest=str(pair_corpus_micro), feature="hmm2vec", M=31, N=2,
        classifier="svm", split=(0.7, 0.3), seed=3, restarts=2,
    )
    svm_report = grid_search(base, points, n_jobs=N_JOBS)
    assert len(svm_report.grid_table) == 12

    sweep = w2v_sweep_points()
    assert len(sweep) == 15
    assert {(p["N"], p["W"]) for p in sweep} == {
        (n, w) for n in (2, 31, 100) for w in (1, 5, 10, 30, 100)
    }
    w2v_base = base.replace(feature="word2vec", classifier="knn",
                            classifier_params={"k": 3}, restarts=None)
    sweep_report = grid_search(w2v_base, sweep, n_jobs=N_JOBS)
    assert len(sweep_report.grid_table) == 15
    covered = {
        (r["point"]["N"], r["point"]["W"]) for r in sweep_report.grid_table
    }
    assert len(covered) == 15
    _report(10, "12-row SVM grid and 15-run embedding sweep both emitted", t0)
