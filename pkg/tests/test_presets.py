import itertools

import numpy as np
import pytest

from opseq.errors import ConfigError
from opseq.harness import ExperimentConfig, grid_search, rule_of_thumb_k
from opseq.presets import (
    binary_pair,
    binary_sweep_configs,
    default_seven_families,
    knn_sweep_points,
    load_family_specs,
    nn_params_narrow,
    nn_params_reduced,
    nn_params_regularized,
    nn_params_wide,
    random_search_points,
    rf_params_alternate,
    rf_params_primary,
    rf_search_space,
    svm_grid_points,
    w2v_sweep_points,
    write_synthetic_corpus,
)


@pytest.fixture(scope="module")
def micro_corpus(tmp_path_factory):
    out = tmp_path_factory.mktemp("presets_corpus")
    return write_synthetic_corpus(
        out, binary_pair(31), samples_per_family=8, length_range=(60, 90), seed=3
    )


def test_rule_of_thumb_k_paper_operating_point():
    assert rule_of_thumb_k(4900) == 70
    assert rule_of_thumb_k(1) == 1


def test_rf_parameter_tables():
    primary = rf_params_primary()
    assert primary == {
        "n_estimators": 1000,
        "min_samples_split": 2,
        "min_samples_leaf": 1,
        "max_features": "auto",
        "max_depth": 50,
        "bootstrap": False,
    }
    alternate = rf_params_alternate()
    assert alternate["n_estimators"] == 1400
    assert alternate["max_depth"] == 40
    space = rf_search_space()
    for winner in (primary, alternate):
        for key, value in winner.items():
            assert value in space[key]


def test_nn_parameter_presets():
    wide = nn_params_wide()
    assert wide["hidden_sizes"] == [200, 500]
    assert wide["epochs"] == 200
    narrow = nn_params_narrow()
    assert narrow["hidden_sizes"] == [20, 200]
    assert narrow["loss"] == "cce"
    reg = nn_params_regularized()
    assert reg["dropout_rate"] == 0.5
    reduced = nn_params_reduced()
    assert reduced["epochs"] == 50
    assert reduced["lr"] == 0.0001
    assert (reduced["beta1"], reduced["beta2"]) == (0.9, 0.999)


def test_random_search_points_deterministic_and_in_space():
    space = {"a": [1, 2, 3], "b": ["x", "y"]}
    p1 = random_search_points(space, budget=20, seed=5)
    p2 = random_search_points(space, budget=20, seed=5)
    assert p1 == p2
    assert len(p1) == 20
    for point in p1:
        params = point["classifier_params"]
        assert params["a"] in space["a"] and params["b"] in space["b"]
    assert random_search_points(space, budget=50, seed=1) != random_search_points(
        space, budget=50, seed=2
    )
    with pytest.raises(ConfigError):
        random_search_points(space, budget=0)
    with pytest.raises(ConfigError):
        random_search_points({}, budget=5)


def test_random_search_runs_through_grid_search(micro_corpus):
    cfg = ExperimentConfig(
        manifest=str(micro_corpus), feature="hmm2vec", M=31, N=2,
        classifier="rf", seed=4, restarts=1,
    )
    points = random_search_points(
        {"n_estimators": [5, 10], "max_depth": [5, 10], "bootstrap": [True, False]},
        budget=4,
        seed=9,
    )
    report = grid_search(cfg, points)
    assert len(report.grid_table) == 4
    assert report.grid_table[0]["best"]


def test_sweep_point_shapes():
    assert len(svm_grid_points()) == 12
    assert len(w2v_sweep_points()) == 15
    assert len(knn_sweep_points(50)) == 50


def test_binary_sweep_covers_m_and_w(micro_corpus):
    base = ExperimentConfig(
        manifest=str(micro_corpus), feature="word2vec", classifier="svm", seed=1
    )
    configs = binary_sweep_configs(base)
    assert len(configs) == 15
    combos = {(c.M, c.W) for c in configs}
    assert combos == {(m, w) for m in (20, 31, 40) for w in (1, 5, 10, 30, 100)}
    assert all(c.feature == "word2vec" and c.N == 2 for c in configs)


def test_seven_families_are_separable_and_anchored():
    families = default_seven_families(31)
    assert len(families) == 7
    for fam in families:
        np.testing.assert_allclose(fam.A.sum(axis=1), 1.0, atol=1e-12)
        np.testing.assert_allclose(fam.B.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(fam.B > 0)
        # symbol 0 dominates the stationary symbol distribution
        w, v = np.linalg.eig(fam.A.T)
        stat = np.real(v[:, np.argmin(np.abs(w - 1.0))])
        stat /= stat.sum()
        mix = stat @ fam.B
        assert np.argmax(mix) == 0
    for fa, fb in itertools.combinations(families, 2):
        for row in range(2):
            assert np.abs(fa.B[row] - fb.B[row]).sum() >= 0.4
    assert [g.label for g in binary_pair(31)] == ["fam_a", "fam_b"]
    with pytest.raises(ConfigError):
        default_seven_families(10)


def test_load_family_specs_explicit(tmp_path):
    spec = {
        "seed": 2,
        "samples_per_family": 3,
        "length_range": [5, 9],
        "families": [
            {"label": "g1", "A": [[1.0]], "B": [[0.5, 0.5]], "pi": [1.0]},
            {"label": "g2", "A": [[1.0]], "B": [[0.9, 0.1]], "pi": [1.0]},
        ],
    }
    path = tmp_path / "families.json"
    import json

    path.write_text(json.dumps(spec))
    generators, kwargs = load_family_specs(path)
    assert [g.label for g in generators] == ["g1", "g2"]
    assert kwargs == {"samples_per_family": 3, "length_range": (5, 9), "seed": 2}

    path.write_text(json.dumps({"preset": "unknown"}))
    with pytest.raises(ConfigError):
        load_family_specs(path)
    path.write_text(json.dumps({"seed": 1}))
    with pytest.raises(ConfigError):
        load_family_specs(path)
    path.write_text("{oops")
    with pytest.raises(ConfigError):
        load_family_specs(path)
