import json
import subprocess
import sys

import numpy as np
import pytest

from opseq import cli
from opseq.errors import NumericError
from opseq.features import read_features_csv


@pytest.fixture(scope="module")
def corpus_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli_corpus")
    spec = {
        "preset": "pair",
        "M": 31,
        "samples_per_family": 6,
        "length_range": [60, 90],
        "seed": 13,
    }
    spec_path = root / "families.json"
    spec_path.write_text(json.dumps(spec))
    out = root / "corpus"
    assert cli.main(["synth", "--spec", str(spec_path), "--out-dir", str(out)]) == 0
    return out


def test_synth_writes_manifest_and_sequences(corpus_dir):
    manifest = json.loads((corpus_dir / "manifest.json").read_text())
    assert len(manifest["entries"]) == 12
    assert sorted(manifest["families"]) == ["fam_a", "fam_b"]
    first = manifest["entries"][0]
    assert (corpus_dir / first["path"]).exists()


def test_vocab_command(corpus_dir, tmp_path):
    vocab_path = tmp_path / "vocab.json"
    rc = cli.main(
        ["vocab", "--manifest", str(corpus_dir / "manifest.json"), "-M", "31",
         "--out", str(vocab_path)]
    )
    assert rc == 0
    vocab = json.loads(vocab_path.read_text())
    assert vocab["M"] == 31
    assert len(vocab["rank_to_mnemonic"]) == 31
    assert vocab["rank_to_mnemonic"][0] == "op00"


def test_hmm_pipeline_to_features(corpus_dir, tmp_path):
    vocab_path = tmp_path / "vocab.json"
    cli.main(["vocab", "--manifest", str(corpus_dir / "manifest.json"),
              "-M", "31", "--out", str(vocab_path)])
    models_dir = tmp_path / "models"
    rc = cli.main(
        ["hmm-train", "--manifest", str(corpus_dir / "manifest.json"),
         "--vocab", str(vocab_path), "-N", "2", "--seed", "3",
         "--restarts", "1", "--out-dir", str(models_dir)]
    )
    assert rc == 0
    assert len(list(models_dir.glob("*.json"))) == 12
    features_csv = tmp_path / "hmm_features.csv"
    rc = cli.main(
        ["hmm2vec", "--models", str(models_dir), "--vocab", str(vocab_path),
         "--out", str(features_csv)]
    )
    assert rc == 0
    fvs = read_features_csv(features_csv)
    assert len(fvs) == 12
    assert fvs[0].values.shape == (62,)
    # each half of the vector is an emission row
    np.testing.assert_allclose(fvs[0].values[:31].sum(), 1.0, atol=1e-9)


def test_w2v_pipeline_to_features(corpus_dir, tmp_path):
    vocab_path = tmp_path / "vocab.json"
    cli.main(["vocab", "--manifest", str(corpus_dir / "manifest.json"),
              "-M", "31", "--out", str(vocab_path)])
    emb_dir = tmp_path / "emb"
    rc = cli.main(
        ["w2v-train", "--manifest", str(corpus_dir / "manifest.json"),
         "--vocab", str(vocab_path), "-N", "4", "-W", "2", "--seed", "5",
         "--out-dir", str(emb_dir)]
    )
    assert rc == 0
    features_csv = tmp_path / "w2v_features.csv"
    rc = cli.main(
        ["w2v-features", "--emb", str(emb_dir), "--vocab", str(vocab_path),
         "--out", str(features_csv)]
    )
    assert rc == 0
    fvs = read_features_csv(features_csv)
    assert fvs[0].values.shape == (124,)


def test_extract_command(data_dir, tmp_path):
    out_dir = tmp_path / "ops"
    rc = cli.main(
        ["extract", str(data_dir / "fixture_listing.txt"),
         "--out-dir", str(out_dir), "--family", "famz",
         "--manifest-out", str(tmp_path / "m.json")]
    )
    assert rc == 0
    tokens = [
        l for l in (out_dir / "fixture_listing.ops").read_text().splitlines()
        if l and not l.startswith("#")
    ]
    expected = (data_dir / "fixture_listing.tokens").read_text().split()
    assert tokens == expected
    manifest = json.loads((tmp_path / "m.json").read_text())
    assert manifest["families"] == ["famz"]


def test_scramble_command_preserves_multisets(corpus_dir, tmp_path):
    out_dir = tmp_path / "scrambled"
    rc = cli.main(
        ["scramble", "--manifest", str(corpus_dir / "manifest.json"),
         "--fraction", "0.3", "--seed", "4", "--out-dir", str(out_dir)]
    )
    assert rc == 0
    manifest = json.loads((out_dir / "manifest.json").read_text())
    for entry in manifest["entries"]:
        orig = [l for l in (corpus_dir / entry["path"]).read_text().splitlines()
                if l and not l.startswith("#")]
        scr = [l for l in (out_dir / entry["path"]).read_text().splitlines()
               if l and not l.startswith("#")]
        assert sorted(orig) == sorted(scr)


def test_classify_command(corpus_dir, tmp_path):
    vocab_path = tmp_path / "vocab.json"
    cli.main(["vocab", "--manifest", str(corpus_dir / "manifest.json"),
              "-M", "31", "--out", str(vocab_path)])
    models_dir = tmp_path / "models"
    cli.main(["hmm-train", "--manifest", str(corpus_dir / "manifest.json"),
              "--vocab", str(vocab_path), "--restarts", "1", "--out-dir", str(models_dir)])
    features_csv = tmp_path / "features.csv"
    cli.main(["hmm2vec", "--models", str(models_dir), "--vocab", str(vocab_path),
              "--out", str(features_csv)])
    report_path = tmp_path / "report.json"
    model_path = tmp_path / "knn.json"
    params_path = tmp_path / "knn_params.json"
    params_path.write_text(json.dumps({"k": 1}))
    rc = cli.main(
        ["classify", "--algo", "knn", "--train", str(features_csv),
         "--test", str(features_csv), "--params", str(params_path),
         "--out", str(report_path), "--save-model", str(model_path)]
    )
    assert rc == 0
    report = json.loads(report_path.read_text())
    assert report["accuracy"] == 1.0  # train == test with k=1 memorizes
    assert json.loads(model_path.read_text())["kind"] == "knn"


def test_experiment_grid_robustness_commands(corpus_dir, tmp_path):
    cfg = {
        "manifest": str(corpus_dir / "manifest.json"),
        "feature": "word2vec",
        "M": 31,
        "N": 4,
        "W": 1,
        "classifier": "knn",
        "classifier_params": {"k": 3},
        "split": [0.7, 0.3],
        "seed": 2,
        "restarts": 1,
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))

    report_path = tmp_path / "report.json"
    assert cli.main(["experiment", "--config", str(cfg_path), "--out", str(report_path),
                     "--jobs", "1"]) == 0
    report = json.loads(report_path.read_text())
    assert 0.0 <= report["accuracy"] <= 1.0

    grid_path = tmp_path / "grid.json"
    grid_path.write_text(json.dumps({"points": [
        {"classifier_params": {"k": 1}}, {"classifier_params": {"k": 3}}
    ]}))
    grid_report_path = tmp_path / "grid_report.json"
    assert cli.main(["grid", "--config", str(cfg_path), "--grid", str(grid_path),
                     "--out", str(grid_report_path), "--jobs", "1"]) == 0
    grid_report = json.loads(grid_report_path.read_text())
    assert len(grid_report["grid_table"]) == 2

    rob_path = tmp_path / "rob.json"
    assert cli.main(["robustness", "--config", str(cfg_path),
                     "--fractions", "0,0.4", "--out", str(rob_path), "--jobs", "1"]) == 0
    rob = json.loads(rob_path.read_text())
    assert rob["fractions"] == [0.0, 0.4]
    assert len(rob["accuracies"]) == 2


def test_exit_code_config_error(tmp_path):
    assert cli.main(["experiment", "--config", str(tmp_path / "x.json")]) == 1  # unreadable config
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"manifest": "m.json", "feature": "nope"}))
    assert cli.main(["experiment", "--config", str(bad)]) == 1
    assert cli.main(["vocab"]) == 1  # missing required arguments


def test_exit_code_data_error(corpus_dir, tmp_path):
    cfg = {
        "manifest": str(tmp_path / "missing_manifest.json"),
        "feature": "hmm2vec",
        "classifier": "knn",
    }
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg))
    assert cli.main(["experiment", "--config", str(cfg_path)]) == 2
    # vocabulary larger than the corpus alphabet
    assert cli.main(
        ["vocab", "--manifest", str(corpus_dir / "manifest.json"), "-M", "400",
         "--out", str(tmp_path / "v.json")]
    ) == 2


def test_exit_code_numeric_error(monkeypatch, tmp_path):
    def boom(args):
        raise NumericError("synthetic numeric failure", iteration=7)

    monkeypatch.setitem(cli.build_parser.__globals__, "_cmd_vocab", boom)
    assert cli.main(["vocab", "--manifest", "m", "-M", "2", "--out", "v"]) == 3


def test_console_script_help_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "opseq.cli", "--help"], capture_output=True, text=True
    )
    assert proc.returncode == 0
    assert "opseq" in proc.stdout
