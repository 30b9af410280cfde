import itertools
import json

import numpy as np
import pytest

from opseq.corpus import FamilyGenerator, OpcodeSequence
from opseq.errors import ConfigError, DataError, UnsupportedShapeError
from opseq.hmm import (
    HmmModel,
    RestartPolicy,
    _bw_step,
    baum_welch,
    forward_log_prob,
    hmm2vec,
    train_with_restarts,
)
from opseq.seeding import derive_seed

from conftest import id_seq, id_vocab, random_stochastic


def brute_force_log_prob(A, B, pi, seq) -> float:
    """Exhaustive sum over all N^T hidden paths (independent oracle)."""
    N = A.shape[0]
    T = len(seq)
    paths = np.array(list(itertools.product(range(N), repeat=T)), dtype=np.int64)
    p = pi[paths[:, 0]] * B[paths[:, 0], seq[0]]
    for t in range(1, T):
        p = p * A[paths[:, t - 1], paths[:, t]] * B[paths[:, t], seq[t]]
    return float(np.log(p.sum()))


def model_from(A, B, pi, **kw) -> HmmModel:
    A = np.asarray(A, float)
    B = np.asarray(B, float)
    pi = np.asarray(pi, float)
    return HmmModel(N=A.shape[0], M=B.shape[1], A=A, B=B, pi=pi, **kw)


def random_model(rng, N, M) -> HmmModel:
    return model_from(
        random_stochastic(rng, N, N), random_stochastic(rng, N, M), rng.dirichlet(np.ones(N))
    )


# --- forward_log_prob ------------------------------------------------------


def test_forward_deterministic_emitter():
    model = model_from([[1.0]], [[1.0, 0.0]], [1.0])
    assert forward_log_prob(model, id_seq([0, 0, 0])) == pytest.approx(0.0, abs=1e-12)


def test_forward_uniform_everything():
    model = model_from([[0.5, 0.5]] * 2, [[0.5, 0.5]] * 2, [0.5, 0.5])
    # every emission contributes 1/2 regardless of state
    assert forward_log_prob(model, id_seq([0, 1, 0])) == pytest.approx(np.log(1 / 8), rel=1e-12)


def test_forward_matches_brute_force_on_random_instances():
    rng = np.random.default_rng(42)
    for _ in range(30):
        N = int(rng.integers(1, 4))
        M = int(rng.integers(1, 5))
        T = int(rng.integers(1, 9))
        model = random_model(rng, N, M)
        seq = rng.integers(0, M, size=T)
        got = forward_log_prob(model, seq)
        expected = brute_force_log_prob(model.A, model.B, model.pi, seq)
        assert got == pytest.approx(expected, rel=1e-9)


def test_forward_impossible_symbol_is_minus_inf():
    model = model_from([[1.0]], [[1.0, 0.0]], [1.0])
    assert forward_log_prob(model, id_seq([1])) == -np.inf


def test_forward_rejects_out_of_range_ids():
    model = model_from([[1.0]], [[0.5, 0.5]], [1.0])
    with pytest.raises(DataError):
        forward_log_prob(model, id_seq([0, 2]))


# --- baum_welch -------------------------------------------------------------


def test_bw_single_symbol_forces_emission_mass():
    model = baum_welch(id_seq([0] * 500), N=2, M=2, seed=1)
    assert np.all(model.B[:, 0] > 1 - 1e-6)
    model.validate()


def test_bw_log_likelihood_monotone():
    rng = np.random.default_rng(5)
    for trial in range(5):
        seq = rng.integers(0, 8, size=500)
        model = baum_welch(seq, N=2, M=8, seed=trial)
        diffs = np.diff(model.log_history)
        assert np.all(diffs >= -1e-8)


def test_bw_step_preserves_row_stochasticity():
    rng = np.random.default_rng(17)
    for _ in range(20):
        N = int(rng.integers(1, 4))
        M = int(rng.integers(2, 6))
        seq = rng.integers(0, M, size=60)
        A = random_stochastic(rng, N, N)
        B = random_stochastic(rng, N, M)
        pi = rng.dirichlet(np.ones(N))
        _, A2, B2, pi2 = _bw_step(seq, A, B, pi, 1e-10)
        for mat in (A2, B2, pi2[None, :]):
            np.testing.assert_allclose(mat.sum(axis=1), 1.0, atol=1e-9)
            assert np.all(mat >= 0) and np.all(mat <= 1 + 1e-12)


def test_bw_improves_over_initialization():
    rng = np.random.default_rng(3)
    seq = rng.integers(0, 4, size=400)
    model = baum_welch(seq, N=2, M=4, seed=0)
    assert model.log_likelihood >= model.log_history[0]


def test_bw_planted_model_recovery():
    planted_B = np.array([[0.9, 0.1], [0.1, 0.9]])
    gen = FamilyGenerator(
        "p", np.array([[0.95, 0.05], [0.05, 0.95]]), planted_B, np.array([0.6, 0.4])
    )
    seq = gen.sample(5000, np.random.default_rng(123))
    model = train_with_restarts(seq, N=2, M=2, policy=RestartPolicy.fixed(10), seed=7)
    errs = []
    for perm in ([0, 1], [1, 0]):
        errs.append(np.max(np.abs(model.B[perm] - planted_B)))
    assert min(errs) <= 0.05


def test_bw_input_validation():
    with pytest.raises(DataError):
        baum_welch(id_seq([0]), N=2, M=2)
    with pytest.raises(ConfigError):
        baum_welch(id_seq([0, 1]), N=0, M=2)
    with pytest.raises(DataError):
        baum_welch(id_seq([0, 5]), N=2, M=2)


def test_bw_deterministic_given_seed():
    rng = np.random.default_rng(9)
    seq = rng.integers(0, 3, size=200)
    m1 = baum_welch(seq, N=2, M=3, seed=77)
    m2 = baum_welch(seq, N=2, M=3, seed=77)
    assert np.array_equal(m1.B, m2.B) and np.array_equal(m1.A, m2.A)
    assert m1.log_likelihood == m2.log_likelihood


# --- train_with_restarts ------------------------------------------------------


def test_restart_policy_counts():
    policy = RestartPolicy()
    assert policy.restarts_for(3000) == 100
    assert policy.restarts_for(1000) == 100
    assert policy.restarts_for(5000) == 100
    assert policy.restarts_for(8000) == 50
    assert policy.restarts_for(999) == 50
    with pytest.raises(ConfigError):
        RestartPolicy(restarts_short=0)


def test_single_restart_equals_baum_welch_with_derived_seed():
    rng = np.random.default_rng(2)
    seq = rng.integers(0, 4, size=300)
    best = train_with_restarts(seq, N=2, M=4, policy=RestartPolicy.fixed(1), seed=5)
    single = baum_welch(seq, N=2, M=4, seed=derive_seed(5, 0))
    assert np.array_equal(best.B, single.B)
    assert best.log_likelihood == single.log_likelihood


def test_restarts_return_maximum_likelihood_model():
    rng = np.random.default_rng(4)
    seq = rng.integers(0, 4, size=300)
    best = train_with_restarts(seq, N=2, M=4, policy=RestartPolicy.fixed(6), seed=11)
    singles = [baum_welch(seq, N=2, M=4, seed=derive_seed(11, r)) for r in range(6)]
    assert best.log_likelihood == max(s.log_likelihood for s in singles)
    assert all(best.log_likelihood >= s.log_likelihood for s in singles)


def test_restarts_bit_identical_across_calls():
    rng = np.random.default_rng(6)
    seq = rng.integers(0, 3, size=250)
    a = train_with_restarts(seq, N=2, M=3, policy=RestartPolicy.fixed(4), seed=1)
    b = train_with_restarts(seq, N=2, M=3, policy=RestartPolicy.fixed(4), seed=1)
    for x, y in ((a.A, b.A), (a.B, b.B), (a.pi, b.pi)):
        assert np.array_equal(x, y)


# --- hmm2vec ---------------------------------------------------------------


def test_hmm2vec_anchor_row_first():
    vocab = id_vocab(2)
    model = model_from([[0.5, 0.5]] * 2, [[0.2, 0.8], [0.7, 0.3]], [0.5, 0.5])
    fv = hmm2vec(model, vocab)
    np.testing.assert_array_equal(fv.values, [0.7, 0.3, 0.2, 0.8])
    assert fv.provenance == "hmm2vec"


def test_hmm2vec_invariant_under_state_swap():
    rng = np.random.default_rng(10)
    vocab = id_vocab(5)
    for _ in range(25):
        model = random_model(rng, 2, 5)
        swapped = model_from(
            model.A[[1, 0]][:, [1, 0]], model.B[[1, 0]], model.pi[[1, 0]]
        )
        np.testing.assert_array_equal(
            hmm2vec(model, vocab).values, hmm2vec(swapped, vocab).values
        )


def test_hmm2vec_length_is_2m():
    rng = np.random.default_rng(12)
    vocab = id_vocab(31)
    fv = hmm2vec(random_model(rng, 2, 31), vocab)
    assert fv.values.shape == (62,)
    # each M-block is a row of B: sums to 1
    np.testing.assert_allclose(fv.values[:31].sum(), 1.0, atol=1e-9)
    np.testing.assert_allclose(fv.values[31:].sum(), 1.0, atol=1e-9)


def test_hmm2vec_rejects_general_n_by_default():
    rng = np.random.default_rng(13)
    vocab = id_vocab(4)
    model = random_model(rng, 3, 4)
    with pytest.raises(UnsupportedShapeError):
        hmm2vec(model, vocab)
    fv = hmm2vec(model, vocab, allow_general_n=True)
    assert fv.values.shape == (12,)
    anchor_probs = fv.values.reshape(3, 4)[:, 0]
    assert np.all(np.diff(anchor_probs) <= 0)


def test_hmm2vec_vocab_mismatch():
    rng = np.random.default_rng(14)
    with pytest.raises(DataError):
        hmm2vec(random_model(rng, 2, 4), id_vocab(5))


# --- model files -------------------------------------------------------------


def test_model_json_round_trip(tmp_path):
    rng = np.random.default_rng(15)
    seq = rng.integers(0, 3, size=120)
    model = baum_welch(OpcodeSequence("sX", "famY", list(map(int, seq))), N=2, M=3, seed=3)
    path = tmp_path / "m.json"
    model.save(path)
    loaded = HmmModel.load(path)
    assert json.loads(path.read_text())["seed"] == 3
    np.testing.assert_array_equal(loaded.A, model.A)
    np.testing.assert_array_equal(loaded.B, model.B)
    np.testing.assert_array_equal(loaded.pi, model.pi)
    assert loaded.log_likelihood == model.log_likelihood
    assert (loaded.sample_id, loaded.family) == ("sX", "famY")
    assert loaded.iterations == model.iterations
