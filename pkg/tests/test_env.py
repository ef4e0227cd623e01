import numpy as np
import pytest
from scipy.stats import chi2_contingency

from igl_lab.core import ContractViolation, UniformPolicy
from igl_lab.data import SupervisedDataset, make_gaussian_clusters
from igl_lab.env import (
    DigitExemplar, DigitOneHot, IglEnvironment, PairVector, RewardExemplar, RewardOneHot, SealedRewards,
    TabularEnv, encode_feedback, random_tabular_env, separable_tabular_env, simulate_log,
    tabular_simulate,
)


def test_pair_vector_and_reward_onehot():
    assert encode_feedback(PairVector(), 3, 1).tolist() == [3.0, 1.0]
    assert encode_feedback(RewardOneHot(), 3, 0).tolist() == [1.0, 0.0]
    assert PairVector.action_inclusive and not RewardOneHot.action_inclusive


@pytest.mark.parametrize("a,r,digit", [(0, 1, 3), (0, 0, 7), (8, 1, 1), (2, 0, 9), (5, 0, 2)])
def test_digit_onehot_shift(a, r, digit):
    y = encode_feedback(DigitOneHot(), a, r)
    assert y.argmax() == digit and y.sum() == 1


def test_encode_rejects_non_binary_reward():
    with pytest.raises(ContractViolation):
        encode_feedback(PairVector(), 0, 2)


def test_exemplars_draw_rows_with_target_label():
    pool = SupervisedDataset(np.arange(20.0)[:, None], np.arange(20) % 10, 10)
    enc = DigitExemplar(pool)
    rng = np.random.default_rng(0)
    ys = enc.encode_batch(np.array([0, 0, 4]), np.array([1, 0, 1]), rng)
    assert [int(v) % 10 for v in ys[:, 0]] == [3, 7, 7]
    renc = RewardExemplar(pool)
    ys = renc.encode_batch(np.array([5, 5]), np.array([0, 1]), rng)
    assert [int(v) % 10 for v in ys[:, 0]] == [0, 1]


def test_simulate_log_rewards_match_labels_and_propensities():
    ds = make_gaussian_clusters(num_classes=4, dim=3, num_samples=500, seed=1)
    env = IglEnvironment(ds, PairVector())
    log, sealed = simulate_log(env, 4000, seed=2)
    r = sealed.unseal()
    np.testing.assert_array_equal(log.feedbacks[:, 1], r)
    np.testing.assert_array_equal(log.feedbacks[:, 0], log.actions)
    np.testing.assert_allclose(log.propensities, 0.25)
    assert r.mean() == pytest.approx(0.25, abs=0.03)
    log2, _ = simulate_log(env, 4000, seed=2)
    np.testing.assert_array_equal(log.feedbacks, log2.feedbacks)


def test_p_flip_rate():
    ds = make_gaussian_clusters(num_classes=2, dim=2, num_samples=200, seed=0)
    clean, s0 = simulate_log(IglEnvironment(ds, RewardOneHot()), 20000, seed=5)
    noisy, s1 = simulate_log(IglEnvironment(ds, RewardOneHot(), p_flip=0.2), 20000, seed=5)
    np.testing.assert_array_equal(clean.actions, noisy.actions)
    assert np.mean(s0.unseal() != s1.unseal()) == pytest.approx(0.2, abs=0.015)


def test_sealed_rewards_hide_values_in_repr():
    s = SealedRewards([0, 1, 1])
    assert "1" not in repr(s).replace("n=3", "")
    assert s.take([2]).unseal().tolist() == [1]


def test_tabular_env_validation():
    with pytest.raises(ContractViolation):
        TabularEnv([0.5, 0.6], [[1.0], [1.0]], [[0.0], [1.0]], [[1.0]], [[1.0]])
    with pytest.raises(ContractViolation):
        TabularEnv([1.0], [[1.0]], [[1.5]], [[1.0]], [[1.0]])


def test_tabular_env_json_round_trip(tmp_path):
    env = random_tabular_env(np.random.default_rng(0))
    p = tmp_path / "env.json"
    import json
    p.write_text(json.dumps(env.to_json()))
    back = TabularEnv.load(p)
    np.testing.assert_array_equal(back.joint(), env.joint())
    assert env.joint().sum() == pytest.approx(1.0, abs=1e-12)


def test_tabular_simulation_frequencies():
    env = random_tabular_env(np.random.default_rng(3), 3, 2, 4)
    log, _ = tabular_simulate(env, 100_000, seed=11)
    x = log.contexts.argmax(1)
    y = log.feedbacks.argmax(1)
    freq = np.zeros(env.joint().shape)
    np.add.at(freq, (x, log.actions, y), 1.0)
    freq /= len(log)
    assert np.max(np.abs(freq - env.joint())) < 0.02


def test_feedback_independent_of_context_given_action_and_reward():
    # one deterministic reward per (x, a) so that (a, r) strata contain several contexts
    R = np.array([[1, 0], [1, 0], [0, 1], [0, 1]], dtype=float)
    env = TabularEnv(np.full(4, 0.25), np.full((4, 2), 0.5), R,
                     [[0.5, 0.3, 0.2], [0.2, 0.2, 0.6]], [[0.1, 0.1, 0.8], [0.6, 0.3, 0.1]])
    log, sealed = tabular_simulate(env, 40_000, seed=4)
    x, y, r, a = log.contexts.argmax(1), log.feedbacks.argmax(1), sealed.unseal(), log.actions
    for aa in (0, 1):
        for rr in (0, 1):
            sel = (a == aa) & (r == rr)
            xs = np.unique(x[sel])
            table = np.array([[np.sum(sel & (x == xv) & (y == yv)) for yv in range(3)] for xv in xs])
            _, pval, _, _ = chi2_contingency(table)
            assert pval > 1e-3


def test_separable_env_properties():
    rng = np.random.default_rng(8)
    env = separable_tabular_env(rng, 5, 3, 5, max_rho=0.3)
    for a in range(3):
        assert np.all(env.kernel0[a] * env.kernel1[a] == 0)
        rho = env.d0 @ env.R[:, a]
        assert 0 < rho <= 0.3
    assert set(np.unique(env.R)) == {0.0, 1.0}


def test_behavior_policy_shape_checked():
    ds = make_gaussian_clusters(num_classes=3, dim=2, num_samples=50, seed=0)
    with pytest.raises(ContractViolation):
        IglEnvironment(ds, PairVector(), behavior_policy=UniformPolicy(4))
