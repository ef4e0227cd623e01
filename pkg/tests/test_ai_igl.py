import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracles
from igl_lab.ai_igl import (
    AiIglConfig, ContrastiveConfig, DecoderSet, break_symmetry, decode_dataset,
    empirical_contrastive_objective, estimate_rho_hat, fit_contrastive_pair, run_ai_igl,
)
from igl_lab.cb_oracle import evaluate_policy
from igl_lab.core import (
    ConstantPolicy, ContractViolation, DegeneracyWarning, InsufficientDataError, InteractionLog,
    LinearScorer, SymmetryConfig, SymmetryWarning, UniformPolicy,
)
from igl_lab.data import make_gaussian_clusters, standardize
from igl_lab.env import IglEnvironment, PairVector, separable_tabular_env, simulate_log, tabular_simulate


def random_log(rng, n=40, K=3, dx=3, dy=2):
    return InteractionLog(rng.normal(size=(n, dx)), np.arange(n) % K, rng.normal(size=(n, dy)),
                          np.full(n, 1 / K), K)


def test_empirical_objective_matches_loop_covariance():
    rng = np.random.default_rng(0)
    log = random_log(rng)
    f = LinearScorer(rng.normal(size=(3, 3)), rng.normal(size=3))
    psi = LinearScorer(rng.normal(size=(3, 2)), rng.normal(size=3), "feedback")
    for a in range(3):
        idx = log.bucket(a)
        fv = [f.score(log.contexts[i], a) for i in idx]
        pv = [psi.score(log.feedbacks[i], a) for i in idx]
        assert empirical_contrastive_objective(log, a, f, psi) == pytest.approx(
            oracles.sample_covariance(fv, pv), abs=1e-15)


@settings(max_examples=1000, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_empirical_complement_antisymmetry(seed):
    rng = np.random.default_rng(seed)
    log = random_log(rng, n=int(rng.integers(6, 30)))
    f = LinearScorer(rng.normal(size=(3, 3)), rng.normal(size=3))
    psi = LinearScorer(rng.normal(size=(3, 2)), rng.normal(size=3), "feedback")
    a = int(rng.integers(3))
    obj = empirical_contrastive_objective(log, a, f, psi)
    assert empirical_contrastive_objective(log, a, f, psi.complement()) == pytest.approx(-obj, abs=1e-12)
    assert empirical_contrastive_objective(log, a, f.complement(), psi.complement()) == pytest.approx(obj, abs=1e-12)


def test_small_bucket_raises():
    log = InteractionLog([[0.0], [1.0], [2.0]], [0, 0, 1], [[0.0], [1.0], [0.0]], [0.5] * 3, 2)
    with pytest.raises(InsufficientDataError) as err:
        fit_contrastive_pair(log, 1)
    assert err.value.action == 1


def test_constant_feedback_warns_degenerate():
    rng = np.random.default_rng(1)
    log = InteractionLog(rng.normal(size=(60, 2)), np.zeros(60, int), np.ones((60, 2)), np.ones(60), 1)
    with pytest.warns(DegeneracyWarning):
        pair = fit_contrastive_pair(log, 0, ContrastiveConfig(restarts=1, min_steps=20))
    assert pair.degenerate


def test_fit_reaches_separable_optimum_and_is_seeded():
    env = separable_tabular_env(np.random.default_rng(4), 4, 2, 4)
    log, _ = tabular_simulate(env, 6000, seed=0)
    p1 = fit_contrastive_pair(log, 1, ContrastiveConfig(seed=5))
    p2 = fit_contrastive_pair(log, 1, ContrastiveConfig(seed=5))
    np.testing.assert_array_equal(p1.psi.weights, p2.psi.weights)
    rho = env.d0 @ env.R[:, 1]
    assert abs(p1.achieved_objective) >= 0.95 * rho * (1 - rho)
    # only the fitted action's row is populated
    assert np.all(p1.f.weights[0] == 0) and np.all(p1.psi.biases[0] == 0)


def test_break_symmetry_directions():
    pair = type("P", (), {"psi": LinearScorer(np.array([[2.0]]), np.array([1.0]), "feedback")})()
    psi, flipped = break_symmetry(pair, 0.8)
    assert flipped and psi.weights[0, 0] == -2.0
    psi, flipped = break_symmetry(pair, 0.5)
    assert not flipped
    _, flipped = break_symmetry(pair, 0.4, "rho_above_half")
    assert flipped
    with pytest.raises(ContractViolation):
        break_symmetry(pair, 1.5)


def test_rho_hat_weights_by_baseline():
    log = InteractionLog(np.eye(2)[[0, 0, 1, 1]], [0, 0, 0, 0], [[0.0], [0.0], [8.0], [8.0]], [1.0] * 4, 2)
    psi = LinearScorer(np.array([[1.0], [0.0]]), np.zeros(2), "feedback")
    rho = estimate_rho_hat(log, psi, UniformPolicy(2), 0)
    assert rho == pytest.approx((0.5 + 0.5 + 2 / (1 + np.exp(-8))) / 4)
    with pytest.raises(InsufficientDataError):
        estimate_rho_hat(log, psi, ConstantPolicy(1, 2), 0)


def test_end_to_end_pair_vector():
    ds, _ = standardize(make_gaussian_clusters(num_classes=3, dim=4, num_samples=6000, seed=0))
    log, sealed = simulate_log(IglEnvironment(ds, PairVector()), ds.n, seed=1)
    res = run_ai_igl(log)
    assert evaluate_policy(res.policy, ds) > 0.95
    for rho, flipped in zip(res.decoders.rho_hat, res.decoders.flipped):
        assert (1 - rho if flipped else rho) <= 0.5
    decoded = decode_dataset(log, res.decoders)
    agree = np.mean((decoded.rewards > 0.5) == (sealed.unseal() == 1))
    assert agree > 0.99
    diag = res.diagnostics[0].to_json()
    assert set(diag) >= {"rho_hat", "flipped", "objective", "conditional_means", "warnings"}


def test_decoders_json_round_trip():
    rng = np.random.default_rng(2)
    dec = DecoderSet(LinearScorer(rng.normal(size=(2, 3)), rng.normal(size=2), "feedback"),
                     (True, False), (0.7, 0.2), (0.1, -0.2))
    back = DecoderSet.from_json(json.loads(json.dumps(dec.to_json())))
    np.testing.assert_array_equal(back.scorer.weights, dec.scorer.weights)
    assert back.flipped == dec.flipped


def test_missing_action_reported_for_all_failures():
    rng = np.random.default_rng(0)
    log = InteractionLog(rng.normal(size=(20, 2)), np.zeros(20, int), rng.normal(size=(20, 2)),
                         np.full(20, 1 / 3), 3)
    with pytest.raises(InsufficientDataError, match="2 action"):
        run_ai_igl(log)


def test_symmetry_warning_when_rho_near_half():
    env = separable_tabular_env(np.random.default_rng(0), 4, 1, 4)
    env = type(env)(np.full(4, 0.25), env.mu, np.array([[1.0], [1.0], [0.0], [0.0]]), env.kernel0, env.kernel1)
    log, _ = tabular_simulate(env, 4000, seed=0)
    with pytest.warns(SymmetryWarning):
        run_ai_igl(log, AiIglConfig(ContrastiveConfig(restarts=1)), SymmetryConfig.uniform(1, eta=0.2))
