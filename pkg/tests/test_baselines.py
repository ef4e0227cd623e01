import numpy as np
import pytest
from scipy.special import softmax

from igl_lab.baselines import FullCiConfig, full_ci_objective, run_cb_skyline, run_full_ci_igl
from igl_lab.cb_oracle import evaluate_policy
from igl_lab.core import ConstantPolicy, ContractViolation, InteractionLog
from igl_lab.data import make_gaussian_clusters, standardize
from igl_lab.env import IglEnvironment, PairVector, RewardOneHot, SealedRewards, simulate_log


def test_full_ci_objective_matches_loop():
    rng = np.random.default_rng(0)
    n, K = 30, 3
    log = InteractionLog(rng.normal(size=(n, 2)), rng.integers(K, size=n), rng.normal(size=(n, 2)),
                         rng.uniform(0.2, 0.6, size=n), K)
    logits = rng.normal(size=(n, K))
    psi = rng.random(n)
    bad = ConstantPolicy(1, K)
    ref = 0.0
    for i in range(n):
        pi = softmax(logits[i])[log.actions[i]]
        pb = 1.0 if log.actions[i] == 1 else 0.0
        ref += (pi - pb) / log.propensities[i] * psi[i]
    assert full_ci_objective(log, logits, psi, bad) == pytest.approx(ref / n, abs=1e-14)


def test_skyline_needs_matching_sealed_rewards():
    ds = make_gaussian_clusters(num_classes=2, dim=2, num_samples=50, seed=0)
    log, sealed = simulate_log(IglEnvironment(ds, PairVector()), 50, seed=0)
    with pytest.raises(ContractViolation):
        run_cb_skyline(log, SealedRewards([0, 1]))
    with pytest.raises(ContractViolation):
        run_cb_skyline(log, sealed.unseal())


@pytest.fixture(scope="module")
def clusters():
    ds, _ = standardize(make_gaussian_clusters(num_classes=4, dim=6, num_samples=6000, seed=3))
    return ds


def test_full_ci_succeeds_without_action_leak(clusters):
    log, _ = simulate_log(IglEnvironment(clusters, RewardOneHot()), clusters.n, seed=2)
    res = run_full_ci_igl(log, config=FullCiConfig(seed=1))
    assert evaluate_policy(res.policy, clusters) > 0.9
    assert res.objective > 0


def test_full_ci_collapses_with_action_in_feedback(clusters):
    log, sealed = simulate_log(IglEnvironment(clusters, PairVector()), clusters.n, seed=2)
    full = evaluate_policy(run_full_ci_igl(log, config=FullCiConfig(seed=1)).policy, clusters)
    cb = evaluate_policy(run_cb_skyline(log, sealed), clusters)
    assert full <= 0.4 * cb


def test_full_ci_seeded():
    ds = make_gaussian_clusters(num_classes=3, dim=3, num_samples=400, seed=0)
    log, _ = simulate_log(IglEnvironment(ds, RewardOneHot()), 400, seed=0)
    a = run_full_ci_igl(log, config=FullCiConfig(seed=4, restarts=2))
    b = run_full_ci_igl(log, config=FullCiConfig(seed=4, restarts=2))
    np.testing.assert_array_equal(a.policy.scorer.weights, b.policy.scorer.weights)
    assert a.objective == b.objective
