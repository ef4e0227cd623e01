"""Comparison learners: the true-reward CB skyline and full-CI IGL.

Full-CI IGL learns one action-blind decoder ``psi(y)`` together with a softmax
policy by maximizing ``V(pi, psi) - V(pi_bad, psi)``, where values are
importance-weighted averages of ``psi`` over the log. It is correct when the
feedback depends on the reward alone and breaks when the action leaks into it.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import softmax

from ._optim import Adam, batches
from .cb_oracle import CbConfig, train_cb_policy
from .core import (
    ArgmaxPolicy,
    ContractViolation,
    DecodedLog,
    DivergenceError,
    InteractionLog,
    LinearScorer,
    Policy,
    UniformPolicy,
    sigmoid,
)
from .env import SealedRewards


def run_cb_skyline(log: InteractionLog, sealed: SealedRewards, config: CbConfig = CbConfig()) -> ArgmaxPolicy:
    """Train the CB oracle on the true rewards of a simulated log."""
    if not isinstance(sealed, SealedRewards) or len(sealed) != len(log):
        raise ContractViolation("the skyline needs the sealed true rewards of this exact log")
    records = DecodedLog(log.contexts, log.actions, sealed.unseal().astype(float),
                         log.propensities, log.num_actions)
    return train_cb_policy(records, config)


@dataclass(frozen=True)
class FullCiConfig:
    learning_rate: float = 0.05
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    restarts: int = 4
    init_std: float = 0.01
    temperature: float = 1.0
    shuffle: str = "once"


@dataclass(frozen=True)
class FullCiResult:
    policy: ArgmaxPolicy
    decoder: LinearScorer
    objective: float


def full_ci_objective(log: InteractionLog, policy_logits: np.ndarray, psi_values: np.ndarray,
                      pi_bad: Optional[Policy] = None, temperature: float = 1.0) -> float:
    """IPS estimate of ``V(pi, psi) - V(pi_bad, psi)`` for a softmax policy."""
    pi_bad = pi_bad or UniformPolicy(log.num_actions)
    rows = np.arange(len(log))
    pi = softmax(policy_logits / temperature, axis=1)[rows, log.actions]
    pb = pi_bad.probabilities_batch(log.contexts)[rows, log.actions]
    return float(np.mean((pi - pb) / log.propensities * psi_values))


def _fit_once(log: InteractionLog, pb: np.ndarray, config: FullCiConfig, rng: np.random.Generator):
    X, Y, a, p = log.contexts, log.feedbacks, log.actions, log.propensities
    n, d = X.shape
    K, m = log.num_actions, Y.shape[1]
    Wpi = rng.normal(scale=config.init_std, size=(K, d))
    bpi = np.zeros(K)
    wpsi = rng.normal(scale=config.init_std, size=m)
    bpsi = 0.0
    opt_pi = Adam(K * (d + 1), config.learning_rate)
    opt_psi = Adam(m + 1, config.learning_rate)
    tau = config.temperature
    for epoch, idx in batches(n, config.batch_size, config.epochs, rng, config.shuffle):
        Xb, Yb, ab = X[idx], Y[idx], a[idx]
        nb = idx.shape[0]
        rows = np.arange(nb)
        # decoder step with the policy held fixed
        probs = softmax((Xb @ Wpi.T + bpi) / tau, axis=1)
        coef = (probs[rows, ab] - pb[idx]) / p[idx]
        psi = sigmoid(Yb @ wpsi + bpsi)
        g = coef * psi * (1 - psi) / nb
        delta = opt_psi.step(np.concatenate([Yb.T @ g, [g.sum()]]), maximize=True)
        wpsi = wpsi + delta[:m]
        bpsi = bpsi + delta[m]
        # policy step with the decoder held fixed
        psi = sigmoid(Yb @ wpsi + bpsi)
        c = psi / p[idx] * probs[rows, ab] / nb
        onehot = np.zeros_like(probs)
        onehot[rows, ab] = 1.0
        glog = c[:, None] * (onehot - probs) / tau
        grad = np.concatenate([(glog.T @ Xb).ravel(), glog.sum(axis=0)])
        if not (np.all(np.isfinite(grad)) and np.all(np.isfinite(delta))):
            raise DivergenceError(f"non-finite full-CI gradient at epoch {epoch}", epoch)
        step = opt_pi.step(grad, maximize=True)
        Wpi = Wpi + step[:K * d].reshape(K, d)
        bpi = bpi + step[K * d:]
    psi_all = sigmoid(Y @ wpsi + bpsi)
    probs = softmax((X @ Wpi.T + bpi) / tau, axis=1)[np.arange(n), a]
    obj = float(np.mean((probs - pb) / p * psi_all))
    if not np.isfinite(obj):
        raise DivergenceError("non-finite full-CI objective", config.epochs - 1)
    return Wpi, bpi, wpsi, bpsi, obj


def run_full_ci_igl(log: InteractionLog, pi_bad: Optional[Policy] = None,
                    config: FullCiConfig = FullCiConfig()) -> FullCiResult:
    """Alternating ascent on the full-CI objective; the best restart's greedy policy is returned."""
    if len(log) == 0:
        raise ContractViolation("cannot train on an empty log")
    pi_bad = pi_bad or UniformPolicy(log.num_actions)
    pb = pi_bad.probabilities_batch(log.contexts)[np.arange(len(log)), log.actions]
    best = None
    for restart in range(config.restarts):
        rng = np.random.default_rng(np.random.SeedSequence([config.seed, restart]))
        fit = _fit_once(log, pb, config, rng)
        if best is None or fit[-1] > best[-1]:
            best = fit
    Wpi, bpi, wpsi, bpsi, obj = best
    return FullCiResult(
        ArgmaxPolicy(LinearScorer(Wpi, bpi, "context")),
        LinearScorer(wpsi[None, :], np.array([bpsi]), "feedback"),
        obj,
    )
