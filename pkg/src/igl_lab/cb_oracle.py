"""Offline contextual-bandit oracle and policy evaluation.

The oracle regresses the (decoded or true) reward of each action on the
context with a per-action logistic model, weighting each record by its inverse
propensity, and returns the argmax policy of the fitted regressor.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ._optim import batches
from .core import ArgmaxPolicy, ContractViolation, DecodedLog, DivergenceError, LinearScorer, Policy, sigmoid
from .data import SupervisedDataset


@dataclass(frozen=True)
class CbConfig:
    learning_rate: float = 0.1
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    shuffle: str = "once"
    importance_weighting: bool = True

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ContractViolation("learning_rate, epochs and batch_size must be positive")


def train_cb_policy(records: DecodedLog, config: CbConfig = CbConfig()) -> ArgmaxPolicy:
    """Fit argmax-of-regressor policy by IPS-weighted squared error, minibatch SGD."""
    if not isinstance(records, DecodedLog):
        raise ContractViolation("the oracle consumes a DecodedLog (context, action, reward, propensity)")
    n = len(records)
    if n == 0:
        raise ContractViolation("cannot train on an empty dataset")
    X, a, r = records.contexts, records.actions, records.rewards
    K, d = records.num_actions, X.shape[1]
    if config.importance_weighting:
        w = 1.0 / records.propensities
        # mean-one normalization: constant propensities give unit weights exactly
        w = w / w.mean()
    else:
        w = np.ones(n)
    W = np.zeros((K, d))
    b = np.zeros(K)
    rng = np.random.default_rng(config.seed)
    lr = config.learning_rate
    for epoch, idx in batches(n, config.batch_size, config.epochs, rng, config.shuffle):
        Xb, ab = X[idx], a[idx]
        s = sigmoid(np.einsum("ij,ij->i", Xb, W[ab]) + b[ab])
        resid = s - r[idx]
        loss = float(np.mean(w[idx] * resid * resid))
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite CB regression loss at epoch {epoch}", epoch)
        g = 2.0 * w[idx] * resid * s * (1.0 - s) / idx.shape[0]
        gW = np.zeros_like(W)
        np.add.at(gW, ab, g[:, None] * Xb)
        gb = np.bincount(ab, weights=g, minlength=K)
        W -= lr * gW
        b -= lr * gb
    if not (np.all(np.isfinite(W)) and np.all(np.isfinite(b))):
        raise DivergenceError("non-finite CB regressor parameters", config.epochs - 1)
    return ArgmaxPolicy(LinearScorer(W, b, "context"))


def evaluate_policy(policy: Policy, eval_ds: SupervisedDataset) -> float:
    """Fraction of rows whose greedy action equals the label."""
    if policy.num_actions != eval_ds.num_classes:
        raise ContractViolation("policy and dataset disagree on the number of actions")
    if isinstance(policy, ArgmaxPolicy) and policy.scorer.dim != eval_ds.dim:
        raise ContractViolation("policy and dataset disagree on the context dimension")
    return float(np.mean(policy.act_batch(eval_ds.features) == eval_ds.labels))
