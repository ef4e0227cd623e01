"""Environments with latent binary rewards and feedback vectors.

:class:`IglEnvironment` wraps a supervised dataset: the reward is correctness of
the chosen action as a label prediction, and the learner only sees the vector
produced by a :class:`FeedbackEncoder`. :class:`TabularEnv` is a fully
enumerable finite environment used by the exact oracle.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Union

import numpy as np

from .core import ContractViolation, IglError, InteractionLog, Policy, UniformPolicy
from .data import SupervisedDataset


class EnvironmentConstructionError(IglError, ValueError):
    """An environment could not be constructed from its parts."""


def default_shift(r):
    return 6 * r - 3


# ---------------------------------------------------------------------------
# Feedback encoders
# ---------------------------------------------------------------------------


class FeedbackEncoder:
    """Maps (action, latent reward) to a feedback vector, never looking at the context."""

    action_inclusive: bool = True

    def dim(self) -> int:
        raise NotImplementedError

    def encode_batch(self, actions: np.ndarray, rewards: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        raise NotImplementedError

    def encode(self, action: int, reward: int, rng: Optional[np.random.Generator] = None) -> np.ndarray:
        if reward not in (0, 1):
            raise ContractViolation("reward must be 0 or 1")
        rng = rng if rng is not None else np.random.default_rng(0)
        return self.encode_batch(np.array([action]), np.array([reward]), rng)[0]


@dataclass(frozen=True)
class PairVector(FeedbackEncoder):
    """``y = (a, r)``."""

    def dim(self) -> int:
        return 2

    def encode_batch(self, actions, rewards, rng):
        return np.column_stack([np.asarray(actions, float), np.asarray(rewards, float)])


def _onehot(idx: np.ndarray, width: int) -> np.ndarray:
    out = np.zeros((idx.shape[0], width))
    out[np.arange(idx.shape[0]), idx] = 1.0
    return out


@dataclass(frozen=True)
class DigitOneHot(FeedbackEncoder):
    """One-hot of the digit ``(a + shift(r)) mod base``."""

    base: int = 10
    shift_map: Callable = default_shift

    def dim(self) -> int:
        return self.base

    def digits(self, actions, rewards) -> np.ndarray:
        shift = np.array([self.shift_map(int(r)) for r in (0, 1)], dtype=np.int64)
        return (np.asarray(actions, np.int64) + shift[np.asarray(rewards, np.int64)]) % self.base

    def encode_batch(self, actions, rewards, rng):
        return _onehot(self.digits(actions, rewards), self.base)


class _ExemplarPool:
    def __init__(self, pool: SupervisedDataset, classes: range):
        self.features = pool.features
        self.rows = {}
        for c in classes:
            rows = np.flatnonzero(pool.labels == c)
            if rows.size == 0:
                raise EnvironmentConstructionError(f"exemplar pool has no rows labeled {c}")
            self.rows[c] = rows

    def draw(self, targets: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        out = np.empty((targets.shape[0], self.features.shape[1]))
        u = rng.random(targets.shape[0])
        for c, rows in self.rows.items():
            sel = targets == c
            if sel.any():
                pick = rows[np.minimum((u[sel] * rows.size).astype(np.int64), rows.size - 1)]
                out[sel] = self.features[pick]
        return out


@dataclass(frozen=True)
class DigitExemplar(FeedbackEncoder):
    """Features of a random pool row whose label is ``(a + shift(r)) mod base``.

    The pool is typically the training split itself, so for MNIST-as-CSV the
    feedback is an actual image of the target digit.
    """

    pool: SupervisedDataset
    base: int = 10
    shift_map: Callable = default_shift
    _index: _ExemplarPool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", _ExemplarPool(self.pool, range(self.base)))

    def dim(self) -> int:
        return self.pool.dim

    def encode_batch(self, actions, rewards, rng):
        digits = DigitOneHot(self.base, self.shift_map).digits(actions, rewards)
        return self._index.draw(digits, rng)


@dataclass(frozen=True)
class RewardOneHot(FeedbackEncoder):
    """One-hot of ``r`` alone (action-exclusive)."""

    action_inclusive = False

    def dim(self) -> int:
        return 2

    def encode_batch(self, actions, rewards, rng):
        return _onehot(np.asarray(rewards, np.int64), 2)


@dataclass(frozen=True)
class RewardExemplar(FeedbackEncoder):
    """Features of a random pool row labeled ``r`` (action-exclusive)."""

    pool: SupervisedDataset
    action_inclusive = False
    _index: _ExemplarPool = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_index", _ExemplarPool(self.pool, range(2)))

    def dim(self) -> int:
        return self.pool.dim

    def encode_batch(self, actions, rewards, rng):
        return self._index.draw(np.asarray(rewards, np.int64), rng)


@dataclass(frozen=True)
class TabularKernel(FeedbackEncoder):
    """``Pr(y | a, r)`` over a finite feedback set; emits one-hot vectors over Y.

    ``kernel0[a]`` and ``kernel1[a]`` are the feedback distributions for reward 0 and 1.
    """

    kernel0: np.ndarray
    kernel1: np.ndarray

    def __post_init__(self):
        for name in ("kernel0", "kernel1"):
            k = np.array(getattr(self, name), dtype=float, ndmin=2)
            _check_stochastic(k, name)
            k.setflags(write=False)
            object.__setattr__(self, name, k)
        if self.kernel0.shape != self.kernel1.shape:
            raise ContractViolation("kernel0 and kernel1 must have equal shapes")

    def dim(self) -> int:
        return self.kernel0.shape[1]

    def sample_indices(self, actions, rewards, rng) -> np.ndarray:
        actions = np.asarray(actions, np.int64)
        rewards = np.asarray(rewards, np.int64)
        rows = np.where(rewards[:, None] == 1, self.kernel1[actions], self.kernel0[actions])
        return _sample_rows(rows, rng)

    def encode_batch(self, actions, rewards, rng):
        return _onehot(self.sample_indices(actions, rewards, rng), self.dim())


def encode_feedback(encoder: FeedbackEncoder, action: int, reward: int,
                    rng: Optional[np.random.Generator] = None) -> np.ndarray:
    return encoder.encode(action, reward, rng)


def _sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF sampling of one category per row of a row-stochastic matrix."""
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])[:, None]
    idx = (u >= cdf).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def _check_stochastic(m: np.ndarray, name: str) -> None:
    if np.any(m < 0) or not np.allclose(m.sum(axis=-1), 1.0, atol=1e-12, rtol=0):
        raise ContractViolation(f"{name} rows must be probability vectors")


# ---------------------------------------------------------------------------
# Sealed rewards
# ---------------------------------------------------------------------------


class SealedRewards:
    """True latent rewards of a simulated log, kept apart from the log itself.

    Only evaluation code and the true-reward skyline call :meth:`unseal`.
    """

    __slots__ = ("_rewards",)

    def __init__(self, rewards: np.ndarray):
        r = np.array(rewards, dtype=np.int64)
        r.setflags(write=False)
        self._rewards = r

    def __len__(self) -> int:
        return int(self._rewards.shape[0])

    def __repr__(self) -> str:
        return f"SealedRewards(n={len(self)})"

    def unseal(self) -> np.ndarray:
        return self._rewards

    def take(self, idx) -> "SealedRewards":
        return SealedRewards(self._rewards[idx])


# ---------------------------------------------------------------------------
# Supervised-data environment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IglEnvironment:
    dataset: SupervisedDataset
    encoder: FeedbackEncoder
    p_flip: float = 0.0
    behavior_policy: Optional[Policy] = None

    def __post_init__(self):
        if not 0 <= self.p_flip < 0.5:
            raise ContractViolation("p_flip must lie in [0, 0.5)")
        if self.behavior_policy is None:
            object.__setattr__(self, "behavior_policy", UniformPolicy(self.dataset.num_classes))
        elif self.behavior_policy.num_actions != self.dataset.num_classes:
            raise ContractViolation("behavior policy action count differs from the dataset's")

    @property
    def num_actions(self) -> int:
        return self.dataset.num_classes


def simulate_log(env: IglEnvironment, num_steps: int, seed: int) -> tuple[InteractionLog, SealedRewards]:
    """Draw contexts uniformly from the dataset and log behavior-policy interactions."""
    if num_steps < 1:
        raise ContractViolation("num_steps must be >= 1")
    rng = np.random.default_rng(seed)
    rows = rng.integers(env.dataset.n, size=num_steps)
    X = env.dataset.features[rows]
    labels = env.dataset.labels[rows]
    probs = env.behavior_policy.probabilities_batch(X)
    actions = _sample_rows(probs, rng)
    rewards = (actions == labels).astype(np.int64)
    if env.p_flip > 0:
        rewards = np.where(rng.random(num_steps) < env.p_flip, 1 - rewards, rewards)
    feedbacks = env.encoder.encode_batch(actions, rewards, rng)
    props = probs[np.arange(num_steps), actions]
    log = InteractionLog(X, actions, feedbacks, props, env.num_actions)
    return log, SealedRewards(rewards)


# ---------------------------------------------------------------------------
# Tabular environments
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TabularEnv:
    """Finite environment: context distribution, behavior policy, reward means, feedback kernel.

    Shapes: ``d0`` (|X|,), ``mu`` and ``R`` (|X|, K), ``kernel0``/``kernel1`` (K, |Y|)
    holding ``Pr(y | a, r=0)`` and ``Pr(y | a, r=1)``.
    """

    d0: np.ndarray
    mu: np.ndarray
    R: np.ndarray
    kernel0: np.ndarray
    kernel1: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("d0", "mu", "R", "kernel0", "kernel1"):
            a = np.array(getattr(self, name), dtype=float)
            a.setflags(write=False)
            arrays[name] = a
            object.__setattr__(self, name, a)
        d0, mu, R = arrays["d0"], arrays["mu"], arrays["R"]
        if d0.ndim != 1 or mu.ndim != 2 or mu.shape != R.shape or mu.shape[0] != d0.shape[0]:
            raise ContractViolation("inconsistent TabularEnv shapes")
        for name in ("kernel0", "kernel1"):
            if arrays[name].ndim != 2 or arrays[name].shape[0] != mu.shape[1]:
                raise ContractViolation(f"{name} must have shape (K, |Y|)")
        if arrays["kernel0"].shape != arrays["kernel1"].shape:
            raise ContractViolation("kernel0 and kernel1 must have equal shapes")
        _check_stochastic(d0[None, :], "d0")
        _check_stochastic(mu, "mu")
        _check_stochastic(arrays["kernel0"], "kernel0")
        _check_stochastic(arrays["kernel1"], "kernel1")
        if np.any(R < 0) or np.any(R > 1):
            raise ContractViolation("R entries must lie in [0, 1]")

    @property
    def num_contexts(self) -> int:
        return self.d0.shape[0]

    @property
    def num_actions(self) -> int:
        return self.mu.shape[1]

    @property
    def num_feedbacks(self) -> int:
        return self.kernel0.shape[1]

    def kernel(self, r: int) -> np.ndarray:
        return self.kernel1 if r else self.kernel0

    def joint(self) -> np.ndarray:
        """``Pr(x, a, y)`` as an (|X|, K, |Y|) array."""
        pxa = self.d0[:, None] * self.mu
        py = (1 - self.R)[:, :, None] * self.kernel0[None] + self.R[:, :, None] * self.kernel1[None]
        return pxa[:, :, None] * py

    def with_mu(self, mu) -> "TabularEnv":
        return TabularEnv(self.d0, mu, self.R, self.kernel0, self.kernel1)

    def to_json(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("d0", "mu", "R", "kernel0", "kernel1")}

    @classmethod
    def from_json(cls, obj: dict) -> "TabularEnv":
        missing = [k for k in ("d0", "mu", "R", "kernel0", "kernel1") if k not in obj]
        if missing:
            raise ContractViolation(f"TabularEnv JSON missing fields {missing}")
        return cls(obj["d0"], obj["mu"], obj["R"], obj["kernel0"], obj["kernel1"])

    @classmethod
    def load(cls, path: Union[str, Path]) -> "TabularEnv":
        return cls.from_json(json.loads(Path(path).read_text()))


def tabular_simulate(env: TabularEnv, num_steps: int, seed: int) -> tuple[InteractionLog, SealedRewards]:
    """Sample a log; contexts and feedbacks are one-hot over X and Y."""
    if num_steps < 1:
        raise ContractViolation("num_steps must be >= 1")
    rng = np.random.default_rng(seed)
    x = _sample_rows(np.broadcast_to(env.d0, (num_steps, env.num_contexts)), rng)
    probs = env.mu[x]
    a = _sample_rows(probs, rng)
    r = (rng.random(num_steps) < env.R[x, a]).astype(np.int64)
    kernel = TabularKernel(env.kernel0, env.kernel1)
    y = kernel.sample_indices(a, r, rng)
    log = InteractionLog(
        _onehot(x, env.num_contexts), a, _onehot(y, env.num_feedbacks),
        probs[np.arange(num_steps), a], env.num_actions,
    )
    return log, SealedRewards(r)


def random_tabular_env(
    rng: np.random.Generator,
    num_contexts: int = 4,
    num_actions: int = 3,
    num_feedbacks: int = 4,
    uniform_mu: bool = False,
) -> TabularEnv:
    """Dirichlet-random environment with rewards in [0, 1]."""
    d0 = rng.dirichlet(np.ones(num_contexts))
    mu = (np.full((num_contexts, num_actions), 1.0 / num_actions) if uniform_mu
          else rng.dirichlet(np.ones(num_actions), size=num_contexts))
    R = rng.random((num_contexts, num_actions))
    k0 = rng.dirichlet(np.ones(num_feedbacks), size=num_actions)
    k1 = rng.dirichlet(np.ones(num_feedbacks), size=num_actions)
    return TabularEnv(d0, mu, R, k0, k1)


def separable_tabular_env(
    rng: np.random.Generator,
    num_contexts: int = 5,
    num_actions: int = 3,
    num_feedbacks: int = 5,
    max_rho: Optional[float] = None,
) -> TabularEnv:
    """Random environment whose latent reward is decodable from (y, a).

    Rewards are deterministic 0/1 with both values present for every action,
    the behavior policy is uniform, and for each action the feedbacks split into
    disjoint reward-0 and reward-1 supports. With ``max_rho`` the reward-1
    context mass of every action stays at or below it.
    """
    if num_contexts < 2 or num_feedbacks < 2:
        raise ContractViolation("need at least two contexts and two feedbacks")
    d0 = rng.dirichlet(np.full(num_contexts, 5.0))
    R = np.zeros((num_contexts, num_actions))
    k0 = np.zeros((num_actions, num_feedbacks))
    k1 = np.zeros((num_actions, num_feedbacks))
    for a in range(num_actions):
        while True:
            winners = rng.random(num_contexts) < 0.5
            mass = d0[winners].sum()
            if 0 < winners.sum() < num_contexts and (max_rho is None or mass <= max_rho):
                break
            if max_rho is not None and rng.random() < 0.5:
                winners = np.zeros(num_contexts, bool)
                winners[rng.integers(num_contexts)] = True
                if d0[winners].sum() <= max_rho:
                    break
        R[winners, a] = 1.0
        perm = rng.permutation(num_feedbacks)
        cut = rng.integers(1, num_feedbacks)
        ones, zeros = perm[:cut], perm[cut:]
        k1[a, ones] = rng.dirichlet(np.ones(ones.size))
        k0[a, zeros] = rng.dirichlet(np.ones(zeros.size))
    mu = np.full((num_contexts, num_actions), 1.0 / num_actions)
    return TabularEnv(d0, mu, R, k0 / k0.sum(1, keepdims=True), k1 / k1.sum(1, keepdims=True))
