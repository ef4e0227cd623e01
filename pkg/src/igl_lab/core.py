"""Domain types shared by every module: interactions, scorers, policies."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence, Union

import numpy as np
from scipy.special import expit


class IglError(Exception):
    """Base class for library errors."""


class ContractViolation(IglError, ValueError):
    """An operation was called with inputs outside its contract."""


class IngestionError(IglError, ValueError):
    """A dataset file could not be turned into a valid dataset."""


class InsufficientDataError(IglError):
    """Too few records to estimate a quantity for some action."""

    def __init__(self, message: str, action: Optional[int] = None):
        super().__init__(message)
        self.action = action


class DivergenceError(IglError, ArithmeticError):
    """An optimizer produced non-finite values."""

    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch


class DegeneracyWarning(UserWarning):
    """Data carries no signal for the requested quantity."""


class SymmetryWarning(UserWarning):
    """The baseline policy cannot reliably orient a decoder."""


def sigmoid(t):
    return expit(t)


# ---------------------------------------------------------------------------
# Interactions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LoggedInteraction:
    context: np.ndarray
    action: int
    feedback: np.ndarray
    propensity: float


@dataclass(frozen=True)
class DecodedInteraction:
    context: np.ndarray
    action: int
    decoded_reward: float
    propensity: float


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class InteractionLog:
    """Array-backed sequence of :class:`LoggedInteraction` records.

    Iterating or indexing yields ``LoggedInteraction`` objects; learners use the
    column arrays directly.
    """

    contexts: np.ndarray
    actions: np.ndarray
    feedbacks: np.ndarray
    propensities: np.ndarray
    num_actions: int

    def __post_init__(self):
        contexts = np.array(self.contexts, dtype=float, ndmin=2)
        actions = np.array(self.actions, dtype=np.int64).reshape(-1)
        feedbacks = np.array(self.feedbacks, dtype=float, ndmin=2)
        props = np.array(self.propensities, dtype=float).reshape(-1)
        n = actions.shape[0]
        if n == 0:
            contexts = contexts.reshape(0, contexts.shape[-1] if contexts.size else 0)
            feedbacks = feedbacks.reshape(0, feedbacks.shape[-1] if feedbacks.size else 0)
        if not (contexts.shape[0] == feedbacks.shape[0] == props.shape[0] == n):
            raise ContractViolation("log columns have different lengths")
        if self.num_actions < 1:
            raise ContractViolation("num_actions must be >= 1")
        if n:
            if actions.min() < 0 or actions.max() >= self.num_actions:
                raise ContractViolation(f"actions must lie in [0, {self.num_actions})")
            if not (np.all(props > 0) and np.all(props <= 1)):
                raise ContractViolation("propensities must lie in (0, 1]")
            if not (np.all(np.isfinite(contexts)) and np.all(np.isfinite(feedbacks))):
                raise ContractViolation("contexts and feedbacks must be finite")
        object.__setattr__(self, "contexts", _readonly(contexts))
        object.__setattr__(self, "actions", _readonly(actions))
        object.__setattr__(self, "feedbacks", _readonly(feedbacks))
        object.__setattr__(self, "propensities", _readonly(props))

    @classmethod
    def from_records(cls, records: Sequence[LoggedInteraction], num_actions: int) -> "InteractionLog":
        if not records:
            raise ContractViolation("cannot infer dimensions from an empty record list")
        return cls(
            contexts=np.stack([np.asarray(r.context, dtype=float) for r in records]),
            actions=np.array([r.action for r in records]),
            feedbacks=np.stack([np.asarray(r.feedback, dtype=float) for r in records]),
            propensities=np.array([r.propensity for r in records]),
            num_actions=num_actions,
        )

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    def __getitem__(self, i: int) -> LoggedInteraction:
        return LoggedInteraction(
            self.contexts[i], int(self.actions[i]), self.feedbacks[i], float(self.propensities[i])
        )

    def __iter__(self) -> Iterator[LoggedInteraction]:
        return (self[i] for i in range(len(self)))

    def take(self, idx: np.ndarray) -> "InteractionLog":
        return InteractionLog(
            self.contexts[idx], self.actions[idx], self.feedbacks[idx],
            self.propensities[idx], self.num_actions,
        )

    def bucket(self, action: int) -> np.ndarray:
        return np.flatnonzero(self.actions == action)

    def to_json(self) -> dict:
        return {
            "num_actions": self.num_actions,
            "contexts": self.contexts.tolist(),
            "actions": self.actions.tolist(),
            "feedbacks": self.feedbacks.tolist(),
            "propensities": self.propensities.tolist(),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "InteractionLog":
        return cls(
            np.array(obj["contexts"], dtype=float), np.array(obj["actions"]),
            np.array(obj["feedbacks"], dtype=float), np.array(obj["propensities"], dtype=float),
            int(obj["num_actions"]),
        )


@dataclass(frozen=True)
class DecodedLog:
    """Array-backed sequence of :class:`DecodedInteraction` records (a CB dataset)."""

    contexts: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    propensities: np.ndarray
    num_actions: int

    def __post_init__(self):
        contexts = np.array(self.contexts, dtype=float, ndmin=2)
        actions = np.array(self.actions, dtype=np.int64).reshape(-1)
        rewards = np.array(self.rewards, dtype=float).reshape(-1)
        props = np.array(self.propensities, dtype=float).reshape(-1)
        n = actions.shape[0]
        if n == 0:
            contexts = contexts.reshape(0, contexts.shape[-1] if contexts.size else 0)
        if not (contexts.shape[0] == rewards.shape[0] == props.shape[0] == n):
            raise ContractViolation("decoded log columns have different lengths")
        if n:
            if actions.min() < 0 or actions.max() >= self.num_actions:
                raise ContractViolation(f"actions must lie in [0, {self.num_actions})")
            if not (np.all(rewards >= 0) and np.all(rewards <= 1)):
                raise ContractViolation("decoded rewards must lie in [0, 1]")
            if not (np.all(props > 0) and np.all(props <= 1)):
                raise ContractViolation("propensities must lie in (0, 1]")
        object.__setattr__(self, "contexts", _readonly(contexts))
        object.__setattr__(self, "actions", _readonly(actions))
        object.__setattr__(self, "rewards", _readonly(rewards))
        object.__setattr__(self, "propensities", _readonly(props))

    @classmethod
    def from_records(cls, records: Sequence[DecodedInteraction], num_actions: int) -> "DecodedLog":
        if not records:
            raise ContractViolation("cannot infer dimensions from an empty record list")
        return cls(
            np.stack([np.asarray(r.context, dtype=float) for r in records]),
            np.array([r.action for r in records]),
            np.array([r.decoded_reward for r in records]),
            np.array([r.propensity for r in records]),
            num_actions,
        )

    def __len__(self) -> int:
        return int(self.actions.shape[0])

    def __getitem__(self, i: int) -> DecodedInteraction:
        return DecodedInteraction(
            self.contexts[i], int(self.actions[i]), float(self.rewards[i]), float(self.propensities[i])
        )

    def __iter__(self) -> Iterator[DecodedInteraction]:
        return (self[i] for i in range(len(self)))


# ---------------------------------------------------------------------------
# Scorers
# ---------------------------------------------------------------------------

INPUT_KINDS = ("context", "feedback")


@dataclass(frozen=True)
class LinearScorer:
    """Per-action linear-logistic function ``sigmoid(weights[a] . z + biases[a])``."""

    weights: np.ndarray
    biases: np.ndarray
    input_kind: str = "context"

    def __post_init__(self):
        w = np.array(self.weights, dtype=float, ndmin=2)
        b = np.array(self.biases, dtype=float).reshape(-1)
        if w.shape[0] != b.shape[0]:
            raise ContractViolation("need one bias per weight vector")
        if self.input_kind not in INPUT_KINDS:
            raise ContractViolation(f"input_kind must be one of {INPUT_KINDS}")
        object.__setattr__(self, "weights", _readonly(w))
        object.__setattr__(self, "biases", _readonly(b))

    @classmethod
    def zeros(cls, num_actions: int, dim: int, input_kind: str = "context") -> "LinearScorer":
        return cls(np.zeros((num_actions, dim)), np.zeros(num_actions), input_kind)

    @property
    def num_actions(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def _check(self, z: np.ndarray) -> None:
        if z.shape[-1] != self.dim:
            raise ContractViolation(f"input dimension {z.shape[-1]} != scorer dimension {self.dim}")

    def logits(self, z) -> np.ndarray:
        """Logits for every action; ``z`` is one vector (-> shape (K,)) or a batch (-> (n, K))."""
        z = np.asarray(z, dtype=float)
        self._check(z)
        return z @ self.weights.T + self.biases

    def score(self, z, action: int) -> float:
        z = np.asarray(z, dtype=float)
        self._check(z)
        return float(sigmoid(z @ self.weights[action] + self.biases[action]))

    def score_batch(self, Z, actions) -> np.ndarray:
        """Score each row of ``Z`` at its own action."""
        Z = np.asarray(Z, dtype=float)
        self._check(Z)
        actions = np.asarray(actions, dtype=np.int64)
        t = np.einsum("ij,ij->i", Z, self.weights[actions]) + self.biases[actions]
        return sigmoid(t)

    def complement(self) -> "LinearScorer":
        """``1 - score``, realized by negation since ``1 - sigmoid(t) = sigmoid(-t)``."""
        return LinearScorer(-self.weights, -self.biases, self.input_kind)

    def to_json(self) -> dict:
        return {
            "weights": self.weights.tolist(),
            "biases": self.biases.tolist(),
            "input_kind": self.input_kind,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LinearScorer":
        return cls(np.array(obj["weights"], dtype=float), np.array(obj["biases"], dtype=float),
                   obj.get("input_kind", "context"))


# ---------------------------------------------------------------------------
# Policies
# ---------------------------------------------------------------------------

Context = Union[int, np.integer, np.ndarray, Sequence[float]]


class Policy:
    """A context -> action-distribution map over ``num_actions`` actions."""

    num_actions: int

    def probabilities(self, context: Context) -> np.ndarray:
        return self.probabilities_batch(np.asarray(context, dtype=float)[None, ...])[0]

    def probabilities_batch(self, contexts) -> np.ndarray:
        raise NotImplementedError

    def act_batch(self, contexts) -> np.ndarray:
        """Greedy action per row, lowest index on ties."""
        return np.argmax(self.probabilities_batch(contexts), axis=1)

    def to_json(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class UniformPolicy(Policy):
    num_actions: int

    def __post_init__(self):
        if self.num_actions < 1:
            raise ContractViolation("num_actions must be >= 1")

    def probabilities_batch(self, contexts) -> np.ndarray:
        n = np.asarray(contexts).shape[0]
        return np.full((n, self.num_actions), 1.0 / self.num_actions)

    def to_json(self) -> dict:
        return {"kind": "uniform", "num_actions": self.num_actions}


@dataclass(frozen=True)
class ConstantPolicy(Policy):
    action: int
    num_actions: int

    def __post_init__(self):
        if not 0 <= self.action < self.num_actions:
            raise ContractViolation(f"action {self.action} outside [0, {self.num_actions})")

    def probabilities_batch(self, contexts) -> np.ndarray:
        n = np.asarray(contexts).shape[0]
        out = np.zeros((n, self.num_actions))
        out[:, self.action] = 1.0
        return out

    def to_json(self) -> dict:
        return {"kind": "constant", "action": self.action, "num_actions": self.num_actions}


@dataclass(frozen=True)
class ArgmaxPolicy(Policy):
    """Deterministic policy choosing the highest-scoring action, lowest index on ties."""

    scorer: LinearScorer
    standardization: Optional[dict] = field(default=None, compare=False)

    @property
    def num_actions(self) -> int:
        return self.scorer.num_actions

    def probabilities_batch(self, contexts) -> np.ndarray:
        Z = np.asarray(contexts, dtype=float)
        if Z.ndim != 2:
            raise ContractViolation("contexts must be a 2-d batch")
        # sigmoid is monotone, so the argmax of logits is the argmax of scores
        best = np.argmax(self.scorer.logits(Z), axis=1)
        out = np.zeros((Z.shape[0], self.num_actions))
        out[np.arange(Z.shape[0]), best] = 1.0
        return out

    def to_json(self) -> dict:
        obj = {"kind": "argmax", **self.scorer.to_json()}
        if self.standardization is not None:
            obj["standardization"] = self.standardization
        return obj


@dataclass(frozen=True)
class TabularPolicy(Policy):
    """Row-stochastic |X| x K table; contexts are indices or one-hot vectors."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float, ndmin=2)
        if np.any(t < 0) or not np.allclose(t.sum(axis=1), 1.0, atol=1e-12, rtol=0):
            raise ContractViolation("tabular policy rows must be probability vectors")
        object.__setattr__(self, "table", _readonly(t))

    @property
    def num_actions(self) -> int:
        return self.table.shape[1]

    def _indices(self, contexts) -> np.ndarray:
        c = np.asarray(contexts)
        idx = c.argmax(axis=1) if c.ndim == 2 else c.astype(np.int64).reshape(-1)
        if idx.size and (idx.min() < 0 or idx.max() >= self.table.shape[0]):
            raise ContractViolation("tabular context index out of range")
        return idx

    def probabilities(self, context: Context) -> np.ndarray:
        c = np.asarray(context)
        idx = self._indices(c[None, :] if c.ndim == 1 else c.reshape(1))
        return self.table[idx[0]].copy()

    def probabilities_batch(self, contexts) -> np.ndarray:
        return self.table[self._indices(contexts)]

    def to_json(self) -> dict:
        return {"kind": "tabular", "table": self.table.tolist()}


def policy_probabilities(policy: Policy, context: Context) -> np.ndarray:
    """Action distribution of ``policy`` at a single context."""
    if isinstance(policy, ArgmaxPolicy):
        z = np.asarray(context, dtype=float)
        if z.ndim != 1 or z.shape[0] != policy.scorer.dim:
            raise ContractViolation(
                f"context dimension {z.shape} does not match scorer dimension {policy.scorer.dim}"
            )
    return policy.probabilities(context)


def policy_from_json(obj: dict) -> Policy:
    kind = obj.get("kind", "argmax")
    if kind == "uniform":
        return UniformPolicy(int(obj["num_actions"]))
    if kind == "constant":
        return ConstantPolicy(int(obj["action"]), int(obj["num_actions"]))
    if kind == "tabular":
        return TabularPolicy(np.array(obj["table"], dtype=float))
    if kind == "argmax":
        return ArgmaxPolicy(LinearScorer.from_json(obj), obj.get("standardization"))
    raise ContractViolation(f"unknown policy kind {kind!r}")


# ---------------------------------------------------------------------------
# Diagnostics and configuration records
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalMeans:
    """Reward-conditional means of a predictor/decoder pair for one action."""

    f_a0: float
    f_a1: float
    psi_a0: float
    psi_a1: float
    rho_a: float
    d_a: float

    def __post_init__(self):
        vals = (self.f_a0, self.f_a1, self.psi_a0, self.psi_a1, self.rho_a, self.d_a)
        if not all(np.isfinite(v) for v in vals):
            raise ContractViolation("conditional means must be finite")
        if not (0 <= self.rho_a <= 1 and 0 <= self.d_a <= 1):
            raise ContractViolation("rho_a and d_a must lie in [0, 1]")

    def to_json(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("f_a0", "f_a1", "psi_a0", "psi_a1", "rho_a", "d_a")}


DIRECTIONS = ("rho_below_half", "rho_above_half")


@dataclass(frozen=True)
class SymmetryConfig:
    """Baseline policies with known reward directionality, one per action."""

    baseline_policy_per_action: tuple
    eta: float = 0.1
    c_m: float = 0.1
    direction: tuple = ()

    def __post_init__(self):
        if not 0 < self.eta <= 0.5:
            raise ContractViolation("eta must lie in (0, 0.5]")
        if not 0 < self.c_m <= 1:
            raise ContractViolation("c_m must lie in (0, 1]")
        policies = tuple(self.baseline_policy_per_action)
        direction = tuple(self.direction) or ("rho_below_half",) * len(policies)
        if len(direction) != len(policies):
            raise ContractViolation("need one direction per baseline policy")
        bad = [d for d in direction if d not in DIRECTIONS]
        if bad:
            raise ContractViolation(f"unknown direction tags {bad}")
        object.__setattr__(self, "baseline_policy_per_action", policies)
        object.__setattr__(self, "direction", direction)

    @classmethod
    def uniform(cls, num_actions: int, eta: float = 0.1) -> "SymmetryConfig":
        """Uniform baseline for every action, the balanced-dataset default."""
        base = UniformPolicy(num_actions)
        return cls((base,) * num_actions, eta=eta, c_m=1.0 / num_actions)

    @property
    def num_actions(self) -> int:
        return len(self.baseline_policy_per_action)
