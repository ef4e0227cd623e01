"""Action-inclusive interaction-grounded learning.

Per action, a context predictor ``f`` and a feedback decoder ``psi`` are fit by
maximizing their covariance inside that action's bucket of the log. The
maximizers separate the two latent reward values, but only up to the swap
``psi <-> 1 - psi``; a baseline policy with known reward direction picks the
orientation. The oriented decoders relabel the log as a contextual-bandit
dataset, which the CB oracle turns into a policy.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._optim import Adam, batches
from .cb_oracle import CbConfig, train_cb_policy
from .core import (
    ArgmaxPolicy,
    ConditionalMeans,
    ContractViolation,
    DecodedLog,
    DegeneracyWarning,
    DivergenceError,
    InsufficientDataError,
    InteractionLog,
    LinearScorer,
    Policy,
    SymmetryConfig,
    SymmetryWarning,
    sigmoid,
)

logger = logging.getLogger(__name__)

DEGENERATE_OBJECTIVE = 1e-3


@dataclass(frozen=True)
class ContrastiveConfig:
    learning_rate: float = 0.05
    epochs: int = 10
    batch_size: int = 64
    seed: int = 0
    restarts: int = 4
    init_std: float = 0.01
    min_steps: int = 300
    shuffle: str = "once"

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1 or self.restarts < 1:
            raise ContractViolation("contrastive config values must be positive")


@dataclass(frozen=True)
class AiIglConfig:
    contrastive: ContrastiveConfig = ContrastiveConfig()
    cb: CbConfig = CbConfig()
    workers: int = 1


@dataclass(frozen=True)
class ContrastivePair:
    f: LinearScorer
    psi: LinearScorer
    action: int
    achieved_objective: float
    degenerate: bool = False

    def __post_init__(self):
        if self.f.input_kind != "context" or self.psi.input_kind != "feedback":
            raise ContractViolation("f must score contexts and psi must score feedbacks")


@dataclass(frozen=True)
class DecoderSet:
    """Oriented decoders, one row of ``scorer`` per action."""

    scorer: LinearScorer
    flipped: tuple
    rho_hat: tuple
    objectives: tuple

    @property
    def num_actions(self) -> int:
        return self.scorer.num_actions

    def to_json(self) -> dict:
        return {
            str(a): {
                "weights": self.scorer.weights[a].tolist(),
                "bias": float(self.scorer.biases[a]),
                "flipped": bool(self.flipped[a]),
                "rho_hat": float(self.rho_hat[a]),
                "objective": float(self.objectives[a]),
            }
            for a in range(self.num_actions)
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DecoderSet":
        keys = sorted(obj, key=int)
        scorer = LinearScorer(
            np.array([obj[k]["weights"] for k in keys], dtype=float),
            np.array([obj[k]["bias"] for k in keys], dtype=float),
            "feedback",
        )
        return cls(scorer, tuple(obj[k]["flipped"] for k in keys),
                   tuple(obj[k]["rho_hat"] for k in keys), tuple(obj[k]["objective"] for k in keys))


@dataclass(frozen=True)
class ActionDiagnostics:
    action: int
    bucket_size: int
    objective: float
    rho_hat: float
    flipped: bool
    baseline_visitation: float
    means: Optional[ConditionalMeans]
    warnings: tuple = ()

    def to_json(self) -> dict:
        return {
            "action": self.action,
            "bucket_size": self.bucket_size,
            "objective": self.objective,
            "rho_hat": self.rho_hat,
            "flipped": self.flipped,
            "baseline_visitation": self.baseline_visitation,
            "conditional_means": self.means.to_json() if self.means else None,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class AiIglResult:
    policy: ArgmaxPolicy
    decoders: DecoderSet
    diagnostics: tuple = field(default=())


# ---------------------------------------------------------------------------
# Contrastive objective
# ---------------------------------------------------------------------------


def _bucket(log: InteractionLog, a_bar: int) -> np.ndarray:
    idx = log.bucket(a_bar)
    if idx.shape[0] < 2:
        raise InsufficientDataError(
            f"action {a_bar} has {idx.shape[0]} logged records; at least 2 are needed", a_bar
        )
    return idx


def _covariance(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.mean((u - u.mean()) * (v - v.mean())))


def empirical_contrastive_objective(log: InteractionLog, a_bar: int, f: LinearScorer, psi: LinearScorer) -> float:
    """Covariance of ``f(x, a_bar)`` and ``psi(y, a_bar)`` over the records with action ``a_bar``."""
    idx = _bucket(log, a_bar)
    acts = np.full(idx.shape[0], a_bar)
    fv = f.score_batch(log.contexts[idx], acts)
    pv = psi.score_batch(log.feedbacks[idx], acts)
    return _covariance(fv, pv)


def _embed_row(w: np.ndarray, b: float, a_bar: int, num_actions: int, kind: str) -> LinearScorer:
    W = np.zeros((num_actions, w.shape[0]))
    B = np.zeros(num_actions)
    W[a_bar] = w
    B[a_bar] = b
    return LinearScorer(W, B, kind)


def _ascend(X: np.ndarray, Y: np.ndarray, config: ContrastiveConfig, rng: np.random.Generator):
    n, dx = X.shape
    dy = Y.shape[1]
    theta = rng.normal(scale=config.init_std, size=dx + 1 + dy + 1)
    opt = Adam(theta.size, config.learning_rate)
    steps_per_epoch = -(-n // config.batch_size)
    epochs = max(config.epochs, -(-config.min_steps // steps_per_epoch))
    for epoch, idx in batches(n, config.batch_size, epochs, rng, config.shuffle):
        if idx.shape[0] < 2:
            continue
        Xb, Yb = X[idx], Y[idx]
        wf, bf = theta[:dx], theta[dx]
        wp, bp = theta[dx + 1:dx + 1 + dy], theta[-1]
        fv = sigmoid(Xb @ wf + bf)
        pv = sigmoid(Yb @ wp + bp)
        m = idx.shape[0]
        # d cov / d f_i = (psi_i - mean psi) / m, and symmetrically for psi
        gf = (pv - pv.mean()) / m * fv * (1 - fv)
        gp = (fv - fv.mean()) / m * pv * (1 - pv)
        grad = np.concatenate([Xb.T @ gf, [gf.sum()], Yb.T @ gp, [gp.sum()]])
        if not np.all(np.isfinite(grad)):
            raise DivergenceError(f"non-finite contrastive gradient at epoch {epoch}", epoch)
        theta = theta + opt.step(grad, maximize=True)
    if not np.all(np.isfinite(theta)):
        raise DivergenceError("non-finite contrastive parameters", epochs - 1)
    return theta[:dx], theta[dx], theta[dx + 1:dx + 1 + dy], theta[-1]


def _action_rng(seed: int, a_bar: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, a_bar, stream]))


def _degeneracy_note(a_bar: int, obj: float) -> str:
    return (f"action {a_bar}: contrastive objective {obj:.2e} is near zero; "
            "the feedback carries no detectable reward signal in this bucket")


def _fit_pair(log: InteractionLog, a_bar: int, config: ContrastiveConfig) -> ContrastivePair:
    idx = _bucket(log, a_bar)
    X, Y = log.contexts[idx], log.feedbacks[idx]
    K = log.num_actions
    best = None
    for restart in range(config.restarts):
        rng = _action_rng(config.seed, a_bar, restart)
        wf, bf, wp, bp = _ascend(X, Y, config, rng)
        f = _embed_row(wf, bf, a_bar, K, "context")
        psi = _embed_row(wp, bp, a_bar, K, "feedback")
        obj = _covariance(sigmoid(X @ wf + bf), sigmoid(Y @ wp + bp))
        if best is None or abs(obj) > abs(best[2]):
            best = (f, psi, obj)
    f, psi, obj = best
    constant_feedback = bool(np.all(Y == Y[0]))
    degenerate = constant_feedback or abs(obj) < DEGENERATE_OBJECTIVE
    return ContrastivePair(f, psi, a_bar, obj, degenerate)


def fit_contrastive_pair(log: InteractionLog, a_bar: int, config: ContrastiveConfig = ContrastiveConfig()) -> ContrastivePair:
    """Maximize the bucket covariance jointly over ``f`` and ``psi`` with restarts.

    Each restart runs minibatch Adam ascent from a small random initialization;
    the restart with the largest absolute full-bucket covariance is kept.
    """
    pair = _fit_pair(log, a_bar, config)
    if pair.degenerate:
        warnings.warn(_degeneracy_note(a_bar, pair.achieved_objective), DegeneracyWarning, stacklevel=2)
    return pair


# ---------------------------------------------------------------------------
# Symmetry breaking
# ---------------------------------------------------------------------------


def estimate_rho_hat(log: InteractionLog, psi_a: LinearScorer, baseline_policy: Policy, a_bar: int) -> float:
    """Baseline-weighted mean of ``psi(y, a_bar)`` over the ``a_bar`` bucket."""
    idx = log.bucket(a_bar)
    weights = baseline_policy.probabilities_batch(log.contexts[idx])[:, a_bar] if idx.size else np.zeros(0)
    den = float(weights.sum())
    if den <= 0:
        raise InsufficientDataError(
            f"baseline policy never takes action {a_bar} on the logged contexts", a_bar
        )
    vals = psi_a.score_batch(log.feedbacks[idx], np.full(idx.shape[0], a_bar))
    return float(np.clip((weights * vals).sum() / den, 0.0, 1.0))


def break_symmetry(pair: ContrastivePair, rho_hat: float, direction: str = "rho_below_half"):
    """Orient the decoder so the baseline's estimated reward lies on its known side of 1/2."""
    if not 0 <= rho_hat <= 1:
        raise ContractViolation("rho_hat must lie in [0, 1]")
    if direction == "rho_below_half":
        flipped = rho_hat > 0.5
    elif direction == "rho_above_half":
        flipped = rho_hat < 0.5
    else:
        raise ContractViolation(f"unknown direction {direction!r}")
    return (pair.psi.complement() if flipped else pair.psi), flipped


# ---------------------------------------------------------------------------
# Decoding and end-to-end
# ---------------------------------------------------------------------------


def decode_dataset(log: InteractionLog, decoders: DecoderSet) -> DecodedLog:
    """Replace each record's feedback by its decoded reward ``psi'_a(y, a)``."""
    if decoders.num_actions < log.num_actions and len(log) and log.actions.max() >= decoders.num_actions:
        raise ContractViolation("some logged actions have no decoder")
    if len(log) == 0:
        return DecodedLog(np.zeros((0, log.contexts.shape[1])), [], [], [], log.num_actions)
    rewards = decoders.scorer.score_batch(log.feedbacks, log.actions)
    return DecodedLog(log.contexts, log.actions, rewards, log.propensities, log.num_actions)


def _plugin_means(log: InteractionLog, pair: ContrastivePair, psi_prime: LinearScorer, a_bar: int):
    # soft latent labels from the oriented decoder stand in for the unobserved reward
    idx = log.bucket(a_bar)
    acts = np.full(idx.shape[0], a_bar)
    fv = pair.f.score_batch(log.contexts[idx], acts)
    q = psi_prime.score_batch(log.feedbacks[idx], acts)
    s1, s0 = q.sum(), (1 - q).sum()
    if s1 <= 0 or s0 <= 0:
        return None
    return ConditionalMeans(
        f_a0=float((fv * (1 - q)).sum() / s0),
        f_a1=float((fv * q).sum() / s1),
        psi_a0=float((q * (1 - q)).sum() / s0),
        psi_a1=float((q * q).sum() / s1),
        rho_a=float(np.clip(q.mean(), 0, 1)),
        d_a=float(idx.shape[0] / len(log)),
    )


def _fit_action(log: InteractionLog, a_bar: int, config: AiIglConfig, symmetry: SymmetryConfig):
    # worker threads collect notes; warnings are issued by the caller
    pair = _fit_pair(log, a_bar, config.contrastive)
    notes = [_degeneracy_note(a_bar, pair.achieved_objective)] if pair.degenerate else []
    baseline = symmetry.baseline_policy_per_action[a_bar]
    rho = estimate_rho_hat(log, pair.psi, baseline, a_bar)
    psi_prime, flipped = break_symmetry(pair, rho, symmetry.direction[a_bar])
    visitation = float(baseline.probabilities_batch(log.contexts)[:, a_bar].mean())
    if abs(rho - 0.5) < symmetry.eta:
        notes.append(f"action {a_bar}: |rho_hat - 1/2| = {abs(rho - 0.5):.3f} < eta = {symmetry.eta}; "
                     "symmetry breaking is unreliable")
    if visitation < symmetry.c_m - 1e-12:
        notes.append(f"action {a_bar}: baseline visitation {visitation:.3f} < c_m = {symmetry.c_m}")
    diag = ActionDiagnostics(
        action=a_bar,
        bucket_size=int(log.bucket(a_bar).shape[0]),
        objective=pair.achieved_objective,
        rho_hat=rho,
        flipped=bool(flipped),
        baseline_visitation=visitation,
        means=_plugin_means(log, pair, psi_prime, a_bar),
        warnings=tuple(notes),
    )
    return psi_prime.weights[a_bar], psi_prime.biases[a_bar], flipped, rho, pair.achieved_objective, diag


def run_ai_igl(log: InteractionLog, config: AiIglConfig = AiIglConfig(),
               symmetry: Optional[SymmetryConfig] = None) -> AiIglResult:
    """Decode every action's rewards, relabel the log, and train the CB oracle on it."""
    K = log.num_actions
    symmetry = symmetry or SymmetryConfig.uniform(K)
    if symmetry.num_actions != K:
        raise ContractViolation("symmetry config must give one baseline per action")

    def attempt(a):
        try:
            return _fit_action(log, a, config, symmetry)
        except InsufficientDataError as exc:
            return exc

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(attempt, range(K)))
    else:
        results = [attempt(a) for a in range(K)]
    failures = [(a, r) for a, r in enumerate(results) if isinstance(r, Exception)]
    if failures:
        listing = "; ".join(f"action {a}: {exc}" for a, exc in failures)
        raise InsufficientDataError(f"AI-IGL cannot fit {len(failures)} action(s): {listing}",
                                    failures[0][0])
    W = np.stack([r[0] for r in results])
    B = np.array([r[1] for r in results])
    decoders = DecoderSet(
        LinearScorer(W, B, "feedback"),
        tuple(bool(r[2]) for r in results),
        tuple(float(r[3]) for r in results),
        tuple(float(r[4]) for r in results),
    )
    diagnostics = tuple(r[5] for r in results)
    for d in diagnostics:
        for note in d.warnings:
            category = DegeneracyWarning if "contrastive objective" in note else SymmetryWarning
            warnings.warn(note, category, stacklevel=2)
            logger.info(note)
    policy = train_cb_policy(decode_dataset(log, decoders), config.cb)
    return AiIglResult(policy, decoders, diagnostics)
