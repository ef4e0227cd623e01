"""Exact enumeration on finite environments.

Everything here is computed by direct summation over (x, a, r, y); no sampling.
Summations use :func:`math.fsum`, so results are correctly rounded regardless of
the number of terms.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import ConditionalMeans, ContractViolation, IglError, LinearScorer, Policy, TabularPolicy
from .env import TabularEnv, random_tabular_env


class DegenerateConditioningError(IglError, ValueError):
    """A conditional expectation was requested on a zero-probability event."""

    def __init__(self, action: int, reward: int):
        super().__init__(f"Pr(a={action}, r={reward}) = 0; conditional mean undefined")
        self.action = action
        self.reward = reward


class BudgetError(IglError):
    """An enumeration would exceed its configured evaluation budget."""

    def __init__(self, required: int, budget: int):
        super().__init__(f"grid search needs {required} evaluations, budget is {budget}")
        self.required = required
        self.budget = budget


@dataclass(frozen=True)
class TabularScorer:
    """Table of values in [0, 1] indexed by (x or y, a)."""

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float, ndmin=2)
        if np.any(t < 0) or np.any(t > 1) or not np.all(np.isfinite(t)):
            raise ContractViolation("tabular scorer entries must lie in [0, 1]")
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @classmethod
    def constant(cls, value: float, num_items: int, num_actions: int) -> "TabularScorer":
        return cls(np.full((num_items, num_actions), float(value)))

    @classmethod
    def from_column(cls, column, action: int, num_actions: int, fill: float = 0.5) -> "TabularScorer":
        """Scorer whose column ``action`` is ``column`` and other columns are ``fill``."""
        column = np.asarray(column, dtype=float)
        t = np.full((column.shape[0], num_actions), fill)
        t[:, action] = column
        return cls(t)

    @classmethod
    def from_linear(cls, scorer: LinearScorer) -> "TabularScorer":
        """Evaluate a linear scorer on the one-hot encoding of every item."""
        return cls(_linear_table(scorer))

    def column(self, action: int) -> np.ndarray:
        return self.table[:, action]

    def complement(self) -> "TabularScorer":
        return TabularScorer(1.0 - self.table)


def _linear_table(scorer: LinearScorer) -> np.ndarray:
    from scipy.special import expit

    return expit(scorer.logits(np.eye(scorer.dim)))


def _fsum(a) -> float:
    return math.fsum(np.ravel(a).tolist())


def _col(s, action: int) -> np.ndarray:
    return s.column(action) if isinstance(s, TabularScorer) else np.asarray(s, dtype=float)


# ---------------------------------------------------------------------------
# Conditional means and the contrastive objective
# ---------------------------------------------------------------------------


def _reward_masses(env: TabularEnv, a_bar: int):
    pxa = env.d0 * env.mu[:, a_bar]
    d_a = _fsum(pxa)
    p1 = pxa * env.R[:, a_bar]
    p0 = pxa * (1.0 - env.R[:, a_bar])
    return pxa, d_a, p0, p1


def conditional_means(env: TabularEnv, f, psi, a_bar: int) -> ConditionalMeans:
    """Reward-conditional means of ``f`` over contexts and ``psi`` over feedbacks at ``a_bar``."""
    if not 0 <= a_bar < env.num_actions:
        raise ContractViolation(f"action {a_bar} out of range")
    f_col, psi_col = _col(f, a_bar), _col(psi, a_bar)
    pxa, d_a, p0, p1 = _reward_masses(env, a_bar)
    m0, m1 = _fsum(p0), _fsum(p1)
    if d_a <= 0:
        raise DegenerateConditioningError(a_bar, 1)
    for r, m in ((0, m0), (1, m1)):
        if m <= 0:
            raise DegenerateConditioningError(a_bar, r)
    rho = min(max(m1 / d_a, 0.0), 1.0)
    return ConditionalMeans(
        f_a0=_fsum(p0 * f_col) / m0,
        f_a1=_fsum(p1 * f_col) / m1,
        psi_a0=_fsum(env.kernel0[a_bar] * psi_col),
        psi_a1=_fsum(env.kernel1[a_bar] * psi_col),
        rho_a=rho,
        d_a=min(d_a, 1.0),
    )


def population_objective(env: TabularEnv, f, psi, a_bar: int) -> float:
    """``E[f psi] - E[f] E[psi]`` under the action-``a_bar`` slice of the data distribution.

    Computed by enumerating (x, r, y).
    """
    f_col, psi_col = _col(f, a_bar), _col(psi, a_bar)
    pxa, d_a, p0, p1 = _reward_masses(env, a_bar)
    if d_a <= 0:
        raise DegenerateConditioningError(a_bar, 1)
    # Pr(x, r, y | a) for every triple
    joint0 = np.outer(p0, env.kernel0[a_bar]) / d_a
    joint1 = np.outer(p1, env.kernel1[a_bar]) / d_a
    fpsi = np.outer(f_col, psi_col)
    e_fpsi = math.fsum((joint0 * fpsi).ravel().tolist() + (joint1 * fpsi).ravel().tolist())
    e_f = _fsum(pxa * f_col) / d_a
    py = (joint0 + joint1).sum(axis=0)
    e_psi = _fsum(py * psi_col)
    return e_fpsi - e_f * e_psi


def factorized_objective(env: TabularEnv, f, psi, a_bar: int) -> float:
    """``(1 - rho) rho (f_1 - f_0)(psi_1 - psi_0)`` from the conditional means."""
    cm = conditional_means(env, f, psi, a_bar)
    return (1 - cm.rho_a) * cm.rho_a * (cm.f_a1 - cm.f_a0) * (cm.psi_a1 - cm.psi_a0)


# ---------------------------------------------------------------------------
# The full-CI objective and its failure example
# ---------------------------------------------------------------------------


def worked_example_env(n: int = 10) -> TabularEnv:
    """Ten contexts and actions, reward ``1(x == a)``, feedback ``(a + R(x, a)) mod 10``.

    Labels 1..10 map to internal indices by ``label mod 10`` (label 10 becomes 0),
    which keeps the mod-10 feedback rule unchanged. Contexts and the behavior
    policy are uniform.
    """
    d0 = np.full(n, 1.0 / n)
    mu = np.full((n, n), 1.0 / n)
    R = np.eye(n)
    a = np.arange(n)
    kernel0 = np.eye(n)[a % n]
    kernel1 = np.eye(n)[(a + 1) % n]
    return TabularEnv(d0, mu, R, kernel0, kernel1)


def _policy_table(env: TabularEnv, pi: Policy) -> np.ndarray:
    if isinstance(pi, TabularPolicy):
        table = pi.table
    else:
        table = pi.probabilities_batch(np.eye(env.num_contexts))
    if table.shape != (env.num_contexts, env.num_actions):
        raise ContractViolation("policy does not match the environment's X x A")
    return table


def decoded_value(env: TabularEnv, pi: Policy, psi_y) -> float:
    """``E_{x ~ d0, a ~ pi}[psi(y)]`` for an action-blind decoder over Y."""
    psi_y = np.asarray(psi_y, dtype=float).reshape(-1)
    table = _policy_table(env, pi)
    # E[psi | x, a] for each (x, a)
    e0 = env.kernel0 @ psi_y
    e1 = env.kernel1 @ psi_y
    cond = (1 - env.R) * e0[None, :] + env.R * e1[None, :]
    return _fsum(env.d0[:, None] * table * cond)


def eval_old_objective(env: TabularEnv, pi: Policy, psi_y, pi_bad: Policy) -> float:
    """Exact ``V(pi, psi) - V(pi_bad, psi)`` with a decoder that sees only y."""
    return decoded_value(env, pi, psi_y) - decoded_value(env, pi_bad, psi_y)


def constant_table(action: int, num_contexts: int, num_actions: int) -> TabularPolicy:
    t = np.zeros((num_contexts, num_actions))
    t[:, action] = 1.0
    return TabularPolicy(t)


def optimal_policy_table(env: TabularEnv) -> TabularPolicy:
    """Greedy policy on R, lowest action index on ties."""
    best = np.argmax(env.R, axis=1)
    t = np.zeros_like(env.R)
    t[np.arange(env.num_contexts), best] = 1.0
    return TabularPolicy(t)


# ---------------------------------------------------------------------------
# Separability lower bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DeltaBoundCheck:
    gap: float
    cov: float
    cov_bound: float
    holds: bool


def delta_f_lower_bound_check(env: TabularEnv, f, a_bar: int) -> DeltaBoundCheck:
    """Compare ``|f_1 - f_0|`` with ``4 |Cov(f, R)|`` under the constant policy ``a_bar``.

    Requires a uniform behavior policy.
    """
    if not np.allclose(env.mu, 1.0 / env.num_actions, atol=1e-12, rtol=0):
        raise ContractViolation("the separability bound assumes a uniform behavior policy")
    f_col = _col(f, a_bar)
    cm = conditional_means(env, f, np.zeros(env.num_feedbacks), a_bar)
    R = env.R[:, a_bar]
    e_f = _fsum(env.d0 * f_col)
    e_r = _fsum(env.d0 * R)
    cov = _fsum(env.d0 * f_col * R) - e_f * e_r
    gap = abs(cm.f_a1 - cm.f_a0)
    bound = 4 * abs(cov)
    return DeltaBoundCheck(gap, cov, bound, gap >= bound - 1e-12)


# ---------------------------------------------------------------------------
# Grid search for the contrastive optimum
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridOptimum:
    f: np.ndarray
    psi: np.ndarray
    objective: float
    evaluations: int

    def as_scorers(self, a_bar: int, num_actions: int) -> tuple[TabularScorer, TabularScorer]:
        return (TabularScorer.from_column(self.f, a_bar, num_actions),
                TabularScorer.from_column(self.psi, a_bar, num_actions))


def grid_search_cost(num_contexts: int, num_feedbacks: int, grid_size: int) -> int:
    """Objective evaluations taken by :func:`grid_optimal_pair`."""
    return grid_size ** num_contexts * num_feedbacks * grid_size


def grid_optimal_pair(
    env: TabularEnv,
    a_bar: int,
    grid: Sequence[float] = (0.0, 0.25, 0.5, 0.75, 1.0),
    budget: int = 10_000_000,
) -> GridOptimum:
    """Exact maximizer of ``|population_objective|`` over ``grid^|X| x grid^|Y|``.

    For a fixed predictor the objective is linear in the decoder table,
    ``sum_y psi(y) c_y(f)``, so the best decoder is chosen coordinatewise: the
    top (or bottom) grid value wherever ``c_y`` is positive (or negative). This
    covers the full product grid with ``|grid|^|X| * |Y| * |grid|`` evaluations.
    Ties go to the lexicographically smallest (f, psi) in sorted grid order.
    """
    values = np.array(sorted(set(float(g) for g in grid)))
    if values.size == 0 or values.min() < 0 or values.max() > 1:
        raise ContractViolation("grid values must lie in [0, 1]")
    nx, ny = env.num_contexts, env.num_feedbacks
    required = grid_search_cost(nx, ny, values.size)
    if required > budget:
        raise BudgetError(required, budget)
    pxa, d_a, p0, p1 = _reward_masses(env, a_bar)
    if d_a <= 0:
        raise DegenerateConditioningError(a_bar, 1)
    px = pxa / d_a
    # M[x, y] = Pr(x, y | a) and py = Pr(y | a)
    M = (np.outer(p0, env.kernel0[a_bar]) + np.outer(p1, env.kernel1[a_bar])) / d_a
    py = M.sum(axis=0)
    lo, hi = values[0], values[-1]

    best = (-1.0, None, None)
    chunk = max(1, 200_000 // max(nx, 1))
    total = values.size ** nx
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        digits = (idx[:, None] // values.size ** np.arange(nx - 1, -1, -1)) % values.size
        F = values[digits]                          # (chunk, |X|), lexicographic order
        C = F @ M - (F @ px)[:, None] * py[None, :]  # coefficient of psi(y)
        # maximize sum_y psi_y C_y (positive branch) or minimize it (negative branch)
        pos_psi = np.where(C > 0, hi, lo)
        neg_psi = np.where(C < 0, hi, lo)
        pos = (pos_psi * C).sum(axis=1)
        neg = -(neg_psi * C).sum(axis=1)
        score = np.maximum(pos, neg)
        k = int(np.argmax(score))
        if score[k] > best[0] + 1e-15:
            psi = pos_psi[k] if pos[k] >= neg[k] else neg_psi[k]
            best = (float(score[k]), F[k].copy(), psi.copy())
    _, f_best, psi_best = best
    obj = population_objective(env, f_best, psi_best, a_bar)
    return GridOptimum(f_best, psi_best, abs(obj), required)


def brute_force_grid_optimum(env: TabularEnv, a_bar: int, grid: Iterable[float]) -> float:
    """Max ``|objective|`` by enumerating every (f, psi) grid pair; tiny envs only."""
    values = np.array(sorted(set(float(g) for g in grid)))
    nx, ny = env.num_contexts, env.num_feedbacks
    grids_f = np.array(np.meshgrid(*[values] * nx, indexing="ij")).reshape(nx, -1).T
    grids_p = np.array(np.meshgrid(*[values] * ny, indexing="ij")).reshape(ny, -1).T
    best = 0.0
    for f in grids_f:
        vals = [abs(population_objective(env, f, p, a_bar)) for p in grids_p]
        best = max(best, max(vals))
    return best


def scorer_objective(env: TabularEnv, f: LinearScorer, psi: LinearScorer, a_bar: int) -> float:
    """Population objective of a pair of linear scorers over one-hot X and Y."""
    return population_objective(env, TabularScorer(_linear_table(f)), TabularScorer(_linear_table(psi)), a_bar)


def random_scorer(rng: np.random.Generator, num_items: int, num_actions: int) -> TabularScorer:
    return TabularScorer(rng.random((num_items, num_actions)))


# ---------------------------------------------------------------------------
# Reports used by the CLI
# ---------------------------------------------------------------------------

WORKED_EXAMPLE_CLAIM = 0.9


def worked_example_report(num_psi: int = 100, seed: int = 0) -> dict:
    """Exact full-CI objective values on the ten-digit example.

    ``L(pi*, psi)`` is evaluated against the uniform policy as ``pi_bad`` for
    ``num_psi`` random decoders, and ``L(Constant(1), psi_2)`` for the indicator
    decoder of feedback label 2. The best value over constant policies and
    indicator decoders is included for reference.
    """
    env = worked_example_env()
    n = env.num_contexts
    rng = np.random.default_rng(seed)
    uniform = TabularPolicy(np.full((n, n), 1.0 / n))
    star = optimal_policy_table(env)
    star_vals = [eval_old_objective(env, star, rng.random(n), uniform) for _ in range(num_psi)]
    label = lambda k: k % n  # labels 1..10 -> indices 1..9, 0
    psi2 = np.eye(n)[label(2)]
    const1 = eval_old_objective(env, constant_table(label(1), n, n), psi2, uniform)
    grid = [[eval_old_objective(env, constant_table(a, n, n), np.eye(n)[y], uniform) for y in range(n)]
            for a in range(n)]
    return {
        "pi_star_max_abs": float(max(abs(v) for v in star_vals)),
        "pi_star_values_checked": num_psi,
        "constant1_psi2": float(const1),
        "constant1_psi2_claimed": WORKED_EXAMPLE_CLAIM,
        "best_constant_indicator": float(np.max(grid)),
        "pi_star_ok": bool(max(abs(v) for v in star_vals) <= 1e-9),
        "constant1_psi2_ok": bool(abs(const1 - WORKED_EXAMPLE_CLAIM) <= 1e-9),
    }


def oracle_identity_suite(num_instances: int = 100, seed: int = 0, tol: float = 1e-12) -> dict:
    """Check the population identities on random tabular instances.

    Returns the worst deviation for each identity and the list of failing
    instance indices.
    """
    worst = {"factorization": 0.0, "complement_psi": 0.0, "complement_both": 0.0, "delta_bound_slack": math.inf}
    failures: dict = {k: [] for k in worst}
    for i in range(num_instances):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        nx, ny, K = (int(v) for v in rng.integers([2, 2, 1], [7, 7, 5]))
        env = random_tabular_env(rng, nx, K, ny, uniform_mu=True)
        f, psi = random_scorer(rng, nx, K), random_scorer(rng, ny, K)
        a = int(rng.integers(K))
        try:
            obj = population_objective(env, f, psi, a)
            checks = {
                "factorization": abs(obj - factorized_objective(env, f, psi, a)),
                "complement_psi": abs(population_objective(env, f, psi.complement(), a) + obj),
                "complement_both": abs(population_objective(env, f.complement(), psi.complement(), a) - obj),
            }
            bound = delta_f_lower_bound_check(env, f, a)
        except DegenerateConditioningError:
            continue
        for k, v in checks.items():
            worst[k] = max(worst[k], v)
            if v > tol:
                failures[k].append(i)
        slack = bound.gap - bound.cov_bound
        worst["delta_bound_slack"] = min(worst["delta_bound_slack"], slack)
        if not bound.holds:
            failures["delta_bound_slack"].append(i)
    ok = not any(failures.values())
    return {"instances": num_instances, "seed": seed, "tolerance": tol, "worst": worst,
            "failures": failures, "ok": ok}
