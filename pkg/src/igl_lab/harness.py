"""Seeded multi-trial comparisons of the CB skyline, full-CI IGL and AI-IGL.

A trial splits the dataset, standardizes it with train statistics, simulates
one logged interaction per training row under the uniform behavior policy,
trains every requested learner on that log, and scores each greedy policy on
the held-out split. Trials are independent given their derived seed, so they
may run on a thread pool; results are folded in trial order.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import json
import logging
import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Optional

import numpy as np

from .ai_igl import AiIglConfig, ContrastiveConfig, run_ai_igl
from .baselines import FullCiConfig, run_cb_skyline, run_full_ci_igl
from .cb_oracle import CbConfig, evaluate_policy
from .core import ContractViolation, IglError, SymmetryConfig
from .data import SupervisedDataset, check_balanced, load_csv, make_gaussian_clusters, standardize, train_eval_split
from .env import (
    DigitExemplar,
    DigitOneHot,
    FeedbackEncoder,
    IglEnvironment,
    PairVector,
    RewardExemplar,
    RewardOneHot,
    default_shift,
    simulate_log,
)

logger = logging.getLogger(__name__)

ALGORITHMS = ("cb", "full_ci", "ai_igl")
ENCODERS = ("pair_vector", "digit_onehot", "digit_exemplar", "reward_onehot", "reward_exemplar")
THREADS_ENV = "IGL_LAB_THREADS"


class ConfigError(IglError, ValueError):
    """Invalid experiment configuration."""


def hash64(*parts) -> int:
    """Stable 64-bit integer from the string forms of ``parts``."""
    h = hashlib.blake2b(":".join(str(p) for p in parts).encode(), digest_size=8)
    return int.from_bytes(h.digest(), "little")


def trial_seed(master: int, trial: int) -> int:
    return hash64(master, trial)


@dataclass
class ExperimentConfig:
    dataset: Optional[str] = None
    label_column: int = -1
    synthetic: dict = field(default_factory=lambda: {
        "num_classes": 5, "dim": 10, "num_samples": 20000, "separation": 4.0, "label_noise": 0.0,
    })
    encoder: str = "pair_vector"
    p_flip: float = 0.0
    algorithms: list = field(default_factory=lambda: list(ALGORITHMS))
    trials: int = 20
    seed: int = 0
    train_fraction: float = 0.9
    require_balanced: bool = False
    standardize: bool = True
    epochs: int = 10
    batch_size: int = 64
    shuffle: str = "once"
    cb_learning_rate: float = 0.1
    contrastive_learning_rate: float = 0.05
    contrastive_restarts: int = 4
    contrastive_min_steps: int = 300
    full_ci_learning_rate: float = 0.05
    full_ci_restarts: int = 4
    eta: float = 0.1
    workers: int = 1
    output_dir: Optional[str] = None
    name: str = "report"

    def validate(self) -> "ExperimentConfig":
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if not 0 < self.train_fraction < 1:
            raise ConfigError("train_fraction must lie in (0, 1)")
        if self.encoder not in ENCODERS:
            raise ConfigError(f"unknown encoder {self.encoder!r}; choose from {ENCODERS}")
        bad = [a for a in self.algorithms if a not in ALGORITHMS]
        if bad or not self.algorithms:
            raise ConfigError(f"algorithms must be a non-empty subset of {ALGORITHMS}, got {self.algorithms}")
        if self.dataset is not None and not Path(self.dataset).is_file():
            raise ConfigError(f"dataset file not found: {self.dataset}")
        if self.epochs < 1 or self.batch_size < 1 or self.workers < 1:
            raise ConfigError("epochs, batch_size and workers must be >= 1")
        if self.shuffle not in ("once", "per_epoch"):
            raise ConfigError("shuffle must be 'once' or 'per_epoch'")
        if not 0 <= self.p_flip < 0.5:
            raise ConfigError("p_flip must lie in [0, 0.5)")
        return self

    def to_json(self) -> dict:
        return copy.deepcopy(asdict(self))

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**copy.deepcopy(obj)).validate()

    @classmethod
    def load(cls, path, overrides=()) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text()) if path else {}
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.from_json(apply_overrides(obj, overrides))

    def learners(self, seed: int) -> tuple[CbConfig, FullCiConfig, AiIglConfig]:
        cb = CbConfig(self.cb_learning_rate, self.epochs, self.batch_size, hash64(seed, "cb"), self.shuffle)
        full = FullCiConfig(self.full_ci_learning_rate, self.epochs, self.batch_size, hash64(seed, "full_ci"),
                            self.full_ci_restarts, shuffle=self.shuffle)
        contrastive = ContrastiveConfig(self.contrastive_learning_rate, self.epochs, self.batch_size,
                                        hash64(seed, "contrastive"), self.contrastive_restarts,
                                        min_steps=self.contrastive_min_steps, shuffle=self.shuffle)
        return cb, full, AiIglConfig(contrastive, replace(cb, seed=hash64(seed, "ai_cb")))


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(obj: dict, overrides) -> dict:
    """Apply ``key=value`` strings; dotted keys reach into nested dicts, values parse as JSON when they can."""
    obj = copy.deepcopy(obj)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, raw = item.split("=", 1)
        path = key.strip().split(".")
        target = obj
        for part in path[:-1]:
            if part not in target:
                default = getattr(ExperimentConfig(), part, None)
                target[part] = copy.deepcopy(default) if isinstance(default, dict) else {}
            target = target[part]
            if not isinstance(target, dict):
                raise ConfigError(f"override {key!r} descends into a non-object")
        target[path[-1]] = _parse_value(raw)
    return obj


# ---------------------------------------------------------------------------
# Running
# ---------------------------------------------------------------------------


def load_dataset(config: ExperimentConfig) -> SupervisedDataset:
    if config.dataset is not None:
        return load_csv(config.dataset, label_column=config.label_column)
    params = dict(config.synthetic)
    params.setdefault("seed", config.seed)
    try:
        return make_gaussian_clusters(**params)
    except TypeError as exc:
        raise ConfigError(f"bad synthetic generator settings: {exc}") from exc


def _unit_shift(r):
    return r + 1


def digit_shift(base: int):
    """``6r - 3`` unless it is constant mod ``base`` (base divides 6), then ``r + 1``."""
    return default_shift if 6 % base else _unit_shift


def make_encoder(name: str, train: SupervisedDataset) -> FeedbackEncoder:
    if name == "pair_vector":
        return PairVector()
    if name == "reward_onehot":
        return RewardOneHot()
    if name == "digit_onehot":
        base = max(train.num_classes, 10)
        return DigitOneHot(base, digit_shift(base))
    if name == "digit_exemplar":
        return DigitExemplar(train, train.num_classes, digit_shift(train.num_classes))
    if name == "reward_exemplar":
        return RewardExemplar(train)
    raise ConfigError(f"unknown encoder {name!r}")


def _worker_count(requested: int) -> int:
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            return max(1, min(requested, int(cap)))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {cap!r}")
    return requested


def run_trial(config: ExperimentConfig, ds: SupervisedDataset, t: int) -> dict:
    seed = trial_seed(config.seed, t)
    train, held = train_eval_split(ds, config.train_fraction, hash64(seed, "split"))
    if config.standardize:
        train, scaling = standardize(train)
        held = held.with_features(scaling.apply(held.features))
    env = IglEnvironment(train, make_encoder(config.encoder, train), config.p_flip)
    log, sealed = simulate_log(env, train.n, hash64(seed, "simulate"))
    cb_cfg, full_cfg, ai_cfg = config.learners(seed)
    out = {"trial": t, "seed": seed, "accuracy": {}, "errors": {}, "diagnostics": None,
           "constant_baseline": float(np.bincount(held.labels, minlength=held.num_classes).max() / held.n)}
    for algo in config.algorithms:
        try:
            if algo == "cb":
                policy = run_cb_skyline(log, sealed, cb_cfg)
            elif algo == "full_ci":
                policy = run_full_ci_igl(log, config=full_cfg).policy
            else:
                res = run_ai_igl(log, ai_cfg, SymmetryConfig.uniform(log.num_actions, config.eta))
                policy = res.policy
                out["diagnostics"] = {
                    "rho_hat": list(res.decoders.rho_hat),
                    "flipped": list(res.decoders.flipped),
                    "objectives": list(res.decoders.objectives),
                    "warnings": [w for d in res.diagnostics for w in d.warnings],
                }
            out["accuracy"][algo] = evaluate_policy(policy, held)
        except (IglError, ArithmeticError, ValueError) as exc:
            logger.warning("trial %d: %s failed: %s", t, algo, exc)
            out["errors"][algo] = f"{type(exc).__name__}: {exc}"
    return out


@dataclass
class AlgorithmSummary:
    mean: Optional[float]
    stderr: Optional[float]
    per_trial: list
    relative: Optional[float]
    failed_trials: list

    def to_json(self) -> dict:
        return asdict(self)


@dataclass
class ExperimentReport:
    algorithms: dict
    constant_baseline: float
    diagnostics: list
    errors: list
    config: dict
    partial: bool
    warnings: list
    label_map: Optional[dict] = None
    wall_clock_seconds: float = 0.0

    def to_json(self, normalized: bool = False) -> dict:
        obj = {
            "algorithms": {k: v.to_json() for k, v in self.algorithms.items()},
            "constant_baseline": self.constant_baseline,
            "diagnostics": self.diagnostics,
            "errors": self.errors,
            "config": self.config,
            "partial": self.partial,
            "warnings": self.warnings,
            "label_map": self.label_map,
            "wall_clock_seconds": self.wall_clock_seconds,
        }
        if normalized:
            obj["wall_clock_seconds"] = 0.0
        return obj

    @classmethod
    def from_json(cls, obj: dict) -> "ExperimentReport":
        algos = {k: AlgorithmSummary(**v) for k, v in obj["algorithms"].items()}
        rest = {k: obj[k] for k in ("constant_baseline", "diagnostics", "errors", "config",
                                    "partial", "warnings", "wall_clock_seconds")}
        rest["label_map"] = obj.get("label_map")
        return cls(algos, **rest)


def _summarize(values: list) -> tuple[Optional[float], Optional[float]]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=float)
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))


def aggregate(config: ExperimentConfig, trials: list, wall: float = 0.0,
              label_map: Optional[dict] = None) -> ExperimentReport:
    trials = sorted(trials, key=lambda r: r["trial"])
    notes = []
    if config.trials == 1:
        notes.append("only one trial: standard errors are reported as 0")
    summaries = {}
    for algo in config.algorithms:
        vals = [r["accuracy"][algo] for r in trials if algo in r["accuracy"]]
        failed = [r["trial"] for r in trials if algo in r["errors"]]
        mean, se = _summarize(vals)
        summaries[algo] = AlgorithmSummary(mean, se, vals, None, failed)
    cb_mean = summaries["cb"].mean if "cb" in summaries else None
    for s in summaries.values():
        if cb_mean:
            s.relative = s.mean / cb_mean if s.mean is not None else None
    errors = [{"trial": r["trial"], "algorithm": a, "error": e} for r in trials for a, e in r["errors"].items()]
    diags = [{"trial": r["trial"], **r["diagnostics"]} for r in trials if r["diagnostics"] is not None]
    return ExperimentReport(
        algorithms=summaries,
        constant_baseline=float(np.mean([r["constant_baseline"] for r in trials])),
        diagnostics=diags,
        errors=errors,
        config=config.to_json(),
        partial=bool(errors),
        warnings=notes,
        label_map=label_map,
        wall_clock_seconds=wall,
    )


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    config.validate()
    start = time.perf_counter()
    ds = load_dataset(config)
    if config.require_balanced:
        bal = check_balanced(ds)
        if not bal.balanced:
            raise ContractViolation(f"dataset is unbalanced: largest class holds {bal.max_class_fraction:.3f}")
    workers = _worker_count(config.workers)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(lambda t: run_trial(config, ds, t), range(config.trials)))
    else:
        trials = [run_trial(config, ds, t) for t in range(config.trials)]
    report = aggregate(config, trials, time.perf_counter() - start, ds.metadata.get("label_map"))
    for note in report.warnings:
        warnings.warn(note, stacklevel=2)
    return report


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def emit_report(report: ExperimentReport, out_dir, formats=("json", "csv"), name: str = "report") -> list:
    """Write ``<name>.json`` and/or ``<name>.csv`` plus ``<name>_trials.csv``; returns the paths."""
    out = Path(out_dir)
    unknown = set(formats) - {"json", "csv"}
    if unknown:
        raise ConfigError(f"unknown report formats {sorted(unknown)}")
    written = []
    try:
        out.mkdir(parents=True, exist_ok=True)
        if "json" in formats:
            p = out / f"{name}.json"
            p.write_text(dumps_json(report.to_json()))
            written.append(p)
        if "csv" in formats:
            p = out / f"{name}.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["algorithm", "mean", "stderr", "relative"])
                for algo, s in report.algorithms.items():
                    w.writerow([algo, _cell(s.mean), _cell(s.stderr), _cell(s.relative)])
            written.append(p)
            p = out / f"{name}_trials.csv"
            with p.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["algorithm", "trial", "accuracy"])
                failed = {(e["algorithm"], e["trial"]) for e in report.errors}
                trials = range(report.config["trials"])
                for algo, s in report.algorithms.items():
                    vals = iter(s.per_trial)
                    for t in trials:
                        w.writerow([algo, t, "" if (algo, t) in failed else repr(next(vals))])
            written.append(p)
    except OSError as exc:
        raise OSError(f"cannot write report under {out}: {exc}") from exc
    return written


def _cell(v) -> str:
    return "" if v is None else repr(float(v))


def load_report(path) -> ExperimentReport:
    return ExperimentReport.from_json(json.loads(Path(path).read_text()))
