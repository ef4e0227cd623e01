"""Command-line entry point: ``igl-lab <subcommand>``.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure, 4 oracle-identity violation.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .ai_igl import run_ai_igl
from .baselines import run_cb_skyline, run_full_ci_igl
from .cb_oracle import evaluate_policy
from .core import ArgmaxPolicy, ContractViolation, DivergenceError, IglError, IngestionError, \
    InsufficientDataError, InteractionLog, SymmetryConfig, policy_from_json
from .data import SupervisedDataset, Standardization, load_csv, standardize, train_eval_split
from .env import IglEnvironment, SealedRewards, simulate_log
from .harness import ConfigError, ExperimentConfig, dumps_json, emit_report, hash64, load_dataset, \
    make_encoder, run_experiment, trial_seed
from .metafeatures import compute_meta_features
from .tabular_oracle import oracle_identity_suite, worked_example_report

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_ORACLE = 0, 1, 2, 3, 4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _emit(obj, out) -> None:
    text = dumps_json(obj)
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path} is not valid JSON: {exc}") from exc


def _config(args) -> ExperimentConfig:
    return ExperimentConfig.load(args.config, args.set or ())


def _write_csv(ds: SupervisedDataset, path) -> None:
    names = list(ds.column_names or [f"x{j}" for j in range(ds.dim)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names + ["label"])
        for row, label in zip(ds.features, ds.labels):
            w.writerow([repr(float(v)) for v in row] + [int(label)])


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    cfg = _config(args)
    ds = load_dataset(cfg)
    seed = trial_seed(cfg.seed, args.trial)
    train, held = train_eval_split(ds, cfg.train_fraction, hash64(seed, "split"))
    scaling = None
    if cfg.standardize:
        train, scaling = standardize(train)
    env = IglEnvironment(train, make_encoder(cfg.encoder, train), cfg.p_flip)
    log, sealed = simulate_log(env, args.steps or train.n, hash64(seed, "simulate"))
    _emit({"log": log.to_json(), "standardization": scaling.to_json() if scaling else None,
           "encoder": cfg.encoder, "trial": args.trial}, args.out)
    if args.rewards_out:
        Path(args.rewards_out).write_text(dumps_json({"rewards": sealed.unseal().tolist()}))
    if args.eval_out:
        _write_csv(held, args.eval_out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _config(args)
    obj = _read_json(args.log)
    try:
        log = InteractionLog.from_json(obj["log"])
    except KeyError as exc:
        raise IngestionError(f"{args.log} has no {exc} field") from exc
    scaling = obj.get("standardization")
    cb_cfg, full_cfg, ai_cfg = cfg.learners(trial_seed(cfg.seed, obj.get("trial", 0)))
    summary = {"algorithm": args.algorithm, "records": len(log)}
    if args.algorithm == "cb":
        if not args.rewards:
            raise ConfigError("the cb skyline needs --rewards")
        sealed = SealedRewards(np.array(_read_json(args.rewards)["rewards"]))
        policy = run_cb_skyline(log, sealed, cb_cfg)
    elif args.algorithm == "full_ci":
        res = run_full_ci_igl(log, config=full_cfg)
        policy = res.policy
        summary["objective"] = res.objective
    else:
        res = run_ai_igl(log, ai_cfg, SymmetryConfig.uniform(log.num_actions, cfg.eta))
        policy = res.policy
        summary["decoders"] = res.decoders.to_json()
        summary["diagnostics"] = [d.to_json() for d in res.diagnostics]
        if args.decoders_out:
            Path(args.decoders_out).write_text(dumps_json(res.decoders.to_json()))
    policy = ArgmaxPolicy(policy.scorer, scaling)
    Path(args.out).write_text(dumps_json(policy.to_json()))
    _emit(summary, None)
    return EXIT_OK


def cmd_evaluate(args) -> int:
    policy = policy_from_json(_read_json(args.policy))
    ds = load_csv(args.data, label_column=args.label_column)
    if isinstance(policy, ArgmaxPolicy) and policy.standardization:
        ds = ds.with_features(Standardization.from_json(policy.standardization).apply(ds.features))
    if ds.num_classes < policy.num_actions:
        ds = SupervisedDataset(ds.features, ds.labels, policy.num_actions, ds.column_names, ds.metadata)
    _emit({"accuracy": evaluate_policy(policy, ds), "rows": ds.n}, args.out)
    return EXIT_OK


def cmd_experiment(args) -> int:
    cfg = _config(args)
    report = run_experiment(cfg)
    out_dir = args.out_dir or cfg.output_dir
    if out_dir:
        formats = tuple(f.strip() for f in args.formats.split(",") if f.strip())
        for p in emit_report(report, out_dir, formats, cfg.name):
            logging.getLogger(__name__).info("wrote %s", p)
    _emit(report.to_json(normalized=True), None)
    return EXIT_NUMERIC if report.partial and args.strict else EXIT_OK


def cmd_metafeatures(args) -> int:
    ds = load_csv(args.data, label_column=args.label_column)
    _emit(compute_meta_features(ds, args.seed).to_json(), args.out)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    res = oracle_identity_suite(args.instances, args.seed)
    _emit(res, args.out)
    return EXIT_OK if res["ok"] else EXIT_ORACLE


def cmd_worked_example(args) -> int:
    res = worked_example_report(args.psi_samples, args.seed)
    _emit(res, args.out)
    print(f"L(pi*, psi) max |value| over {res['pi_star_values_checked']} random psi: "
          f"{res['pi_star_max_abs']:.3e}", file=sys.stderr)
    print(f"L(Constant(1), psi_2) = {res['constant1_psi2']:.6f} (claimed {res['constant1_psi2_claimed']})",
          file=sys.stderr)
    if not (res["pi_star_ok"] and res["constant1_psi2_ok"]):
        print("worked-example values differ from the claimed ones", file=sys.stderr)
        return EXIT_ORACLE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="igl-lab", description="Action-inclusive interaction-grounded learning experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def with_config(sp):
        sp.add_argument("--config", help="experiment config JSON")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config field")

    sp = sub.add_parser("simulate", help="simulate one trial's interaction log")
    with_config(sp)
    sp.add_argument("--trial", type=int, default=0)
    sp.add_argument("--steps", type=int, help="log length (default: train split size)")
    sp.add_argument("--out", help="log JSON path (default stdout)")
    sp.add_argument("--rewards-out", help="write the sealed true rewards here")
    sp.add_argument("--eval-out", help="write the raw held-out split as CSV")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("train", help="train a policy from a log")
    with_config(sp)
    sp.add_argument("--log", required=True)
    sp.add_argument("--algorithm", choices=("ai_igl", "full_ci", "cb"), default="ai_igl")
    sp.add_argument("--rewards", help="sealed rewards JSON (cb only)")
    sp.add_argument("--out", required=True, help="policy JSON path")
    sp.add_argument("--decoders-out", help="decoder JSON path (ai_igl only)")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="accuracy of a policy on a labeled CSV")
    sp.add_argument("--policy", required=True)
    sp.add_argument("--data", required=True)
    sp.add_argument("--label-column", type=int, default=-1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_evaluate)

    sp = sub.add_parser("experiment", help="multi-trial comparison")
    with_config(sp)
    sp.add_argument("--out-dir")
    sp.add_argument("--formats", default="json,csv")
    sp.add_argument("--strict", action="store_true", help="exit 3 when any trial failed")
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("metafeatures", help="dataset meta-features")
    sp.add_argument("--data", required=True)
    sp.add_argument("--label-column", type=int, default=-1)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_metafeatures)

    sp = sub.add_parser("oracle-check", help="population identity suite on random tabular instances")
    sp.add_argument("--instances", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_oracle_check)

    sp = sub.add_parser("worked-example", help="exact values of the ten-digit full-CI example")
    sp.add_argument("--psi-samples", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_worked_example)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DivergenceError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (IngestionError, InsufficientDataError, ContractViolation, FileNotFoundError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except IglError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
