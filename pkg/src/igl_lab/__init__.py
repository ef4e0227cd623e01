"""Action-inclusive interaction-grounded learning: learners, simulators, exact oracles and a harness."""
from .ai_igl import AiIglConfig, AiIglResult, ContrastiveConfig, ContrastivePair, DecoderSet, \
    break_symmetry, decode_dataset, empirical_contrastive_objective, estimate_rho_hat, \
    fit_contrastive_pair, run_ai_igl
from .baselines import FullCiConfig, FullCiResult, run_cb_skyline, run_full_ci_igl
from .cb_oracle import CbConfig, evaluate_policy, train_cb_policy
from .core import (
    ArgmaxPolicy, ConditionalMeans, ConstantPolicy, ContractViolation, DecodedInteraction, DecodedLog,
    DegeneracyWarning, DivergenceError, IglError, IngestionError, InsufficientDataError, InteractionLog,
    LinearScorer, LoggedInteraction, Policy, SymmetryConfig, SymmetryWarning, TabularPolicy, UniformPolicy,
    policy_probabilities,
)
from .data import SupervisedDataset, check_balanced, load_csv, make_gaussian_clusters, standardize, train_eval_split
from .env import (
    DigitExemplar, DigitOneHot, IglEnvironment, PairVector, RewardExemplar, RewardOneHot, SealedRewards,
    TabularEnv, TabularKernel, encode_feedback, simulate_log, tabular_simulate,
)
from .harness import ExperimentConfig, ExperimentReport, emit_report, run_experiment
from .metafeatures import MetaFeatureRecord, compute_meta_features

__version__ = "0.1.0"

__all__ = [
    "AiIglConfig",
    "AiIglResult",
    "ContrastiveConfig",
    "ContrastivePair",
    "DecoderSet",
    "break_symmetry",
    "decode_dataset",
    "empirical_contrastive_objective",
    "estimate_rho_hat",
    "fit_contrastive_pair",
    "run_ai_igl",
    "FullCiConfig",
    "FullCiResult",
    "run_cb_skyline",
    "run_full_ci_igl",
    "CbConfig",
    "evaluate_policy",
    "train_cb_policy",
    "ArgmaxPolicy",
    "ConditionalMeans",
    "ConstantPolicy",
    "ContractViolation",
    "DecodedInteraction",
    "DecodedLog",
    "DegeneracyWarning",
    "DivergenceError",
    "IglError",
    "IngestionError",
    "InsufficientDataError",
    "InteractionLog",
    "LinearScorer",
    "LoggedInteraction",
    "Policy",
    "SymmetryConfig",
    "SymmetryWarning",
    "TabularPolicy",
    "UniformPolicy",
    "policy_probabilities",
    "SupervisedDataset",
    "check_balanced",
    "load_csv",
    "make_gaussian_clusters",
    "standardize",
    "train_eval_split",
    "DigitExemplar",
    "DigitOneHot",
    "IglEnvironment",
    "PairVector",
    "RewardExemplar",
    "RewardOneHot",
    "SealedRewards",
    "TabularEnv",
    "TabularKernel",
    "encode_feedback",
    "simulate_log",
    "tabular_simulate",
    "ExperimentConfig",
    "ExperimentReport",
    "emit_report",
    "run_experiment",
    "MetaFeatureRecord",
    "compute_meta_features",
]
