"""Spatio-temporal collaborative ranking lab.

Synthetic two-stage (entry feed and immersive feed) simulator, multi-objective
labels, logistic predictor heads, point-wise and look-ahead ranking, beam-search
slate re-ranking, weight tuning and paired-seed evaluation.
"""
from .errors import (
    CapExceededError,
    ConfigError,
    ContractError,
    DegenerateLabelsError,
    DependencyError,
    InputError,
    MissingHeadError,
    SlateLabError,
)
from .harness import ExperimentConfig, load_config, run_arms, run_experiment
from .labels import LabelSpec, TrainingSample, build_training_set, training_arrays
from .metrics import MetricReport, compare, exit_probability_table, hitrate_at_k, session_metrics, spearman_rho
from .predictor import PredictorModel, TrainConfig, auc, predict, predict_batch, train, train_arrays
from .ranker import EnsembleWeights, RankingConfig, item_value, rank_estage, rank_pointwise
from .reranker import BeamConfig, beam_search, brute_force_best, sequence_value
from .tuner import TuneSpec, tune
from .worldsim import World, WorldConfig, generate_world, simulate_days, simulate_session, true_scores

__version__ = "0.1.0"
