"""Adversarial training, exact optimal transport on finite distributions, and
OOD generalization bound evaluators, checked against analytic oracles."""

from .numkit import INF, InvalidInput, PerturbationBudget, RngState, norm, project_ball
from .losses import ConstantsProfile, Dataset, LogisticLoss, QuadraticSaddle, TinyNet, quadratic_saddle
from .minimax import TrainConfig, TrainTrace, robust_objective, train
from .transport import DiscreteDistribution, tv_distance, wasserstein2, wasserstein_inf
from .certify import BoundInputs, BoundReport, measure_robustness

__all__ = [
    "INF",
    "InvalidInput",
    "PerturbationBudget",
    "RngState",
    "norm",
    "project_ball",
    "ConstantsProfile",
    "Dataset",
    "LogisticLoss",
    "QuadraticSaddle",
    "TinyNet",
    "quadratic_saddle",
    "TrainConfig",
    "TrainTrace",
    "robust_objective",
    "train",
    "DiscreteDistribution",
    "tv_distance",
    "wasserstein2",
    "wasserstein_inf",
    "BoundInputs",
    "BoundReport",
    "measure_robustness",
]
