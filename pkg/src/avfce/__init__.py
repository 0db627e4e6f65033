"""One-step generative MIMO channel estimation with an average velocity field."""

from .baselines import LmmseModel, analytic_lmmse, apply_lmmse, fit_lmmse, ls_estimate
from .channels import ClusterConfig, Dataset, gen_clustered, gen_gaussian, make_dataset, steering_vector
from .checkpoint import Checkpoint
from .config import ExperimentConfig, profile
from .estimators import AVFEstimator, LMMSEEstimator, LSEstimator
from .flow import (
    FlowConfig,
    TrainConfig,
    compute_target,
    denoise,
    estimate_channel,
    infer,
    sample_time_pair,
    train,
)
from .metrics import nmse_db
from .network import BackboneConfig, VelocityNet

__version__ = "0.1.0"

__all__ = [
    "AVFEstimator",
    "BackboneConfig",
    "Checkpoint",
    "ClusterConfig",
    "Dataset",
    "ExperimentConfig",
    "FlowConfig",
    "LMMSEEstimator",
    "LSEstimator",
    "LmmseModel",
    "TrainConfig",
    "VelocityNet",
    "analytic_lmmse",
    "apply_lmmse",
    "compute_target",
    "denoise",
    "estimate_channel",
    "fit_lmmse",
    "gen_clustered",
    "gen_gaussian",
    "infer",
    "ls_estimate",
    "make_dataset",
    "nmse_db",
    "profile",
    "sample_time_pair",
    "steering_vector",
    "train",
]
