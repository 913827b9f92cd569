"""Offline model-based optimization with adaptive source critic regularization.

Optimizes a learned surrogate of an expensive oracle while a weight-clipped
Wasserstein source critic dynamically penalizes out-of-distribution candidate
designs relative to a frozen offline dataset.
"""

from gambo.nets import Mlp, mlp_init, mlp_forward, mlp_input_grad, train_surrogate
from gambo.wasserstein import CriticTrainConfig, train_critic, w1_exact, w1_dual_estimate
from gambo.ascr import AscrConfig, AscrState, adaptive_scr, lagrangian, lagrangian_grad
from gambo.gp import AcquireConfig, gp_fit, gp_posterior, qei_acquire, sobol_sample
from gambo.optimizers import RunConfig, Trajectory, run_gabo, run_gaga, run_anneal
from gambo.tasks import OfflineDataset, Task, get_task

__all__ = [
    "Mlp",
    "mlp_init",
    "mlp_forward",
    "mlp_input_grad",
    "train_surrogate",
    "CriticTrainConfig",
    "train_critic",
    "w1_exact",
    "w1_dual_estimate",
    "AscrConfig",
    "AscrState",
    "adaptive_scr",
    "lagrangian",
    "lagrangian_grad",
    "AcquireConfig",
    "gp_fit",
    "gp_posterior",
    "qei_acquire",
    "sobol_sample",
    "RunConfig",
    "Trajectory",
    "run_gabo",
    "run_gaga",
    "run_anneal",
    "OfflineDataset",
    "Task",
    "get_task",
]
