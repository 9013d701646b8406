"""Meta-learned system identification toolkit.

A shared-class network f(x; c) is trained across families of related systems;
each system is identified at use time by optimizing the low-dimensional
context input c. The package bundles the differentiable network core, the
target-copy trainer, baseline adapters, physics task generators, a gradient
MPC planner, and a CLI harness that reproduces the tabletop studies.
"""

from .config import ExperimentConfig, default_config, load_config
from .meta import (
    ContextVector,
    MetaSysIdConfig,
    Task,
    TrainedModel,
    infer_context,
    meta_train,
    predict_adapted,
)
from .mlp import MLPSpec, ParameterSet, backward, forward, init_params, silu
from .optim import AdamState, EMAConfig, adam_step, ema_update, gd_step
from .experiments import run_experiment

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ContextVector",
    "EMAConfig",
    "ExperimentConfig",
    "MLPSpec",
    "MetaSysIdConfig",
    "ParameterSet",
    "Task",
    "TrainedModel",
    "adam_step",
    "backward",
    "default_config",
    "ema_update",
    "forward",
    "gd_step",
    "infer_context",
    "init_params",
    "load_config",
    "meta_train",
    "predict_adapted",
    "run_experiment",
    "silu",
    "__version__",
]
