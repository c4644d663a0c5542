"""Unpaired image dehazing with a discretized Schrodinger bridge, on a small numpy autodiff core."""
from .bridge import BridgeSchedule, bridge_posterior, markov_step, sub_bridge_posterior
from .config import ExperimentConfig
from .errors import (ConfigError, ContractError, ConvergenceError, DimensionError, DomainError,
                     SBError)
from .tensor import Tensor, grad_check
from .trainer import TrainConfig, TrainState, infer, train_step

__version__ = "0.1.0"

__all__ = [
    "BridgeSchedule", "ConfigError", "ContractError", "ConvergenceError", "DimensionError",
    "DomainError", "ExperimentConfig", "SBError", "Tensor", "TrainConfig", "TrainState",
    "bridge_posterior", "grad_check", "infer", "markov_step", "sub_bridge_posterior", "train_step",
]
