"""Federated multi-agent DQN for energy-efficient OFDMA resource allocation.

Per-UE agents jointly pick a sub-channel and transmit power level; local
models are fused periodically by replay-size- or success-rate-weighted
averaging and compared against a no-averaging multi-agent baseline and a
centralized assignment upper bound.
"""

__version__ = "0.1.0"

from .agent import DqnAgent, ReplayMemory, TrainConfig, Transition
from .env import Action, NetworkConfig, Observation, ResourceAllocationEnv, StepOutcome
from .fed import average_by_memory, average_by_success, run_averaging_round
from .mlp import MlpSpec, gradient_check
from .oracle import (
    assign_brute_force,
    assign_hungarian,
    build_utility_matrix,
    comm_cost_crl,
    comm_cost_frl,
)
from .radio import SubChannel

__all__ = [
    "Action",
    "DqnAgent",
    "MlpSpec",
    "NetworkConfig",
    "Observation",
    "ReplayMemory",
    "ResourceAllocationEnv",
    "StepOutcome",
    "SubChannel",
    "TrainConfig",
    "Transition",
    "assign_brute_force",
    "assign_hungarian",
    "average_by_memory",
    "average_by_success",
    "build_utility_matrix",
    "comm_cost_crl",
    "comm_cost_frl",
    "gradient_check",
    "run_averaging_round",
]
