"""Fully spiking actor-critic reinforcement learning for a kinematic reach-and-grasp arm."""

from .config import ExperimentConfig
from .energy import EnergyConfig, EnergyReport, OpCosts, energy_report
from .env import ArmEnv, EnvConfig
from .policy import NetworkSpec, PolicyParams
from .ppo import ActorCritic, PPOConfig
from .reward import STAGE_ONE, STAGE_TWO, CurriculumSchedule, RewardScales, RewardWeightSet
from .snn import LIFParams, NLIFParams, SurrogateSpec, unroll_backward, unroll_forward
from .train import train

__version__ = "0.1.0"

__all__ = [
    "ActorCritic",
    "ArmEnv",
    "CurriculumSchedule",
    "EnergyConfig",
    "EnergyReport",
    "EnvConfig",
    "ExperimentConfig",
    "LIFParams",
    "NLIFParams",
    "NetworkSpec",
    "OpCosts",
    "PPOConfig",
    "PolicyParams",
    "RewardScales",
    "RewardWeightSet",
    "STAGE_ONE",
    "STAGE_TWO",
    "SurrogateSpec",
    "energy_report",
    "train",
    "unroll_backward",
    "unroll_forward",
]
