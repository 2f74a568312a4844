from .base import EnvironmentContract, StateFormatError, pack_state, unpack_state
from .toy import ToyEnv, ToyEnvSpec, brute_force_optimum, random_toy_policy
from .dryer import PaperDryerEnv, DryerParams, sf_to_vm, sqp_baseline_energy, sparse_reward

__all__ = [
    "EnvironmentContract",
    "StateFormatError",
    "pack_state",
    "unpack_state",
    "ToyEnv",
    "ToyEnvSpec",
    "brute_force_optimum",
    "random_toy_policy",
    "PaperDryerEnv",
    "DryerParams",
    "sf_to_vm",
    "sqp_baseline_energy",
    "sparse_reward",
]
