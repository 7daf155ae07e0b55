"""C-Uniform trajectory sampling with a learned action policy, and MPPI
controllers that use it (CU-MPPI, CU-LogMPPI)."""

__version__ = "0.1.0"

from .dynamics import State, VehicleParams, rollout, rollout_batch, step, wrap_angle
from .levelset import LevelSetStack, Resolution, build_level_sets, nearest_cells
from .policy import ActionSet, PolicyNetwork, TrainConfig, train
from .control import Controller, MppiConfig, cu_mppi_step, mppi_update, mppi_weights, run_episode
from .world import World, WorldConfig, generate_cluttered_world, trajectory_cost

__all__ = [
    "State", "VehicleParams", "rollout", "rollout_batch", "step", "wrap_angle",
    "LevelSetStack", "Resolution", "build_level_sets", "nearest_cells",
    "ActionSet", "PolicyNetwork", "TrainConfig", "train",
    "Controller", "MppiConfig", "cu_mppi_step", "mppi_update", "mppi_weights", "run_episode",
    "World", "WorldConfig", "generate_cluttered_world", "trajectory_cost",
]
