"""aSLIP walking over rough terrain with backstepping-barrier vertical control."""

from .dynamics import ModelParams
from .hlip import make_gait, s2s_matrices
from .sim import ScenarioConfig, TrajectoryLog, run, step_extractor
from .terrain import TerrainProfile, parse_terrain

__all__ = [
    "ModelParams",
    "ScenarioConfig",
    "TerrainProfile",
    "TrajectoryLog",
    "make_gait",
    "parse_terrain",
    "run",
    "s2s_matrices",
    "step_extractor",
]

__version__ = "0.1.0"
