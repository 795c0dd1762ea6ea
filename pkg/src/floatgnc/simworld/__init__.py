"""Truth simulation: plant, floor, sensors and the closed-loop executive."""

from .executive import (
    LOG_COLUMNS, HeightmapConfig, SimConfig, SimContractError, SimLog, run_episode,
)
from .heightmap import Heightmap, slope_force
from .plant import DisturbanceEvent, NoiseConfig, measure, step_plant

__all__ = [
    "LOG_COLUMNS", "DisturbanceEvent", "Heightmap", "HeightmapConfig", "NoiseConfig",
    "SimConfig", "SimContractError", "SimLog", "measure", "run_episode", "slope_force",
    "step_plant",
]
