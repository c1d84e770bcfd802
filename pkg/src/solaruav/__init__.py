"""Charging-profile design for solar-powered UAV communication fleets."""

__version__ = "0.1.0"

from .params import Altitudes, Level, PhysicsParams, RadioParams, RewardParams, SolarParams  # noqa: E402
from .scenario import Scenario, desk_scenario, load_scenario, paper_scenario, save_scenario  # noqa: E402

__all__ = [
    "Altitudes", "Level", "PhysicsParams", "RadioParams", "RewardParams", "SolarParams",
    "Scenario", "desk_scenario", "load_scenario", "paper_scenario", "save_scenario",
]
