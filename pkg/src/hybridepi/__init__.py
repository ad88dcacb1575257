"""Hybrid metapopulation epidemic simulator with SIR/SEIR baselines."""

__version__ = "0.1.0"

from .model import (  # noqa: E402
    ConfigurationError,
    EpidemicParams,
    MixingMode,
    RegionProfile,
    RegionState,
    WorldState,
)
from .scenario import Scenario, SeedingMode, load_scenario, validate  # noqa: E402
from .simulation import run  # noqa: E402

__all__ = [
    "ConfigurationError",
    "EpidemicParams",
    "MixingMode",
    "RegionProfile",
    "RegionState",
    "Scenario",
    "SeedingMode",
    "WorldState",
    "__version__",
    "load_scenario",
    "run",
    "validate",
]
