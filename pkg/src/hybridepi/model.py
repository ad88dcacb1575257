"""Domain types shared by the simulator, the scenario loader and the analyses."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields, replace
from typing import Optional, Sequence

import numpy as np


class ConfigurationError(ValueError):
    """Raised when inputs are structurally invalid (bad table, bad scenario, bad grid)."""


class MixingMode(str, enum.Enum):
    MASS_ACTION = "MassAction"
    FREQUENCY_DEPENDENT = "FrequencyDependent"


# Population that the frequency-dependent local term is normalised to.
REFERENCE_POPULATION = 1.0e6

DENSITY_TOLERANCE = 0.05


@dataclass(frozen=True)
class RegionProfile:
    id: str
    name: str
    population: float
    area: float
    density: float

    def violations(self) -> list[str]:
        out = []
        for attr in ("population", "area", "density"):
            value = getattr(self, attr)
            if not (math.isfinite(value) and value > 0):
                out.append(f"region {self.id!r}: {attr} must be positive, got {value!r}")
        if not out:
            implied = self.population / self.area
            if abs(implied - self.density) > DENSITY_TOLERANCE * implied:
                out.append(
                    f"region {self.id!r}: density {self.density!r} differs from "
                    f"population/area {implied:.3f} by more than 5%"
                )
        return out


PARAM_KEYS = (
    "p_global",
    "d_global",
    "d_local",
    "c1",
    "c2",
    "incubation_period",
    "infectious_period",
    "run_cycles",
    "local_mixing_mode",
)


@dataclass(frozen=True)
class EpidemicParams:
    """Coefficient set of the hybrid model.

    ``p_global``/``d_global`` give the travel-driven coefficient schedule,
    ``c1``/``c2``/``d_local`` the density-driven local one. Periods and the
    run length are in cycles.
    """

    p_global: float = 2.0e-7
    d_global: float = 5.0e-9
    d_local: float = 2.5e-7
    c1: float = 7.23e-9
    c2: float = 7.69e-6
    incubation_period: int = 10
    infectious_period: int = 10
    run_cycles: int = 100
    local_mixing_mode: MixingMode = MixingMode.MASS_ACTION

    def violations(self) -> list[str]:
        out = []
        for attr in ("p_global", "d_global", "d_local", "c1", "c2"):
            value = getattr(self, attr)
            if not (math.isfinite(value) and value >= 0):
                out.append(f"params: {attr} must be finite and >= 0, got {value!r}")
        for attr in ("incubation_period", "infectious_period", "run_cycles"):
            value = getattr(self, attr)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                out.append(f"params: {attr} must be an integer >= 1, got {value!r}")
        if not isinstance(self.local_mixing_mode, MixingMode):
            out.append(f"params: unknown local_mixing_mode {self.local_mixing_mode!r}")
        return out

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["local_mixing_mode"] = self.local_mixing_mode.value
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "EpidemicParams":
        unknown = set(data) - set(PARAM_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown parameter key(s): {', '.join(sorted(unknown))}")
        kwargs = dict(data)
        if "local_mixing_mode" in kwargs:
            kwargs["local_mixing_mode"] = parse_mixing_mode(kwargs["local_mixing_mode"])
        for key in ("p_global", "d_global", "d_local", "c1", "c2"):
            if key in kwargs:
                kwargs[key] = float(kwargs[key])
        return cls(**kwargs)


def parse_mixing_mode(value) -> MixingMode:
    if isinstance(value, MixingMode):
        return value
    try:
        return MixingMode(value)
    except ValueError:
        raise ConfigurationError(
            f"local_mixing_mode must be one of {[m.value for m in MixingMode]}, got {value!r}"
        ) from None


@dataclass(frozen=True)
class RegionState:
    """Snapshot of one region's compartments.

    Cohort index 0 is the youngest (most recently exposed / infected).
    """

    susceptible: float
    exposed_cohorts: np.ndarray
    infectious_cohorts: np.ndarray
    removed: float
    cumulative_exposed: float = 0.0
    first_exposure_cycle: Optional[int] = None
    first_exposure_source: Optional[str] = None

    @property
    def exposed(self) -> float:
        return float(np.sum(self.exposed_cohorts))

    @property
    def infectious(self) -> float:
        return float(np.sum(self.infectious_cohorts))

    @property
    def total(self) -> float:
        return self.susceptible + self.exposed + self.infectious + self.removed

    @classmethod
    def fresh(cls, population: float, incubation_period: int, infectious_period: int) -> "RegionState":
        return cls(
            susceptible=float(population),
            exposed_cohorts=np.zeros(incubation_period),
            infectious_cohorts=np.zeros(infectious_period),
            removed=0.0,
        )


@dataclass(frozen=True)
class WorldState:
    """All regions' compartments as arrays, rows ordered like ``region_ids``."""

    region_ids: tuple[str, ...]
    susceptible: np.ndarray
    exposed_cohorts: np.ndarray  # (regions, incubation_period)
    infectious_cohorts: np.ndarray  # (regions, infectious_period)
    removed: np.ndarray
    cumulative_exposed: np.ndarray
    first_exposure_cycle: tuple[Optional[int], ...] = field(default=())
    first_exposure_source: tuple[Optional[str], ...] = field(default=())

    def __post_init__(self):
        n = len(self.region_ids)
        if not self.first_exposure_cycle:
            object.__setattr__(self, "first_exposure_cycle", (None,) * n)
        if not self.first_exposure_source:
            object.__setattr__(self, "first_exposure_source", (None,) * n)

    @classmethod
    def initial(cls, profiles: Sequence[RegionProfile], params: EpidemicParams) -> "WorldState":
        n = len(profiles)
        return cls(
            region_ids=tuple(p.id for p in profiles),
            susceptible=np.array([float(p.population) for p in profiles]),
            exposed_cohorts=np.zeros((n, params.incubation_period)),
            infectious_cohorts=np.zeros((n, params.infectious_period)),
            removed=np.zeros(n),
            cumulative_exposed=np.zeros(n),
        )

    @property
    def exposed(self) -> np.ndarray:
        return self.exposed_cohorts.sum(axis=1)

    @property
    def infectious(self) -> np.ndarray:
        return self.infectious_cohorts.sum(axis=1)

    def index(self, region_id: str) -> int:
        return self.region_ids.index(region_id)

    def region(self, region_id: str) -> RegionState:
        i = self.index(region_id)
        return RegionState(
            susceptible=float(self.susceptible[i]),
            exposed_cohorts=self.exposed_cohorts[i].copy(),
            infectious_cohorts=self.infectious_cohorts[i].copy(),
            removed=float(self.removed[i]),
            cumulative_exposed=float(self.cumulative_exposed[i]),
            first_exposure_cycle=self.first_exposure_cycle[i],
            first_exposure_source=self.first_exposure_source[i],
        )

    def with_changes(self, **changes) -> "WorldState":
        return replace(self, **changes)


@dataclass(frozen=True)
class ExposureLedgerEntry:
    cycle: int
    region: str
    new_global: float
    new_local: float
    dominant_source: Optional[str]
    new_seeded: float = 0.0
