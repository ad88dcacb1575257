"""Per-cycle simulation output and its delimited-text / JSON exports."""

from __future__ import annotations

import csv
import datetime as dt
import io
import json
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .model import EpidemicParams, RegionProfile

TIMESERIES_COLUMNS = (
    "cycle",
    "region",
    "susceptible",
    "exposed",
    "infectious",
    "removed",
    "new_global",
    "new_local",
    "cumulative",
)
SERIES = ("susceptible", "exposed", "infectious", "removed", "new_global", "new_local",
          "new_seeded", "cumulative")
LOCAL_SPREAD_THRESHOLDS = (1.0, 0.5)


@dataclass(frozen=True)
class RouteEdge:
    source: str
    target: str
    first_cycle: int


@dataclass(frozen=True)
class TimeSeriesReport:
    """Everything a run produced. Array series have shape ``(cycles, regions)``.

    Row ``t`` holds the state at the end of cycle ``t``.
    """

    label: str
    profiles: tuple[RegionProfile, ...]
    params: EpidemicParams
    seeding_mode: str
    susceptible: np.ndarray
    exposed: np.ndarray
    infectious: np.ndarray
    removed: np.ndarray
    new_global: np.ndarray
    new_local: np.ndarray
    new_seeded: np.ndarray
    cumulative: np.ndarray
    first_exposure_cycle: tuple[Optional[int], ...]
    first_exposure_source: tuple[Optional[str], ...]
    seed_regions: tuple[str, ...] = ()
    groups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    calendar_origin: Optional[dt.date] = None
    cycle_length_days: float = 2.0

    @property
    def region_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.profiles)

    @property
    def cycles(self) -> int:
        return self.susceptible.shape[0]

    @property
    def population(self) -> np.ndarray:
        return np.array([p.population for p in self.profiles])

    def members(self, name: str) -> tuple[str, ...]:
        """Region ids behind a region id or a group id."""
        if name in self.region_ids:
            return (name,)
        if name in self.groups:
            return tuple(self.groups[name])
        raise KeyError(f"unknown region or group {name!r}")

    def series(self, variable: str, name: str) -> np.ndarray:
        if variable not in SERIES:
            raise KeyError(f"unknown series {variable!r}")
        data = getattr(self, variable)
        cols = [self.region_ids.index(m) for m in self.members(name)]
        return data[:, cols].sum(axis=1)

    def final_cumulative(self, name: str) -> float:
        return float(self.series("cumulative", name)[-1])

    def cycle_date(self, cycle: int) -> Optional[dt.date]:
        if self.calendar_origin is None:
            return None
        return self.calendar_origin + dt.timedelta(days=cycle * self.cycle_length_days)

    def local_cases(self) -> np.ndarray:
        return self.new_local.sum(axis=0)

    def local_spread_counts(self) -> dict[str, int]:
        local = self.local_cases()
        return {f">={t:g}": int(np.count_nonzero(local >= t)) for t in LOCAL_SPREAD_THRESHOLDS}

    # -- exports ---------------------------------------------------------

    def timeseries_csv(self, window: Optional[tuple[int, int]] = None) -> str:
        lo, hi = window if window is not None else (0, self.cycles - 1)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TIMESERIES_COLUMNS)
        ids = self.region_ids
        for t in range(max(lo, 0), min(hi, self.cycles - 1) + 1):
            for i, rid in enumerate(ids):
                w.writerow([
                    t, rid,
                    repr(float(self.susceptible[t, i])),
                    repr(float(self.exposed[t, i])),
                    repr(float(self.infectious[t, i])),
                    repr(float(self.removed[t, i])),
                    repr(float(self.new_global[t, i])),
                    repr(float(self.new_local[t, i])),
                    repr(float(self.cumulative[t, i])),
                ])
        return buf.getvalue()

    def routes_csv(self, edges: Sequence[RouteEdge]) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["source", "target", "first_cycle"])
        for e in edges:
            w.writerow([e.source, e.target, e.first_cycle])
        return buf.getvalue()

    def summary(self) -> dict:
        """Machine-readable run summary; the basis of ``compare`` on saved runs."""
        ids = self.region_ids
        final = {rid: float(self.cumulative[-1, i]) for i, rid in enumerate(ids)}
        for g, members in self.groups.items():
            final[g] = self.final_cumulative(g)
        peaks = {}
        for name in list(ids) + list(self.groups):
            series = self.series("infectious", name)
            peaks[name] = int(np.argmax(series)) if series.max() > 0 else None
        return {
            "label": self.label,
            "cycles": self.cycles,
            "regions": list(ids),
            "groups": {k: list(v) for k, v in self.groups.items()},
            "params": self.params.to_dict(),
            "local_mixing_mode": self.params.local_mixing_mode.value,
            "seeding_mode": self.seeding_mode,
            "calendar": {
                "origin": self.calendar_origin.isoformat() if self.calendar_origin else None,
                "cycle_length_days": self.cycle_length_days,
                "note": "dates are derived from the cycle index for labelling only",
            },
            "final_cumulative": final,
            "peak_cycle": peaks,
            "local_cases": {rid: float(v) for rid, v in zip(ids, self.local_cases())},
            "local_spread_counts": self.local_spread_counts(),
            "first_exposure": {
                rid: {"cycle": c, "source": s}
                for rid, c, s in zip(ids, self.first_exposure_cycle, self.first_exposure_source)
            },
        }

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"
