"""Scenario definition, validation and the TOML scenario file format.

A scenario file looks like::

    [meta]
    label = "sars8"

    [params]
    p_global = 2.0e-7
    ...

    [regions]
    path = "../regions_sars8.csv"

    [flows]
    path = "../flows_sars8.csv"

    [seeds]
    events = [{region = "guangdong", cycle = 0, exposed_count = 1.0}]

    [options]
    seeding_mode = "TrafficDriven"
    calendar_origin = 2002-11-16
    cycle_length_days = 2.0

    [groups]
    china = ["beijing", "tianjin", ...]

Paths are resolved relative to the scenario file. In ``ObservedOnset`` mode
``[seeds]`` may name an ``onset_table`` instead of listing events; the seeds
are then derived from onset dates.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Mapping, Optional, Sequence

import tomli
import tomli_w

from .model import (
    PARAM_KEYS,
    ConfigurationError,
    EpidemicParams,
    RegionProfile,
    parse_mixing_mode,
)
from .network import (
    IngestionError,
    TravelMatrix,
    load_matrix,
    load_regions,
    write_regions,
)

DEFAULT_CYCLE_LENGTH_DAYS = 2.0
BUNDLED = ("sars8", "sars8-aggregated", "sars30", "sars30-onset")

SECTION_KEYS = {
    "meta": {"label", "description"},
    "params": set(PARAM_KEYS),
    "regions": {"path"},
    "flows": {"path"},
    "seeds": {"events", "onset_table"},
    "options": {"seeding_mode", "calendar_origin", "cycle_length_days"},
    "groups": None,  # free-form: group id -> member list
}
SEED_KEYS = {"region", "cycle", "exposed_count"}

FLOAT_KEYS = {"p_global", "d_global", "d_local", "c1", "c2"}
INT_KEYS = {"incubation_period", "infectious_period", "run_cycles"}
OVERRIDE_KEYS = tuple(PARAM_KEYS) + ("cycle_length_days", "calendar_origin", "seed_exposed")


class SeedingMode(str, enum.Enum):
    TRAFFIC_DRIVEN = "TrafficDriven"
    OBSERVED_ONSET = "ObservedOnset"


def parse_seeding_mode(value) -> SeedingMode:
    try:
        return SeedingMode(value)
    except ValueError:
        raise ConfigurationError(
            f"seeding_mode must be one of {[m.value for m in SeedingMode]}, got {value!r}"
        ) from None


@dataclass(frozen=True)
class SeedEvent:
    region: str
    cycle: int
    exposed_count: float


@dataclass(frozen=True)
class OnsetRecord:
    region: str
    date: dt.date
    imported_cases: Optional[float] = None


@dataclass(frozen=True)
class Scenario:
    profiles: tuple[RegionProfile, ...]
    matrix: TravelMatrix
    params: EpidemicParams
    seeds: tuple[SeedEvent, ...] = ()
    seeding_mode: SeedingMode = SeedingMode.TRAFFIC_DRIVEN
    calendar_origin: Optional[dt.date] = None
    cycle_length_days: float = DEFAULT_CYCLE_LENGTH_DAYS
    label: str = ""
    groups: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    description: str = ""

    @property
    def region_ids(self) -> tuple[str, ...]:
        return tuple(p.id for p in self.profiles)

    def seed_schedule(self) -> dict[int, dict[str, float]]:
        """``{cycle: {region: exposed}}``; repeated events for one region add up."""
        out: dict[int, dict[str, float]] = {}
        for s in self.seeds:
            slot = out.setdefault(int(s.cycle), {})
            slot[s.region] = slot.get(s.region, 0.0) + float(s.exposed_count)
        return out

    def gate_cycles(self) -> Optional[dict[str, Optional[int]]]:
        """When each region starts accepting global exposure (onset mode only).

        A region opens at its first seed; members of a group open together at
        the group's first seed. Regions without any seed stay closed.
        """
        if self.seeding_mode is not SeedingMode.OBSERVED_ONSET:
            return None
        first: dict[str, int] = {}
        for s in self.seeds:
            first[s.region] = min(first.get(s.region, s.cycle), s.cycle)
        for members in self.groups.values():
            opened = [first[m] for m in members if m in first]
            if opened:
                for m in members:
                    first[m] = min(first.get(m, min(opened)), min(opened))
        return {r: first.get(r) for r in self.region_ids}

    def cycle_date(self, cycle: int) -> Optional[dt.date]:
        if self.calendar_origin is None:
            return None
        return self.calendar_origin + dt.timedelta(days=cycle * self.cycle_length_days)

    def with_overrides(self, overrides: Mapping[str, object]) -> "Scenario":
        """Apply ``--set``-style overrides; values may be strings or typed values."""
        unknown = [k for k in overrides if k not in OVERRIDE_KEYS]
        if unknown:
            raise ConfigurationError(f"unknown override key(s): {', '.join(unknown)}")
        params = self.params.to_dict()
        scenario = self
        for key, value in overrides.items():
            if key in PARAM_KEYS:
                params[key] = _coerce(key, value)
            elif key == "cycle_length_days":
                scenario = replace(scenario, cycle_length_days=_coerce_float(key, value))
            elif key == "calendar_origin":
                scenario = replace(scenario, calendar_origin=_coerce_date(key, value))
            elif key == "seed_exposed":
                amount = _coerce_float(key, value)
                seeds = tuple(replace(s, exposed_count=amount) for s in scenario.seeds)
                scenario = replace(scenario, seeds=seeds)
        return replace(scenario, params=EpidemicParams.from_dict(params))


def _coerce_float(key, value) -> float:
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{key}: expected a number, got {value!r}") from None


def _coerce_date(key, value) -> dt.date:
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigurationError(f"{key}: expected an ISO date, got {value!r}") from None


def _coerce(key, value):
    if key in FLOAT_KEYS:
        return _coerce_float(key, value)
    if key in INT_KEYS:
        try:
            number = float(value)
        except (TypeError, ValueError):
            raise ConfigurationError(f"{key}: expected an integer, got {value!r}") from None
        if not number.is_integer():
            raise ConfigurationError(f"{key}: expected an integer, got {value!r}")
        return int(number)
    if key == "local_mixing_mode":
        return parse_mixing_mode(value)
    return value


# ---------------------------------------------------------------------------
# validation


def validate(scenario: Scenario) -> list[str]:
    """Every problem found in ``scenario``; an empty list means it is usable."""
    out: list[str] = []
    ids = [p.id for p in scenario.profiles]
    id_set = set(ids)
    for rid in sorted({i for i in ids if ids.count(i) > 1}):
        out.append(f"duplicate region id {rid!r}")
    for p in scenario.profiles:
        out.extend(p.violations())
    out.extend(scenario.params.violations())

    matrix_ids = set(scenario.matrix.regions)
    for rid in ids:
        if rid not in matrix_ids:
            out.append(f"travel matrix has no row for region {rid!r}")
    for rid in scenario.matrix.regions:
        if rid not in id_set:
            out.append(f"travel matrix row {rid!r} is not a scenario region")

    run_cycles = scenario.params.run_cycles
    for s in scenario.seeds:
        if s.region not in id_set:
            out.append(f"seed references unknown region {s.region!r}")
        if not isinstance(s.cycle, int) or isinstance(s.cycle, bool) or not (
            isinstance(run_cycles, int) and 0 <= s.cycle < run_cycles
        ):
            out.append(f"seed for {s.region!r}: cycle {s.cycle!r} outside [0, {run_cycles})")
        if not (isinstance(s.exposed_count, (int, float)) and math.isfinite(s.exposed_count)
                and s.exposed_count > 0):
            out.append(f"seed for {s.region!r}: exposed_count must be positive, got {s.exposed_count!r}")

    if not isinstance(scenario.seeding_mode, SeedingMode):
        out.append(f"unknown seeding_mode {scenario.seeding_mode!r}")
    elif scenario.seeding_mode is SeedingMode.TRAFFIC_DRIVEN:
        if len(scenario.seeds) > 1:
            out.append(f"TrafficDriven mode takes exactly one seed event, got {len(scenario.seeds)}")
    else:
        regions = [s.region for s in scenario.seeds]
        if not regions:
            out.append("ObservedOnset mode needs at least one seed event")
        for rid in sorted({r for r in regions if regions.count(r) > 1}):
            out.append(f"ObservedOnset mode: region {rid!r} has more than one seed event")

    if not (math.isfinite(scenario.cycle_length_days) and scenario.cycle_length_days > 0):
        out.append(f"cycle_length_days must be positive, got {scenario.cycle_length_days!r}")
    for gid, members in scenario.groups.items():
        if gid in id_set:
            out.append(f"group id {gid!r} collides with a region id")
        for m in members:
            if m not in id_set:
                out.append(f"group {gid!r} lists unknown region {m!r}")
    return out


def require_valid(scenario: Scenario) -> Scenario:
    problems = validate(scenario)
    if problems:
        raise ScenarioInvalid(problems)
    return scenario


class ScenarioInvalid(ConfigurationError):
    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


# ---------------------------------------------------------------------------
# onset dates


def onset_dates_to_seeds(
    records: Sequence[OnsetRecord],
    calendar_origin: dt.date,
    cycle_length_days: float = DEFAULT_CYCLE_LENGTH_DAYS,
) -> list[SeedEvent]:
    """One seed per record at ``floor(days since origin / cycle length)``.

    The seed size is the record's imported-case count, or 1 when unknown.
    Output is sorted by cycle, then region id, then date and count.
    """
    if not cycle_length_days > 0:
        raise ConfigurationError(f"cycle_length_days must be positive, got {cycle_length_days!r}")
    keyed = []
    for rec in records:
        elapsed = (rec.date - calendar_origin).days
        if elapsed < 0:
            raise ConfigurationError(
                f"onset date {rec.date.isoformat()} for {rec.region!r} precedes the calendar origin "
                f"{calendar_origin.isoformat()}"
            )
        cycle = math.floor(elapsed / cycle_length_days)
        count = 1.0 if rec.imported_cases is None else float(rec.imported_cases)
        keyed.append(((cycle, rec.region, rec.date, count), SeedEvent(rec.region, cycle, count)))
    # Full sort key so the result does not depend on input order.
    keyed.sort(key=lambda item: item[0])
    return [seed for _, seed in keyed]


def load_onset_table(path) -> list[OnsetRecord]:
    """Rows ``region,date,imported_cases``; ``NA`` or blank means unknown."""
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        needed = {"region", "date", "imported_cases"}
        if reader.fieldnames is None or not needed <= set(reader.fieldnames):
            raise IngestionError(f"{path}: onset table needs columns region,date,imported_cases")
        for lineno, row in enumerate(reader, start=2):
            raw = (row["imported_cases"] or "").strip()
            try:
                imported = None if raw in ("", "NA") else float(raw)
                date = dt.date.fromisoformat(row["date"].strip())
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from None
            records.append(OnsetRecord(row["region"].strip(), date, imported))
    return records


# ---------------------------------------------------------------------------
# scenario files


def _check_keys(doc: dict) -> None:
    for section, value in doc.items():
        if section not in SECTION_KEYS:
            raise ConfigurationError(f"unknown scenario section [{section}]")
        allowed = SECTION_KEYS[section]
        if not isinstance(value, dict):
            raise ConfigurationError(f"[{section}] must be a table")
        if allowed is not None:
            unknown = sorted(set(value) - allowed)
            if unknown:
                raise ConfigurationError(f"unknown key(s) in [{section}]: {', '.join(unknown)}")
    for i, ev in enumerate(doc.get("seeds", {}).get("events", [])):
        unknown = sorted(set(ev) - SEED_KEYS)
        if unknown:
            raise ConfigurationError(f"unknown key(s) in seed event {i}: {', '.join(unknown)}")
        missing = sorted(SEED_KEYS - set(ev))
        if missing:
            raise ConfigurationError(f"seed event {i} is missing {', '.join(missing)}")


def scenario_from_dict(doc: dict, base_dir: Path) -> Scenario:
    _check_keys(doc)
    for required in ("params", "regions", "flows"):
        if required not in doc:
            raise ConfigurationError(f"scenario is missing the [{required}] section")
    meta = doc.get("meta", {})
    options = doc.get("options", {})
    seeds_doc = doc.get("seeds", {})

    profiles = load_regions(base_dir / doc["regions"]["path"])
    matrix = load_matrix(base_dir / doc["flows"]["path"], [p.id for p in profiles])
    params = EpidemicParams.from_dict(doc["params"])
    mode = parse_seeding_mode(options.get("seeding_mode", SeedingMode.TRAFFIC_DRIVEN.value))
    origin = options.get("calendar_origin")
    if origin is not None:
        origin = _coerce_date("calendar_origin", origin)
    cycle_len = _coerce_float("cycle_length_days",
                              options.get("cycle_length_days", DEFAULT_CYCLE_LENGTH_DAYS))

    seeds = [SeedEvent(str(e["region"]), e["cycle"], float(e["exposed_count"]))
             for e in seeds_doc.get("events", [])]
    if "onset_table" in seeds_doc:
        if origin is None:
            raise ConfigurationError("an onset_table needs [options] calendar_origin")
        records = load_onset_table(base_dir / seeds_doc["onset_table"])
        seeds.extend(onset_dates_to_seeds(records, origin, cycle_len))

    groups = {str(k): tuple(v) for k, v in doc.get("groups", {}).items()}
    return Scenario(
        profiles=tuple(profiles),
        matrix=matrix,
        params=params,
        seeds=tuple(seeds),
        seeding_mode=mode,
        calendar_origin=origin,
        cycle_length_days=cycle_len,
        label=str(meta.get("label", "")),
        groups=groups,
        description=str(meta.get("description", "")),
    )


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("hybridepi") / "data" / "scenarios" / f"{name}.toml"))


def resolve_scenario_path(name_or_path: str) -> Path:
    """A bundled scenario name (``sars8`` ...) or a path to a scenario file."""
    if name_or_path in BUNDLED:
        return bundled_path(name_or_path)
    return Path(name_or_path)


def load_scenario(name_or_path) -> Scenario:
    path = resolve_scenario_path(str(name_or_path))
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None
    return scenario_from_dict(doc, path.parent)


def scenario_to_dict(scenario: Scenario, regions_path: str, flows_path: str) -> dict:
    options: dict = {"seeding_mode": scenario.seeding_mode.value,
                     "cycle_length_days": float(scenario.cycle_length_days)}
    if scenario.calendar_origin is not None:
        options["calendar_origin"] = scenario.calendar_origin
    doc = {
        "meta": {"label": scenario.label},
        "params": scenario.params.to_dict(),
        "regions": {"path": regions_path},
        "flows": {"path": flows_path},
        "seeds": {"events": [
            {"region": s.region, "cycle": int(s.cycle), "exposed_count": float(s.exposed_count)}
            for s in scenario.seeds
        ]},
        "options": options,
    }
    if scenario.description:
        doc["meta"]["description"] = scenario.description
    if scenario.groups:
        doc["groups"] = {k: list(v) for k, v in scenario.groups.items()}
    return doc


def save_scenario(scenario: Scenario, path) -> None:
    """Write the scenario plus sibling ``<stem>.regions.csv`` and ``<stem>.matrix.csv``."""
    path = Path(path)
    regions_name = f"{path.stem}.regions.csv"
    flows_name = f"{path.stem}.matrix.csv"
    write_regions(scenario.profiles, path.parent / regions_name)
    scenario.matrix.to_csv(path.parent / flows_name)
    doc = scenario_to_dict(scenario, regions_name, flows_name)
    path.write_text(tomli_w.dumps(doc), encoding="utf-8")
