"""Post-processing of simulation reports: peaks, routes, density correlation,
and comparison against observed case counts."""

from __future__ import annotations

import csv
import datetime as dt
import io
import math
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Optional, Sequence, Union

import numpy as np
from scipy import stats

from .model import ConfigurationError, RegionProfile
from .network import IngestionError
from .report import RouteEdge, TimeSeriesReport

# Counts below one person are compared as one person, so an unobserved region
# (0 cases) against a near-zero simulation contributes nothing to the loss.
CASE_FLOOR = 1.0


def peak_cycle(report: TimeSeriesReport, name: str) -> Optional[int]:
    """Earliest cycle at which infectious prevalence of a region or group peaks.

    Returns ``None`` when the region (group) never has anyone infectious.
    """
    series = report.series("infectious", name)
    if not np.any(series > 0):
        return None
    return int(np.argmax(series))


def extract_routes(report: TimeSeriesReport) -> list[RouteEdge]:
    """First-infection edges ``source -> target``, ordered by cycle then target.

    Seeded regions and regions never exposed have no incoming edge, so the
    result is a forest rooted at the seeds.
    """
    edges = [
        RouteEdge(source, target, cycle)
        for target, cycle, source in zip(
            report.region_ids, report.first_exposure_cycle, report.first_exposure_source
        )
        if source is not None and cycle is not None
    ]
    edges.sort(key=lambda e: (e.first_cycle, e.target))
    return edges


def attack_rates(report: TimeSeriesReport) -> dict[str, float]:
    final = report.cumulative[-1]
    return {p.id: float(final[i] / p.population) for i, p in enumerate(report.profiles)}


class Correlation(NamedTuple):
    r: float
    p_value: float
    n: int


def density_correlation(
    profiles: Sequence[RegionProfile], rates: Union[Mapping[str, float], Sequence[float]]
) -> Optional[Correlation]:
    """Pearson correlation of density against attack rate, two-sided t-test p-value.

    ``rates`` is either aligned with ``profiles`` or keyed by region id.
    Returns ``None`` when either variable has zero variance.
    """
    if isinstance(rates, Mapping):
        y = np.array([rates[p.id] for p in profiles], dtype=float)
    else:
        y = np.asarray(rates, dtype=float)
    x = np.array([p.density for p in profiles], dtype=float)
    n = len(x)
    if n < 3 or len(y) != n:
        raise ConfigurationError("density_correlation needs at least 3 aligned regions")
    if np.ptp(x) == 0.0 or np.ptp(y) == 0.0:
        return None
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    r = max(-1.0, min(1.0, r))
    df = n - 2
    if abs(r) == 1.0:
        p = 0.0
    else:
        t = r * math.sqrt(df / (1.0 - r * r))
        p = float(2.0 * stats.t.sf(abs(t), df))
    return Correlation(r, p, n)


# ---------------------------------------------------------------------------
# observed data


@dataclass(frozen=True)
class ObservedSeries:
    """Observed cumulative cases: final totals and, optionally, dated series."""

    final: Mapping[str, float]
    series: Mapping[str, tuple[tuple[dt.date, float], ...]] = field(default_factory=dict)
    provenance: str = ""

    def violations(self) -> list[str]:
        out = []
        for region, value in self.final.items():
            if not (math.isfinite(value) and value >= 0):
                out.append(f"observed total for {region!r} must be >= 0, got {value!r}")
        for region, points in self.series.items():
            values = [v for _, v in points]
            if any(b < a for a, b in zip(values, values[1:])):
                out.append(f"observed cumulative series for {region!r} decreases")
        return out


def load_observed(path, provenance: str = "") -> ObservedSeries:
    """Read ``region,cumulative_cases`` or ``region,date,cumulative_cases``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [f.strip() for f in (reader.fieldnames or [])]
        rows = [{k.strip(): (v or "").strip() for k, v in row.items()} for row in reader]
    final: dict[str, float] = {}
    series: dict[str, list] = {}
    try:
        if header == ["region", "cumulative_cases"]:
            for row in rows:
                if row["region"] in final:
                    raise IngestionError(f"{path}: duplicate row for {row['region']!r}")
                final[row["region"]] = float(row["cumulative_cases"])
        elif header == ["region", "date", "cumulative_cases"]:
            for row in rows:
                series.setdefault(row["region"], []).append(
                    (dt.date.fromisoformat(row["date"]), float(row["cumulative_cases"]))
                )
            for region, points in series.items():
                points.sort()
                final[region] = points[-1][1]
        else:
            raise IngestionError(
                f"{path}: expected header region,cumulative_cases or region,date,cumulative_cases"
            )
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from None
    observed = ObservedSeries(final, {k: tuple(v) for k, v in series.items()},
                              provenance or str(path))
    problems = observed.violations()
    if problems:
        raise IngestionError(f"{path}: " + "; ".join(problems))
    return observed


# ---------------------------------------------------------------------------
# comparison


@dataclass(frozen=True)
class ComparisonRow:
    region: str
    simulated: float
    observed: float
    ratio: float
    absolute_error: float
    log_ratio: float


@dataclass(frozen=True)
class Comparison:
    rows: tuple[ComparisonRow, ...]
    loss: float
    only_simulated: tuple[str, ...]
    only_observed: tuple[str, ...]

    def row(self, region: str) -> ComparisonRow:
        for r in self.rows:
            if r.region == region:
                return r
        raise KeyError(region)

    def outliers(self, k: int = 4) -> list[ComparisonRow]:
        """The ``k`` rows with the largest ``|log_ratio|`` (ties by region id)."""
        ranked = sorted(self.rows, key=lambda r: (-abs(r.log_ratio), r.region))
        return ranked[:k]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["region", "simulated", "observed", "ratio", "absolute_error", "log_ratio"])
        for r in self.rows:
            w.writerow([r.region, repr(r.simulated), repr(r.observed), repr(r.ratio),
                        repr(r.absolute_error), repr(r.log_ratio)])
        for region in self.only_simulated:
            w.writerow([region, "", "NA", "", "", ""])
        for region in self.only_observed:
            w.writerow([region, "NA", "", "", "", ""])
        w.writerow(["# loss", repr(self.loss), "", "", "", ""])
        return buf.getvalue()


def simulated_totals(report: TimeSeriesReport) -> dict[str, float]:
    """Final cumulative exposures for every region and every group."""
    out = {rid: float(v) for rid, v in zip(report.region_ids, report.cumulative[-1])}
    for g in report.groups:
        out[g] = report.final_cumulative(g)
    return out


def log_ratio(simulated: float, observed: float) -> float:
    return math.log(max(simulated, CASE_FLOOR) / max(observed, CASE_FLOOR))


def compare(
    simulated: Union[TimeSeriesReport, Mapping[str, float]], observed: ObservedSeries
) -> Comparison:
    """Final simulated vs observed totals on the shared names.

    ``loss`` is the sum of squared log ratios, with counts under one person
    treated as one.
    """
    sim = simulated_totals(simulated) if isinstance(simulated, TimeSeriesReport) else dict(simulated)
    if isinstance(simulated, TimeSeriesReport):
        # Group totals stand in for their members when the observed data is by group.
        covered = {m for g in simulated.groups if g in observed.final for m in simulated.groups[g]}
        sim = {k: v for k, v in sim.items() if k in observed.final or (k not in covered and k not in simulated.groups)}
    shared = [k for k in observed.final if k in sim]
    rows = []
    for region in shared:
        s, o = float(sim[region]), float(observed.final[region])
        lr = log_ratio(s, o)
        rows.append(ComparisonRow(region, s, o, math.exp(lr), abs(s - o), lr))
    loss = math.fsum(r.log_ratio ** 2 for r in rows)
    only_sim = tuple(sorted(k for k in sim if k not in observed.final))
    only_obs = tuple(sorted(k for k in observed.final if k not in sim))
    return Comparison(tuple(rows), loss, only_sim, only_obs)
