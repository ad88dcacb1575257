"""Travel matrices, share tables and the province apportionment used for China.

Volumes are annual traveler counts. A :class:`TravelMatrix` stores, for each
unordered pair of regions, the sum of both directional flows.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import warnings
from dataclasses import dataclass
from decimal import Decimal
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .model import ConfigurationError, DENSITY_TOLERANCE, RegionProfile

OTHERS = "Others"
SHARE_TOLERANCE = 1e-6

REGIONS_HEADER = ["id", "name", "population", "area_km2", "density_per_km2"]
FLOWS_HEADER = ["origin", "destination", "travelers"]
SHARES_HEADER = ["region", "share_percent", "basis"]


class IngestionError(ConfigurationError):
    """A data table could not be turned into a valid domain object."""


class MissingDirectionWarning(UserWarning):
    """Only one direction of a region pair was supplied; the other is taken as 0."""


class Granularity(str, enum.Enum):
    AGGREGATED_CHINA = "AggregatedChina"
    SIX_PROVINCES = "SixProvinces"


def format_number(value: float) -> str:
    """Exact text for a count: integers without exponent, other floats by repr."""
    value = float(value)
    if value.is_integer():
        return str(int(value))
    text = repr(value)
    if "e" in text or "E" in text:
        text = format(Decimal(text), "f")
    return text


class TravelMatrix:
    """Symmetric nonnegative traveler volumes with a zero diagonal."""

    def __init__(self, regions: Sequence[str], volumes):
        regions = tuple(regions)
        if len(set(regions)) != len(regions):
            raise IngestionError("duplicate region id in travel matrix")
        vol = np.array(volumes, dtype=float).reshape(len(regions), len(regions))
        if not np.all(np.isfinite(vol)) or np.any(vol < 0):
            raise IngestionError("travel volumes must be finite and >= 0")
        if np.any(np.diag(vol) != 0):
            raise IngestionError("travel matrix diagonal must be zero")
        if not np.array_equal(vol, vol.T):
            raise IngestionError("travel matrix must be symmetric")
        vol.setflags(write=False)
        self.regions = regions
        self.volumes = vol
        self._index = {r: i for i, r in enumerate(regions)}

    @classmethod
    def zeros(cls, regions: Sequence[str]) -> "TravelMatrix":
        return cls(regions, np.zeros((len(regions), len(regions))))

    def __eq__(self, other):
        if not isinstance(other, TravelMatrix):
            return NotImplemented
        return self.regions == other.regions and np.array_equal(self.volumes, other.volumes)

    def __repr__(self):
        return f"TravelMatrix({len(self.regions)} regions, total={self.volumes.sum() / 2:.0f})"

    def __contains__(self, region: str) -> bool:
        return region in self._index

    def volume(self, a: str, b: str) -> float:
        return float(self.volumes[self._index[a], self._index[b]])

    def aligned(self, order: Sequence[str]) -> np.ndarray:
        """Volumes re-indexed to ``order``; raises if a region is missing."""
        missing = [r for r in order if r not in self._index]
        if missing:
            raise ConfigurationError(
                f"travel matrix has no entries for region(s): {', '.join(missing)}"
            )
        idx = [self._index[r] for r in order]
        return self.volumes[np.ix_(idx, idx)]

    def subset(self, order: Sequence[str]) -> "TravelMatrix":
        return TravelMatrix(order, self.aligned(order))

    def pairs(self):
        """Yield ``(a, b, volume)`` for the upper triangle, positive entries only."""
        n = len(self.regions)
        for i in range(n):
            for j in range(i + 1, n):
                v = self.volumes[i, j]
                if v:
                    yield self.regions[i], self.regions[j], float(v)

    def to_csv(self, path) -> None:
        Path(path).write_text(self.to_csv_text(), encoding="utf-8")

    def to_csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["region", *self.regions])
        for r, row in zip(self.regions, self.volumes):
            w.writerow([r, *(format_number(v) for v in row)])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, path) -> "TravelMatrix":
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        return cls._from_rows(rows, str(path))

    @classmethod
    def _from_rows(cls, rows, source) -> "TravelMatrix":
        if not rows:
            raise IngestionError(f"{source}: empty matrix file")
        regions = [c.strip() for c in rows[0][1:]]
        body = rows[1:]
        if [r[0].strip() for r in body] != regions:
            raise IngestionError(f"{source}: row labels must repeat the header's region ids")
        try:
            vol = [[float(c) for c in r[1:]] for r in body]
        except ValueError as exc:
            raise IngestionError(f"{source}: {exc}") from None
        return cls(regions, vol)


def symmetrize(flows: Iterable[tuple[str, str, float]], regions: Sequence[str]) -> TravelMatrix:
    """Sum directional flows into a symmetric matrix over ``regions``.

    A pair supplied in one direction only keeps that value and emits a
    :class:`MissingDirectionWarning`.
    """
    index = {r: i for i, r in enumerate(regions)}
    seen: dict[tuple[str, str], float] = {}
    for origin, destination, count in flows:
        for r in (origin, destination):
            if r not in index:
                raise IngestionError(f"unknown region {r!r} in flow {origin}->{destination}")
        if origin == destination:
            raise IngestionError(f"self-flow {origin}->{destination} is not allowed")
        count = float(count)
        if not math.isfinite(count) or count < 0:
            raise IngestionError(f"flow {origin}->{destination} has invalid count {count!r}")
        if (origin, destination) in seen:
            raise IngestionError(f"duplicate flow {origin}->{destination}")
        seen[(origin, destination)] = count

    n = len(regions)
    vol = np.zeros((n, n))
    for (o, d), count in seen.items():
        if (d, o) not in seen:
            warnings.warn(
                f"no flow recorded for {d}->{o}; treating it as 0",
                MissingDirectionWarning,
                stacklevel=2,
            )
        i, j = index[o], index[d]
        vol[i, j] += count
        vol[j, i] += count
    return TravelMatrix(regions, vol)


# ---------------------------------------------------------------------------
# delimited-text readers


def _read_table(path, header: list[str]) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != header:
            raise IngestionError(f"{path}: expected header {','.join(header)}, got {reader.fieldnames}")
        return [{k.strip(): (v or "").strip() for k, v in row.items()} for row in reader]


def load_regions(path) -> list[RegionProfile]:
    profiles = []
    for lineno, row in enumerate(_read_table(path, REGIONS_HEADER), start=2):
        try:
            p = RegionProfile(
                id=row["id"],
                name=row["name"],
                population=float(row["population"]),
                area=float(row["area_km2"]),
                density=float(row["density_per_km2"]),
            )
        except ValueError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from None
        profiles.append(p)
    ids = [p.id for p in profiles]
    dupes = sorted({i for i in ids if ids.count(i) > 1})
    if dupes:
        raise IngestionError(f"{path}: duplicate region id(s): {', '.join(dupes)}")
    return profiles


def write_regions(profiles: Sequence[RegionProfile], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REGIONS_HEADER)
        for p in profiles:
            w.writerow([p.id, p.name, format_number(p.population), format_number(p.area),
                        format_number(p.density)])


def read_flows(path) -> list[tuple[str, str, float]]:
    out = []
    for lineno, row in enumerate(_read_table(path, FLOWS_HEADER), start=2):
        try:
            out.append((row["origin"], row["destination"], float(row["travelers"])))
        except ValueError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from None
    return out


def load_matrix(path, regions: Sequence[str]) -> TravelMatrix:
    """Load either a directional flows file or a matrix export, aligned to ``regions``."""
    with open(path, newline="", encoding="utf-8") as fh:
        first = fh.readline().strip()
    if first.replace(" ", "") == ",".join(FLOWS_HEADER):
        return symmetrize(read_flows(path), regions)
    return TravelMatrix.from_csv(path)


def write_flows(matrix: TravelMatrix, path) -> None:
    """Write the upper triangle as one row per pair (already-summed volumes)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FLOWS_HEADER)
        for a, b, v in matrix.pairs():
            w.writerow([a, b, format_number(v)])


# ---------------------------------------------------------------------------
# shares and apportionment


@dataclass(frozen=True)
class ShareTable:
    """Fractions of a national total attributed to listed regions.

    Whatever the listed shares leave over is the implicit ``Others`` remainder.
    """

    entries: Mapping[str, float]
    basis: str = ""

    def violations(self) -> list[str]:
        out = []
        for region, share in self.entries.items():
            if not (math.isfinite(share) and 0.0 <= share <= 1.0):
                out.append(f"share for {region!r} must lie in [0, 1], got {share!r}")
        total = math.fsum(self.entries.values())
        if total > 1.0 + SHARE_TOLERANCE:
            out.append(f"listed shares sum to {total!r}, leaving a negative remainder")
        return out

    @property
    def remainder(self) -> float:
        return max(0.0, 1.0 - math.fsum(self.entries.values()))

    @classmethod
    def from_csv(cls, path) -> "ShareTable":
        entries: dict[str, float] = {}
        bases = []
        for lineno, row in enumerate(_read_table(path, SHARES_HEADER), start=2):
            region = row["region"]
            if region in entries:
                raise IngestionError(f"{path}:{lineno}: duplicate share row for {region!r}")
            try:
                entries[region] = float(row["share_percent"]) / 100.0
            except ValueError as exc:
                raise IngestionError(f"{path}:{lineno}: {exc}") from None
            if row["basis"] and row["basis"] not in bases:
                bases.append(row["basis"])
        table = cls(entries, "; ".join(bases))
        problems = table.violations()
        if problems:
            raise IngestionError(f"{path}: " + "; ".join(problems))
        return table

    @classmethod
    def from_counts(cls, counts: Mapping[str, float], total: float, basis: str = "") -> "ShareTable":
        # Exact ratios, so scaling every count by a common factor gives the same shares.
        denom = Fraction(total)
        return cls({k: float(Fraction(v) / denom) for k, v in counts.items()}, basis)


def apportion_by_share(total: int, shares: ShareTable) -> dict[str, int]:
    """Split an integer total by share, keeping the sum exact.

    Each listed region gets ``share * total`` rounded by the largest-remainder
    method; the unlisted remainder is returned under :data:`OTHERS` whenever it
    is nonzero, so the values always add up to ``total``.
    """
    problems = shares.violations()
    if problems:
        raise ConfigurationError("; ".join(problems))
    total = int(total)
    if total < 0:
        raise ConfigurationError(f"total must be >= 0, got {total}")
    keys = list(shares.entries)
    fractions = [shares.entries[k] for k in keys]
    rest = shares.remainder
    if rest > 0:
        keys.append(OTHERS)
        fractions.append(rest)
    # Exact rational quotas avoid float drift on large totals.
    quotas = [Decimal(total) * Decimal(repr(f)) for f in fractions]
    scale = sum(quotas) or Decimal(1)
    if scale != 0 and total:
        quotas = [q * Decimal(total) / scale for q in quotas]
    floors = [int(q) for q in quotas]
    short = total - sum(floors)
    order = sorted(range(len(keys)), key=lambda i: (-(quotas[i] - floors[i]), i))
    for i in order[:short]:
        floors[i] += 1
    return dict(zip(keys, floors))


def land_pair_volume(share_a: float, share_b: float, national_total: float) -> float:
    """Two-way volume between two provinces given their land-traffic shares."""
    return 2.0 * share_a * share_b * national_total


def build_sars_matrix(
    bilateral: TravelMatrix,
    granularity: Granularity,
    airport_shares: Optional[ShareTable] = None,
    land_shares: Optional[ShareTable] = None,
    national_total: Optional[float] = None,
    country: str = "china",
) -> TravelMatrix:
    """Travel matrix for the China/Hong Kong/Taiwan experiment.

    ``bilateral`` holds national volumes with ``country`` as a single node.
    With :attr:`Granularity.SIX_PROVINCES` the node is replaced by the
    provinces named in ``airport_shares``: their volume to each outside region
    is apportioned by airport share, and each province pair receives
    ``2 * land_i * land_j * national_total``.
    """
    granularity = Granularity(granularity)
    if granularity is Granularity.AGGREGATED_CHINA:
        return bilateral
    if airport_shares is None or land_shares is None or national_total is None:
        raise ConfigurationError(
            "SixProvinces granularity needs airport shares, land shares and the national total"
        )
    for table in (airport_shares, land_shares):
        problems = table.violations()
        if problems:
            raise ConfigurationError("; ".join(problems))
    provinces = list(airport_shares.entries)
    missing = [p for p in provinces if p not in land_shares.entries]
    if missing:
        raise ConfigurationError(f"no land-traffic share for province(s): {', '.join(missing)}")
    if country not in bilateral:
        raise ConfigurationError(f"bilateral matrix has no {country!r} node")

    external = [r for r in bilateral.regions if r != country]
    order = provinces + external
    idx = {r: i for i, r in enumerate(order)}
    vol = np.zeros((len(order), len(order)))

    for a in provinces:
        for b in provinces:
            if idx[a] < idx[b]:
                v = round(land_pair_volume(land_shares.entries[a], land_shares.entries[b], national_total))
                vol[idx[a], idx[b]] = vol[idx[b], idx[a]] = v
    for x in external:
        split = apportion_by_share(int(bilateral.volume(country, x)), airport_shares)
        for p in provinces:
            vol[idx[p], idx[x]] = vol[idx[x], idx[p]] = split[p]
        for y in external:
            if idx[x] < idx[y]:
                vol[idx[x], idx[y]] = vol[idx[y], idx[x]] = bilateral.volume(x, y)
    return TravelMatrix(order, vol)


def aggregate_profiles(profiles: Sequence[RegionProfile], new_id: str, name: str) -> RegionProfile:
    """Merge several regions into one node (population and area summed)."""
    population = math.fsum(p.population for p in profiles)
    area = math.fsum(p.area for p in profiles)
    return RegionProfile(new_id, name, population, area, round(population / area))


def profile_problems(profiles: Sequence[RegionProfile]) -> list[str]:
    out = []
    for p in profiles:
        out.extend(p.violations())
    return out


__all__ = [
    "DENSITY_TOLERANCE",
    "Granularity",
    "IngestionError",
    "MissingDirectionWarning",
    "OTHERS",
    "ShareTable",
    "TravelMatrix",
    "aggregate_profiles",
    "apportion_by_share",
    "build_sars_matrix",
    "format_number",
    "land_pair_volume",
    "load_matrix",
    "load_regions",
    "read_flows",
    "symmetrize",
    "write_flows",
    "write_regions",
]
