"""Exhaustive grid search over scenario overrides, scored by the compare loss."""

from __future__ import annotations

import csv
import io
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import tomli
import tomli_w

from .analysis import ObservedSeries, compare
from .model import ConfigurationError, EpidemicParams
from .scenario import OVERRIDE_KEYS, Scenario
from .simulation import run

DEFAULT_GRID_CAP = 100_000

Grid = Mapping[str, Sequence[object]]


class GridTooLarge(ConfigurationError):
    def __init__(self, size: int, cap: int):
        super().__init__(f"grid has {size} points, more than the cap of {cap}")
        self.size = size
        self.cap = cap


@dataclass(frozen=True)
class SurfacePoint:
    point: Mapping[str, object]
    loss: float


@dataclass(frozen=True)
class FitResult:
    best: EpidemicParams
    best_point: Mapping[str, object]
    loss: float
    surface: tuple[SurfacePoint, ...]

    def surface_csv(self) -> str:
        keys = list(self.surface[0].point) if self.surface else []
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", *keys, "loss"])
        for k, sp in enumerate(self.surface):
            w.writerow([k, *(_fmt(sp.point[key]) for key in keys), repr(sp.loss)])
        return buf.getvalue()

    def best_toml(self) -> str:
        doc = {
            "fit": {"loss": self.loss, "point": {k: _toml_value(v) for k, v in self.best_point.items()}},
            "params": self.best.to_dict(),
        }
        return tomli_w.dumps(doc)


def _fmt(value) -> str:
    return repr(value) if isinstance(value, float) else str(value)


def _toml_value(value):
    return value if isinstance(value, (int, float, str, bool)) else str(value)


def grid_size(grid: Grid) -> int:
    return math.prod(len(v) for v in grid.values())


def check_grid(grid: Grid, cap: int = DEFAULT_GRID_CAP) -> int:
    if not grid:
        raise ConfigurationError("calibration grid is empty")
    unknown = [k for k in grid if k not in OVERRIDE_KEYS]
    if unknown:
        raise ConfigurationError(f"unknown grid key(s): {', '.join(unknown)}")
    empty = [k for k, v in grid.items() if len(v) == 0]
    if empty:
        raise ConfigurationError(f"grid key(s) with no values: {', '.join(empty)}")
    size = grid_size(grid)
    if size > cap:
        raise GridTooLarge(size, cap)
    return size


def grid_points(grid: Grid) -> list[dict[str, object]]:
    """Cartesian product in key order, last key varying fastest."""
    keys = list(grid)
    return [dict(zip(keys, combo)) for combo in itertools.product(*(grid[k] for k in keys))]


def load_grid(path) -> dict[str, list]:
    """Read a TOML file whose ``[grid]`` table maps override keys to value lists."""
    with open(path, "rb") as fh:
        try:
            doc = tomli.load(fh)
        except tomli.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from None
    grid = doc.get("grid")
    if not isinstance(grid, dict):
        raise ConfigurationError(f"{path}: missing [grid] table")
    out = {}
    for key, values in grid.items():
        if not isinstance(values, list):
            values = [values]
        out[key] = values
    return out


def evaluate(template: Scenario, point: Mapping[str, object], observed: ObservedSeries) -> float:
    return compare(run(template.with_overrides(point)), observed).loss


def _evaluate_packed(args) -> float:
    return evaluate(*args)


def calibrate(
    template: Scenario,
    grid: Grid,
    observed: ObservedSeries,
    cap: int = DEFAULT_GRID_CAP,
    jobs: int = 1,
) -> FitResult:
    """Run every grid point and return the whole loss surface and its minimizer.

    The surface is in grid order regardless of ``jobs``; among equal losses
    the earliest point wins.
    """
    check_grid(grid, cap)
    points = grid_points(grid)
    # Fail fast on bad values before spending time on the sweep.
    for p in points:
        template.with_overrides(p)

    if jobs > 1 and len(points) > 1:
        tasks = [(template, p, observed) for p in points]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            losses = list(pool.map(_evaluate_packed, tasks, chunksize=max(1, len(tasks) // (4 * jobs))))
    else:
        losses = [evaluate(template, p, observed) for p in points]

    surface = tuple(SurfacePoint(p, l) for p, l in zip(points, losses))
    best_index = 0
    for k, sp in enumerate(surface):
        if sp.loss < surface[best_index].loss:
            best_index = k
    best_point = points[best_index]
    return FitResult(
        best=template.with_overrides(best_point).params,
        best_point=best_point,
        loss=surface[best_index].loss,
        surface=surface,
    )
