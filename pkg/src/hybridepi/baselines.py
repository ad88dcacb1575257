"""Continuous-time SIR and SEIR baselines with a fixed-step RK4 integrator.

The SEIR variant uses the same rate ``lam`` for leaving the exposed and the
infectious compartments.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .model import ConfigurationError

TAU_TOLERANCE = 1e-9


class IntegrationError(ArithmeticError):
    """The integrated state became non-finite."""

    def __init__(self, time: float, state: "OdeState"):
        super().__init__(f"non-finite state at t={time!r}: {state}")
        self.time = time
        self.state = state


class OdeModel(str, Enum):
    SIR = "sir"
    SEIR = "seir"


@dataclass(frozen=True)
class OdeParams:
    beta: float
    lam: float
    population: float
    tau: Optional[float] = None

    def violations(self) -> list[str]:
        out = []
        if not (math.isfinite(self.beta) and self.beta >= 0):
            out.append(f"beta must be >= 0, got {self.beta!r}")
        if not (math.isfinite(self.lam) and self.lam > 0):
            out.append(f"lambda must be > 0, got {self.lam!r}")
        if not (math.isfinite(self.population) and self.population > 0):
            out.append(f"population must be > 0, got {self.population!r}")
        if self.tau is not None and not out:
            if not abs(self.lam * self.tau - 1.0) <= TAU_TOLERANCE:
                out.append(f"lambda * tau must equal 1, got {self.lam * self.tau!r}")
        return out

    def validate(self) -> "OdeParams":
        problems = self.violations()
        if problems:
            raise ConfigurationError("; ".join(problems))
        return self


@dataclass(frozen=True)
class OdeState:
    s: float
    i: float
    r: float
    e: float = 0.0
    time: float = 0.0

    @property
    def total(self) -> float:
        return self.s + self.e + self.i + self.r

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in (self.s, self.e, self.i, self.r))


def sir_derivatives(state: OdeState, params: OdeParams) -> tuple[float, float, float]:
    infection = params.beta * state.s * state.i
    recovery = params.lam * state.i
    return (-infection, infection - recovery, recovery)


def seir_derivatives(state: OdeState, params: OdeParams) -> tuple[float, float, float, float]:
    infection = params.beta * state.s * state.i
    onset = params.lam * state.e
    recovery = params.lam * state.i
    return (-infection, infection - onset, onset - recovery, recovery)


def basic_reproduction_number(params: OdeParams) -> float:
    if not params.lam > 0:
        raise ConfigurationError(f"lambda must be > 0, got {params.lam!r}")
    return params.population * params.beta / params.lam


def _derivative(model: OdeModel, y: tuple, params: OdeParams) -> tuple:
    # y is (s, e, i, r) for both models; SIR keeps e at zero.
    s, e, i, r = y
    if model is OdeModel.SIR:
        ds, di, dr = sir_derivatives(OdeState(s, i, r), params)
        return (ds, 0.0, di, dr)
    return seir_derivatives(OdeState(s, i, r, e), params)


def _rk4(model: OdeModel, y: tuple, params: OdeParams, h: float) -> tuple:
    k1 = _derivative(model, y, params)
    k2 = _derivative(model, tuple(a + 0.5 * h * b for a, b in zip(y, k1)), params)
    k3 = _derivative(model, tuple(a + 0.5 * h * b for a, b in zip(y, k2)), params)
    k4 = _derivative(model, tuple(a + h * b for a, b in zip(y, k3)), params)
    return tuple(
        a + h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4)
        for a, b1, b2, b3, b4 in zip(y, k1, k2, k3, k4)
    )


@dataclass(frozen=True)
class Trajectory:
    model: OdeModel
    states: tuple[OdeState, ...]

    @property
    def final(self) -> OdeState:
        return self.states[-1]

    def column(self, name: str) -> list[float]:
        return [getattr(s, name) for s in self.states]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if self.model is OdeModel.SIR:
            w.writerow(["time", "S", "I", "R"])
            for s in self.states:
                w.writerow([repr(s.time), repr(s.s), repr(s.i), repr(s.r)])
        else:
            w.writerow(["time", "S", "E", "I", "R"])
            for s in self.states:
                w.writerow([repr(s.time), repr(s.s), repr(s.e), repr(s.i), repr(s.r)])
        return buf.getvalue()


def integrate(
    initial: OdeState,
    params: OdeParams,
    dt: float,
    horizon: float,
    model: OdeModel | str = OdeModel.SIR,
) -> Trajectory:
    """Fixed-step RK4 from ``initial.time`` to ``initial.time + horizon``.

    The last step is shortened if ``horizon`` is not a multiple of ``dt``.
    Raises :class:`IntegrationError` on a non-finite state.
    """
    model = OdeModel(model)
    params.validate()
    if not (math.isfinite(dt) and dt > 0):
        raise ConfigurationError(f"dt must be > 0, got {dt!r}")
    if not (math.isfinite(horizon) and horizon >= dt):
        raise ConfigurationError(f"horizon must be >= dt, got {horizon!r}")
    if model is OdeModel.SIR and initial.e != 0:
        raise ConfigurationError("SIR initial state must have e = 0")
    if min(initial.s, initial.e, initial.i, initial.r) < 0:
        raise ConfigurationError("initial compartments must be >= 0")

    t0 = initial.time
    n_full = int(math.floor(horizon / dt + 1e-9))
    times = [t0 + k * dt for k in range(n_full + 1)]
    if horizon - n_full * dt > 1e-9 * dt:
        times.append(t0 + horizon)

    y = (initial.s, initial.e, initial.i, initial.r)
    states = [OdeState(y[0], y[2], y[3], y[1], t0)]
    for a, b in zip(times, times[1:]):
        y = _rk4(model, y, params, b - a)
        state = OdeState(y[0], y[2], y[3], y[1], b)
        if not state.is_finite():
            raise IntegrationError(b, state)
        states.append(state)
    return Trajectory(model, tuple(states))
