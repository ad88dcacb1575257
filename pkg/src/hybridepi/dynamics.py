"""Cycle-by-cycle update of the hybrid global/local metapopulation model.

Each cycle every region receives two kinds of new exposures computed from the
start-of-cycle state:

* global: ``sum_j I_j * T_ij * pg(t)`` over the other regions, where ``T_ij``
  is the two-way annual traveler volume and ``pg(t) = max(0, P_G - D_G t)``;
* local: ``S_i * I_i * pl_i(t)`` with ``pl_i(t) = max(0, rho_i C1 + C2 - D_L t)``.

Exposed and infectious persons move through fixed-length cohort queues, so an
exposure made during cycle ``t0`` is infectious for cycles
``[t0 + incubation, t0 + incubation + infectious)`` and removed afterwards.
"""

from __future__ import annotations

from dataclasses import replace
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .model import (
    REFERENCE_POPULATION,
    EpidemicParams,
    ExposureLedgerEntry,
    MixingMode,
    RegionProfile,
    RegionState,
    WorldState,
)
from .network import TravelMatrix


def global_coefficient(params: EpidemicParams, t: int) -> float:
    return max(0.0, params.p_global - params.d_global * t)


def local_coefficient(params: EpidemicParams, region: RegionProfile, t: int) -> float:
    base = region.density * params.c1 + params.c2
    return max(0.0, base - params.d_local * t)


def _local_coefficients(params: EpidemicParams, density: np.ndarray, t: int) -> np.ndarray:
    return np.maximum(0.0, density * params.c1 + params.c2 - params.d_local * t)


def _lexicographic_order(region_ids: Sequence[str]) -> np.ndarray:
    return np.array(sorted(range(len(region_ids)), key=lambda i: region_ids[i]), dtype=int)


def _global_terms(world: WorldState, volumes: np.ndarray, lex: np.ndarray) -> np.ndarray:
    """``terms[i, j] = I_j * T_ij``, columns in lexicographic region order."""
    infectious = world.infectious_cohorts.sum(axis=1)
    return (volumes * infectious[None, :])[:, lex]


def global_exposures(
    world: WorldState, matrix: TravelMatrix, params: EpidemicParams, t: int
) -> np.ndarray:
    """Uncapped new global exposures per region, ordered like ``world.region_ids``."""
    volumes = matrix.aligned(world.region_ids)
    lex = _lexicographic_order(world.region_ids)
    # Summing in a fixed (lexicographic) source order makes the result
    # independent of how the caller ordered the regions.
    return _global_terms(world, volumes, lex).sum(axis=1) * global_coefficient(params, t)


def local_exposures(
    state: RegionState, profile: RegionProfile, params: EpidemicParams, t: int
) -> float:
    """Uncapped new local exposures for a single region."""
    coeff = local_coefficient(params, profile, t)
    s = state.susceptible
    if params.local_mixing_mode is MixingMode.FREQUENCY_DEPENDENT:
        s = s / profile.population * REFERENCE_POPULATION
    return s * state.infectious * coeff


def _local_vector(world: WorldState, population, density, params, t) -> np.ndarray:
    coeff = _local_coefficients(params, density, t)
    s = world.susceptible
    if params.local_mixing_mode is MixingMode.FREQUENCY_DEPENDENT:
        s = s / population * REFERENCE_POPULATION
    return s * world.infectious_cohorts.sum(axis=1) * coeff


State = Union[RegionState, WorldState]


def advance_cohorts(state: State, new_exposed=0.0) -> State:
    """Age every cohort by one cycle and admit ``new_exposed`` as the youngest.

    The oldest exposed cohort becomes the youngest infectious one and the
    oldest infectious cohort joins ``removed``. ``new_exposed`` must already
    have been debited from ``susceptible`` by the caller. Works on a single
    :class:`RegionState` or on a whole :class:`WorldState`.
    """
    exposed = np.asarray(state.exposed_cohorts, dtype=float)
    infectious = np.asarray(state.infectious_cohorts, dtype=float)
    new = np.asarray(new_exposed, dtype=float)

    maturing = exposed[..., -1]
    recovering = infectious[..., -1]
    next_exposed = np.concatenate(
        [np.broadcast_to(new, exposed.shape[:-1])[..., None], exposed[..., :-1]], axis=-1
    )
    next_infectious = np.concatenate([maturing[..., None], infectious[..., :-1]], axis=-1)
    removed = state.removed + recovering
    cumulative = state.cumulative_exposed + new
    if isinstance(state, RegionState):
        removed = float(removed)
        cumulative = float(cumulative)
    return replace(
        state,
        exposed_cohorts=next_exposed,
        infectious_cohorts=next_infectious,
        removed=removed,
        cumulative_exposed=cumulative,
    )


class _Prepared:
    """Per-run constants aligned to the world's region order."""

    def __init__(self, world: WorldState, matrix: TravelMatrix, profiles: Sequence[RegionProfile]):
        by_id = {p.id: p for p in profiles}
        ordered = [by_id[r] for r in world.region_ids]
        self.volumes = matrix.aligned(world.region_ids)
        self.population = np.array([p.population for p in ordered], dtype=float)
        self.density = np.array([p.density for p in ordered], dtype=float)
        self.lex = _lexicographic_order(world.region_ids)


def step(
    world: WorldState,
    matrix: TravelMatrix,
    profiles: Sequence[RegionProfile],
    params: EpidemicParams,
    t: int,
    seeds: Optional[Mapping[str, float]] = None,
    gates: Optional[Mapping[str, Optional[int]]] = None,
    _prepared: Optional[_Prepared] = None,
) -> tuple[WorldState, list[ExposureLedgerEntry]]:
    """Advance the whole world by one cycle.

    ``seeds`` maps region id to persons exposed directly this cycle (capped by
    what is left susceptible). ``gates`` maps region id to the first cycle at
    which global exposure into that region is allowed, or ``None`` for never;
    regions absent from ``gates`` are always open.
    """
    prep = _prepared or _Prepared(world, matrix, profiles)
    ids = world.region_ids
    s0 = world.susceptible

    terms = _global_terms(world, prep.volumes, prep.lex)
    eg = terms.sum(axis=1) * global_coefficient(params, t)
    if gates is not None:
        open_ = np.array([r not in gates or (gates[r] is not None and t >= gates[r]) for r in ids])
        eg = np.where(open_, eg, 0.0)
    el = _local_vector(world, prep.population, prep.density, params, t)

    demand = eg + el
    capped = demand > s0
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(capped, s0 / demand, 1.0)
    eg = eg * scale
    el = el * scale
    infected = np.where(capped, s0, demand)

    seeded = np.zeros(len(ids))
    if seeds:
        for r, amount in seeds.items():
            i = ids.index(r)
            seeded[i] = min(float(amount), s0[i] - infected[i])
    new = infected + seeded
    susceptible = np.where(new >= s0, 0.0, s0 - new)

    best = np.argmax(terms, axis=1)
    best_value = terms[np.arange(len(ids)), best]
    dominant = [ids[prep.lex[b]] if v > 0 and g > 0 else None for b, v, g in zip(best, best_value, eg)]

    first_cycle = list(world.first_exposure_cycle)
    first_source = list(world.first_exposure_source)
    for i in range(len(ids)):
        if first_cycle[i] is None and new[i] > 0:
            first_cycle[i] = t
            first_source[i] = None if seeded[i] > 0 else dominant[i]

    advanced = advance_cohorts(replace(world, susceptible=susceptible), new)
    advanced = replace(
        advanced,
        first_exposure_cycle=tuple(first_cycle),
        first_exposure_source=tuple(first_source),
    )
    ledger = [
        ExposureLedgerEntry(t, ids[i], float(eg[i]), float(el[i]), dominant[i], float(seeded[i]))
        for i in range(len(ids))
    ]
    return advanced, ledger
