import datetime as dt
import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import scenario
from hybridepi.model import ConfigurationError, EpidemicParams, RegionProfile
from hybridepi.scenario import (
    BUNDLED,
    OnsetRecord,
    ScenarioInvalid,
    SeedEvent,
    SeedingMode,
    load_scenario,
    onset_dates_to_seeds,
    require_valid,
    save_scenario,
    validate,
)
from hybridepi.simulation import run

ORIGIN = dt.date(2002, 11, 16)


@pytest.fixture(scope="module")
def sars8():
    return load_scenario("sars8")


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_scenarios_validate(name):
    assert validate(load_scenario(name)) == []


def test_sars8_committed_configuration(sars8):
    assert sars8.params == EpidemicParams()
    assert sars8.seeds == (SeedEvent("guangdong", 0, 1.0),)
    assert sars8.seeding_mode is SeedingMode.TRAFFIC_DRIVEN
    assert sars8.groups["china"] == ("beijing", "tianjin", "hebei", "shanxi",
                                     "inner_mongolia", "guangdong")


def test_unknown_seed_region_is_one_named_violation(sars8):
    bad = replace(sars8, seeds=(SeedEvent("Atlantis", 0, 1.0),))
    problems = validate(bad)
    assert len(problems) == 1
    assert "Atlantis" in problems[0]


def test_matrix_missing_region_is_one_named_violation(sars8):
    kept = [r for r in sars8.matrix.regions if r != "taiwan"]
    bad = replace(sars8, matrix=sars8.matrix.subset(kept))
    problems = validate(bad)
    assert len(problems) == 1
    assert "taiwan" in problems[0]


def test_validate_lists_every_problem(sars8):
    bad = replace(
        sars8,
        seeds=(SeedEvent("guangdong", 100, 1.0), SeedEvent("hong_kong", -1, 0.0)),
        cycle_length_days=0.0,
        params=replace(sars8.params, c1=-1.0),
        groups={"taiwan": ("nowhere",)},
    )
    problems = validate(bad)
    text = "\n".join(problems)
    for fragment in ("cycle 100", "cycle -1", "exposed_count", "TrafficDriven",
                     "cycle_length_days", "c1", "collides", "nowhere"):
        assert fragment in text
    assert len(problems) >= 8


def test_validate_is_total_and_pure():
    weird = scenario([1.0, 2.0])
    weird = replace(
        weird,
        profiles=(RegionProfile("r0", "x", math.nan, -1.0, 0.0), weird.profiles[1]),
        seeds=(SeedEvent("r0", 1.5, math.inf),),
    )
    before = repr(weird)
    problems = validate(weird)
    assert problems
    assert repr(weird) == before


def test_require_valid_raises_with_violations(sars8):
    bad = replace(sars8, seeds=(SeedEvent("Atlantis", 0, 1.0),))
    with pytest.raises(ScenarioInvalid) as info:
        require_valid(bad)
    assert any("Atlantis" in v for v in info.value.violations)
    with pytest.raises(ScenarioInvalid):
        run(bad)


def test_observed_onset_needs_one_seed_per_region(sars8):
    seeds = (SeedEvent("guangdong", 0, 1.0), SeedEvent("guangdong", 3, 1.0))
    problems = validate(replace(sars8, seeds=seeds, seeding_mode=SeedingMode.OBSERVED_ONSET))
    assert any("guangdong" in p and "more than one" in p for p in problems)


# -- onset dates ------------------------------------------------------------


def test_onset_vietnam():
    seeds = onset_dates_to_seeds([OnsetRecord("vietnam", dt.date(2003, 2, 23), 1)], ORIGIN, 2.0)
    assert seeds == [SeedEvent("vietnam", 49, 1.0)]


def test_onset_at_origin_is_cycle_zero():
    seeds = onset_dates_to_seeds([OnsetRecord("guangdong", ORIGIN, None)], ORIGIN, 2.0)
    assert seeds == [SeedEvent("guangdong", 0, 1.0)]


def test_onset_macao():
    seeds = onset_dates_to_seeds([OnsetRecord("macao", dt.date(2003, 5, 5), 1)], ORIGIN, 2.0)
    assert seeds == [SeedEvent("macao", 85, 1.0)]


def test_onset_before_origin_names_region():
    with pytest.raises(ConfigurationError, match="atlantis"):
        onset_dates_to_seeds([OnsetRecord("atlantis", dt.date(2002, 1, 1), 1)], ORIGIN)


onset_records = st.lists(
    st.builds(
        OnsetRecord,
        st.sampled_from(["a", "b", "c", "d", "e"]),
        st.dates(ORIGIN, dt.date(2003, 12, 31)),
        st.one_of(st.none(), st.integers(1, 50).map(float)),
    ),
    max_size=12,
)


@given(onset_records, st.randoms(use_true_random=False), st.floats(0.5, 7))
@settings(max_examples=100)
def test_onset_seeds_sorted_and_permutation_stable(records, rnd, length):
    seeds = onset_dates_to_seeds(records, ORIGIN, length)
    assert [s.cycle for s in seeds] == sorted(s.cycle for s in seeds)
    shuffled = list(records)
    rnd.shuffle(shuffled)
    assert onset_dates_to_seeds(shuffled, ORIGIN, length) == seeds


def test_bundled_onset_scenario_seeds():
    sc = load_scenario("sars30-onset")
    by_region = {s.region: s for s in sc.seeds}
    assert by_region["vietnam"] == SeedEvent("vietnam", 49, 1.0)
    assert by_region["macao"] == SeedEvent("macao", 85, 1.0)
    assert by_region["canada"] == SeedEvent("canada", 49, 5.0)
    assert by_region["guangdong"] == SeedEvent("guangdong", 0, 1.0)
    assert "japan" not in by_region


def test_onset_mode_blocks_global_exposure_until_seed():
    sc = load_scenario("sars30-onset")
    report = run(sc)
    ids = report.region_ids
    seed_cycle = {s.region: s.cycle for s in sc.seeds}
    for i, rid in enumerate(ids):
        opened = seed_cycle.get(rid)
        if rid in sc.groups.get("china", ()):
            opened = min(seed_cycle[m] for m in sc.groups["china"] if m in seed_cycle)
        if opened is None:
            assert np.all(report.new_global[:, i] == 0), rid
        else:
            assert np.all(report.new_global[:opened, i] == 0), rid
    japan = ids.index("japan")
    assert report.cumulative[-1, japan] == 0


# -- files ------------------------------------------------------------------


@pytest.mark.parametrize("name", BUNDLED)
def test_scenario_files_round_trip(tmp_path, name):
    original = load_scenario(name)
    path = tmp_path / f"{name}.toml"
    save_scenario(original, path)
    reloaded = load_scenario(path)
    assert reloaded == original
    again = tmp_path / "again"
    again.mkdir()
    save_scenario(reloaded, again / path.name)
    for f in path.parent.glob(f"{name}.*"):
        assert (again / f.name).read_bytes() == f.read_bytes()


def _write_variant(tmp_path, old, new):
    source = load_scenario("sars8")
    path = tmp_path / "s.toml"
    save_scenario(source, path)
    path.write_text(path.read_text().replace(old, new))
    return path


def test_unknown_keys_are_errors(tmp_path):
    path = _write_variant(tmp_path, "p_global", "p_globl")
    with pytest.raises(ConfigurationError, match="p_globl"):
        load_scenario(path)


def test_unknown_sections_are_errors(tmp_path):
    path = _write_variant(tmp_path, "[options]", "[extras]\nx = 1\n\n[options]")
    with pytest.raises(ConfigurationError, match="extras"):
        load_scenario(path)


def test_unknown_mixing_mode_is_error(tmp_path):
    path = _write_variant(tmp_path, '"MassAction"', '"Gravity"')
    with pytest.raises(ConfigurationError, match="Gravity"):
        load_scenario(path)


def test_overrides(sars8):
    sc = sars8.with_overrides({"p_global": "0", "seed_exposed": "3", "local_mixing_mode":
                               "FrequencyDependent"})
    assert sc.params.p_global == 0.0
    assert sc.seeds[0].exposed_count == 3.0
    assert sc.params.local_mixing_mode.value == "FrequencyDependent"
    with pytest.raises(ConfigurationError, match="bogus"):
        sars8.with_overrides({"bogus": 1})
    with pytest.raises(ConfigurationError, match="run_cycles"):
        sars8.with_overrides({"run_cycles": "2.5"})


def test_cycle_dates_are_labels_only(sars8):
    shifted = sars8.with_overrides({"calendar_origin": "2003-01-01", "cycle_length_days": "3"})
    a, b = run(sars8), run(shifted)
    assert np.array_equal(a.cumulative, b.cumulative)
    assert a.cycle_date(45) == dt.date(2003, 2, 14)
    assert b.cycle_date(1) == dt.date(2003, 1, 4)
