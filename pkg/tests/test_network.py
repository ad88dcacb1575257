import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from builders import DATA
from hybridepi.network import (
    OTHERS,
    Granularity,
    IngestionError,
    MissingDirectionWarning,
    ShareTable,
    TravelMatrix,
    apportion_by_share,
    build_sars_matrix,
    format_number,
    land_pair_volume,
    load_matrix,
    load_regions,
    read_flows,
    symmetrize,
    write_flows,
)
from hybridepi.model import ConfigurationError

NATIONAL_TOTAL = 2_227_761 * 10_000
PROVINCES = ["beijing", "tianjin", "hebei", "shanxi", "inner_mongolia", "guangdong"]


@pytest.fixture(scope="module")
def bilateral():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MissingDirectionWarning)
        return symmetrize(read_flows(DATA / "flows_bilateral.csv"), ["china", "hong_kong", "taiwan"])


@pytest.fixture(scope="module")
def six(bilateral):
    return build_sars_matrix(
        bilateral,
        Granularity.SIX_PROVINCES,
        ShareTable.from_csv(DATA / "shares_airport.csv"),
        ShareTable.from_csv(DATA / "shares_land.csv"),
        NATIONAL_TOTAL,
    )


@pytest.fixture(scope="module")
def printed():
    """Traveler volumes as printed for the 35-node network."""
    return TravelMatrix.from_csv(DATA / "matrix_sars30.csv")


# -- symmetrize -------------------------------------------------------------


def test_symmetrize_sums_both_directions():
    m = symmetrize([("china", "hong_kong", 5_692_500), ("hong_kong", "china", 58_770_063)],
                   ["china", "hong_kong"])
    assert m.volume("china", "hong_kong") == 64_462_563
    assert m.volume("hong_kong", "china") == 64_462_563


def test_symmetrize_single_direction_warns_and_keeps_value():
    with pytest.warns(MissingDirectionWarning, match="b->a"):
        m = symmetrize([("a", "b", 100)], ["a", "b"])
    assert m.volume("a", "b") == 100 and m.volume("b", "a") == 100


def test_symmetrize_empty_gives_zero_matrix():
    m = symmetrize([], ["a", "b", "c"])
    assert m == TravelMatrix.zeros(["a", "b", "c"])


def test_symmetrize_rejects_negative_counts():
    with pytest.raises(IngestionError, match="invalid count"):
        symmetrize([("a", "b", -1), ("b", "a", 2)], ["a", "b"])


def test_symmetrize_rejects_duplicate_pairs_by_name():
    with pytest.raises(IngestionError, match="a->b"):
        symmetrize([("a", "b", 1), ("a", "b", 2)], ["a", "b"])


def test_symmetrize_rejects_unknown_regions():
    with pytest.raises(IngestionError, match="atlantis"):
        symmetrize([("a", "atlantis", 1)], ["a", "b"])


def test_travel_matrix_rejects_asymmetry_and_diagonal():
    with pytest.raises(IngestionError):
        TravelMatrix(["a", "b"], [[0, 1], [2, 0]])
    with pytest.raises(IngestionError):
        TravelMatrix(["a", "b"], [[1, 0], [0, 0]])
    with pytest.raises(IngestionError):
        TravelMatrix(["a", "b"], [[0, np.inf], [np.inf, 0]])


def test_travel_matrix_is_read_only():
    m = TravelMatrix(["a", "b"], [[0, 3], [3, 0]])
    with pytest.raises(ValueError):
        m.volumes[0, 1] = 5


# -- apportionment ----------------------------------------------------------


def test_apportion_beijing_share_of_china_hong_kong_traffic():
    split = apportion_by_share(64_462_563, ShareTable({"beijing": 0.137859}))
    assert 8_886_625 <= split["beijing"] <= 8_886_775
    assert split["beijing"] + split[OTHERS] == 64_462_563


def test_apportion_full_share_takes_everything():
    assert apportion_by_share(12345, ShareTable({"x": 1.0})) == {"x": 12345}


def test_apportion_zero_total_gives_zeros():
    split = apportion_by_share(0, ShareTable({"x": 0.3, "y": 0.2}))
    assert split == {"x": 0, "y": 0, OTHERS: 0}


def test_apportion_rejects_shares_over_one():
    with pytest.raises(ConfigurationError):
        apportion_by_share(100, ShareTable({"x": 0.7, "y": 0.6}))


def test_apportion_rejects_negative_total():
    with pytest.raises(ConfigurationError):
        apportion_by_share(-1, ShareTable({"x": 0.5}))


def test_largest_remainder_breaks_thirds():
    split = apportion_by_share(10, ShareTable({"a": 1 / 3, "b": 1 / 3, "c": 1 / 3}))
    assert sum(split.values()) == 10
    assert sorted(v for k, v in split.items() if k != OTHERS) == [3, 3, 4]


share_lists = st.lists(st.integers(1, 10_000), min_size=1, max_size=8)


@given(st.integers(0, 10**12), share_lists, st.integers(0, 10_000))
@settings(max_examples=200)
def test_apportionment_conserves_total(total, counts, others):
    table = ShareTable.from_counts({f"r{i}": c for i, c in enumerate(counts)},
                                   sum(counts) + others)
    split = apportion_by_share(total, table)
    assert sum(split.values()) == total
    assert all(v >= 0 for v in split.values())


@given(st.integers(0, 10**10), share_lists, st.integers(0, 1000), st.integers(2, 10**6))
@settings(max_examples=200)
def test_apportionment_ignores_common_scaling_of_counts(total, counts, others, factor):
    base = {f"r{i}": c for i, c in enumerate(counts)}
    scaled = {k: v * factor for k, v in base.items()}
    a = apportion_by_share(total, ShareTable.from_counts(base, sum(counts) + others))
    b = apportion_by_share(total, ShareTable.from_counts(scaled, (sum(counts) + others) * factor))
    assert a == b


def test_share_tables_load_as_fractions():
    airport = ShareTable.from_csv(DATA / "shares_airport.csv")
    assert airport.entries["beijing"] == pytest.approx(0.137859)
    assert list(airport.entries) == PROVINCES
    assert airport.remainder == pytest.approx(1 - 0.302861, abs=1e-9)


# -- matrix construction ----------------------------------------------------


def test_aggregated_matrix_is_symmetrized_bilateral_table(bilateral):
    m = build_sars_matrix(bilateral, Granularity.AGGREGATED_CHINA)
    assert m.regions == ("china", "hong_kong", "taiwan")
    assert m.volume("china", "hong_kong") == 64_462_563
    assert m.volume("china", "taiwan") == 2_731_897
    assert m.volume("hong_kong", "taiwan") == 694_412


def test_six_provinces_beijing_hong_kong(six):
    assert six.volume("beijing", "hong_kong") == pytest.approx(8_886_773, rel=1e-3)


def test_six_provinces_beijing_tianjin(six):
    assert six.volume("beijing", "tianjin") == pytest.approx(1_009_387, rel=1e-3)
    assert six.volume("tianjin", "beijing") == six.volume("beijing", "tianjin")


def test_six_provinces_hebei_guangdong(six):
    assert six.volume("hebei", "guangdong") == pytest.approx(161_708_110, rel=1e-3)


def test_six_provinces_match_printed_volumes_entrywise(six, printed):
    for a in six.regions:
        for b in six.regions:
            expected = printed.volume(a, b)
            assert six.volume(a, b) == pytest.approx(expected, rel=1e-3), (a, b)


def test_land_pair_volume_formula():
    assert land_pair_volume(0.1, 0.2, 1000.0) == pytest.approx(40.0)


def test_six_provinces_need_share_tables(bilateral):
    with pytest.raises(ConfigurationError, match="SixProvinces"):
        build_sars_matrix(bilateral, Granularity.SIX_PROVINCES)


def test_bundled_province_matrix_matches_rebuild(six):
    regions = [p.id for p in load_regions(DATA / "regions_sars8.csv")]
    bundled = load_matrix(DATA / "matrix_sars8.csv", regions)
    assert bundled == six.subset(bundled.regions)


def test_bundled_aggregated_matrix_matches_bilateral(bilateral):
    bundled = TravelMatrix.from_csv(DATA / "matrix_sars8_aggregated.csv")
    assert bundled == bilateral.subset(bundled.regions)


# -- serialization ----------------------------------------------------------


def test_format_number_never_uses_exponent():
    assert format_number(22_277_610_000.0) == "22277610000"
    assert format_number(1e-7) == "0.0000001"
    assert format_number(2.5) == "2.5"


@st.composite
def matrices(draw):
    n = draw(st.integers(1, 6))
    values = st.one_of(st.integers(0, 10**12).map(float),
                       st.floats(0, 1e12, allow_nan=False, allow_infinity=False))
    vol = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            vol[i, j] = vol[j, i] = draw(values)
    return TravelMatrix([f"r{i}" for i in range(n)], vol)


@given(matrices())
@settings(max_examples=100)
def test_matrix_export_round_trips_exactly(tmp_path_factory, m):
    path = tmp_path_factory.mktemp("m") / "matrix.csv"
    m.to_csv(path)
    assert TravelMatrix.from_csv(path) == m
    assert "e" not in path.read_text().split("\n", 1)[1]


@given(matrices())
@settings(max_examples=50)
def test_flows_export_round_trips_exactly(tmp_path_factory, m):
    path = tmp_path_factory.mktemp("f") / "flows.csv"
    write_flows(m, path)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", MissingDirectionWarning)
        assert load_matrix(path, m.regions) == m


def test_regions_file_has_exact_header(tmp_path):
    bad = tmp_path / "regions.csv"
    bad.write_text("id,name,population\nx,X,1\n")
    with pytest.raises(IngestionError, match="header"):
        load_regions(bad)


def test_bundled_regions_are_consistent():
    for name in ("regions_sars8.csv", "regions_sars8_aggregated.csv", "regions_sars30.csv"):
        for p in load_regions(DATA / name):
            assert p.violations() == [], p
