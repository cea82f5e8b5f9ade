import math

import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy import stats

from geodec.errors import DomainError
from geodec.metrics import (ValidatorProfile, all_gdi, blockchain_gdi, detect_majority,
                            detect_minorities, gdi_decrease_after_jailing, gdi_full, gdi_quorum,
                            gdi_report, haversine, liveliness, mean_liveliness, pearson,
                            percentile_rank, select_minorities)

import oracles

HEL = (60.1699, 24.9384)
SGP = (1.3521, 103.8198)
SJ = (37.3382, -121.8863)

coords = st.tuples(st.floats(-90, 90), st.floats(-179.999, 180))


def test_haversine_identity_and_antipode():
    assert haversine(HEL, HEL) == 0.0
    assert haversine((0.0, 0.0), (0.0, 180.0)) == pytest.approx(math.pi * 6371.0, rel=1e-12)
    assert haversine((10.0, 20.0), (-10.0, -160.0)) == pytest.approx(20015.1, rel=1e-3)


def test_helsinki_singapore_against_oracle():
    d = haversine(HEL, SGP)
    assert d == pytest.approx(oracles.vincenty_sphere(HEL, SGP), rel=1e-3)
    assert d == pytest.approx(9.26e3, rel=5e-3)


@settings(max_examples=300)
@given(coords, coords)
def test_haversine_symmetric_and_matches_chord(a, b):
    assert haversine(a, b) == haversine(b, a)
    assert haversine(a, b) >= 0.0
    assert haversine(a, b) == pytest.approx(oracles.chord_distance(a, b), rel=1e-6, abs=1e-6)


@settings(max_examples=300)
@given(coords, coords, coords)
def test_triangle_inequality(a, b, c):
    assert haversine(a, c) <= haversine(a, b) + haversine(b, c) + 1e-9


def test_gdi_single_city_is_zero(make_set):
    V = make_set(("helsinki", 5))
    assert gdi_full(V[0], V) == 0.0
    assert gdi_quorum(V[0], V) == 0.0
    assert blockchain_gdi(V) == 0.0
    assert detect_minorities(V) == set()
    assert detect_majority(V) == "helsinki"


def test_gdi_single_pair():
    a = ValidatorProfile(0, "a", HEL)
    b = ValidatorProfile(1, "b", SGP)
    assert gdi_full(a, [a, b]) == haversine(HEL, SGP)


def test_gdi_requires_membership(make_set):
    V = make_set(("helsinki", 2))
    with pytest.raises(DomainError):
        gdi_full(ValidatorProfile(9, "x", SGP), V)
    with pytest.raises(DomainError):
        gdi_quorum(ValidatorProfile(9, "x", SGP), V)


def test_sixteen_validator_scenario(make_set, registry):
    V = make_set(("san jose", 8), ("helsinki", 7), ("singapore", 1))
    sgp, sj = V[15], V[0]
    c = {k: registry[k].coords for k in ("san jose", "helsinki", "singapore")}
    d_sj_hel = oracles.vincenty_sphere(c["san jose"], c["helsinki"])
    assert gdi_full(sgp, V) == pytest.approx(
        8 * oracles.vincenty_sphere(c["singapore"], c["san jose"])
        + 7 * oracles.vincenty_sphere(c["singapore"], c["helsinki"]), rel=1e-9)
    assert gdi_quorum(sj, V) == pytest.approx(3 * d_sj_hel, rel=1e-9)
    assert gdi_quorum(sj, V) == oracles.brute_gdi_quorum(sj, V, haversine)
    brute = [oracles.brute_gdi_quorum(v, V, haversine) for v in V]
    assert blockchain_gdi(V) == pytest.approx(sum(brute) / 16, rel=1e-12)
    assert detect_minorities(V) == {"singapore"} == oracles.brute_minorities(V, haversine)
    assert detect_majority(V) is None


def test_two_validator_minority(make_set):
    V = make_set(("san jose", 7), ("helsinki", 7), ("singapore", 2))
    assert detect_minorities(V) == oracles.brute_minorities(V, haversine) == {"singapore"}


def test_majority_examples(make_set):
    assert detect_majority(make_set(("san jose", 16))) == "san jose"
    assert detect_majority(make_set(("san jose", 12), ("singapore", 4))) == "san jose"
    assert detect_majority(make_set(("san jose", 10), ("singapore", 6))) is None
    with pytest.raises(DomainError):
        detect_majority([])


def test_minorities_need_four(make_set):
    with pytest.raises(DomainError):
        detect_minorities(make_set(("san jose", 2), ("singapore", 1)))


def test_percentile_rank_is_exact_ceiling():
    from fractions import Fraction
    for n in range(1, 500):
        assert percentile_rank(n) == math.ceil(Fraction(67 * n, 100))


CITY_POOL = ["san jose", "helsinki", "singapore", "toronto", "bangalore", "hong kong",
             "paris", "tokyo", "vancouver", "melbourne", "sao paulo", "johannesburg"]


@st.composite
def validator_sets(draw, max_size=64):
    cities = draw(st.lists(st.sampled_from(CITY_POOL), min_size=1, max_size=12, unique=True))
    n = draw(st.integers(4, max_size))
    picks = draw(st.lists(st.sampled_from(cities), min_size=n, max_size=n))
    return picks


def _profiles(registry, picks):
    return [ValidatorProfile(i, c, registry[c].coords) for i, c in enumerate(picks)]


@settings(max_examples=150, deadline=None)
@given(validator_sets())
def test_quorum_gdi_properties(registry, picks):
    V = _profiles(registry, picks)
    full, quorum = all_gdi(V)
    rep = gdi_report(V)
    for v in V:
        assert 0.0 <= quorum[v.validator_id] <= full[v.validator_id] + 1e-6
        assert full[v.validator_id] == pytest.approx(oracles.brute_gdi_full(v, V, haversine), rel=1e-12)
    assert sum(1 for v in V if v.city in rep.minority_cities) <= len(V) // 3
    if rep.majority_city is not None:
        assert rep.majority_city not in rep.minority_cities


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0, 1e5), min_size=4, max_size=40), st.floats(-1e4, 1e4))
def test_minority_selection_is_translation_invariant(values, shift):
    gdi = {i: v for i, v in enumerate(values)}
    city = {i: f"c{i % 5}" for i in gdi}
    shifted = {i: v + shift for i, v in gdi.items()}
    assume(sorted(gdi, key=gdi.get) == sorted(shifted, key=shifted.get))
    assume(len(set(values)) == len(set(shifted.values())))
    assert select_minorities(gdi, city) == select_minorities(shifted, city)


def test_liveliness_examples():
    assert liveliness(800, 1000) == 80.0
    assert liveliness(0, 1000) == 0.0
    assert liveliness(0, 0) == 0.0
    with pytest.raises(DomainError):
        liveliness(5, 4)


def test_mean_liveliness_examples():
    assert mean_liveliness([80] * 5) == 80
    assert mean_liveliness([0] * 5) == 0
    assert mean_liveliness([10, 20, 30, 40, 50]) == 30
    with pytest.raises(DomainError):
        mean_liveliness([])


def test_pearson_examples():
    assert pearson([1, 2, 3], [2, 4, 6])[0] == pytest.approx(1.0, abs=1e-12)
    assert pearson([1, 2, 3], [3, 2, 1])[0] == pytest.approx(-1.0, abs=1e-12)
    r, p = pearson([1, 2, 3], [1, 2, 2])
    assert r == pytest.approx(math.sqrt(3) / 2, abs=1e-12)
    assert p == pytest.approx(stats.pearsonr([1, 2, 3], [1, 2, 2])[1], abs=1e-8)


def test_pearson_errors():
    with pytest.raises(DomainError):
        pearson([1, 2], [1, 2])
    with pytest.raises(DomainError):
        pearson([1, 1, 1], [1, 2, 3])
    with pytest.raises(DomainError):
        pearson([1, 2, 3], [1, 2])


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=300)
@given(st.lists(st.tuples(finite, finite), min_size=3, max_size=60))
def test_pearson_matches_two_pass_and_scipy(points):
    xs, ys = [p[0] for p in points], [p[1] for p in points]
    assume(max(xs) - min(xs) > 1e-3 and max(ys) - min(ys) > 1e-3)
    r, p = pearson(xs, ys)
    assert abs(r - oracles.two_pass_pearson(xs, ys)) <= 1e-12
    assert r == pytest.approx(stats.pearsonr(xs, ys)[0], abs=1e-12)
    # p near |r| = 1 swings with the last ulp of r, so test the tail at our own r
    df = len(xs) - 2
    if abs(r) < 1.0:
        t = abs(r) * math.sqrt(df / (1.0 - r * r))
        assert p == pytest.approx(2.0 * stats.t.sf(t, df), abs=1e-8)
    assert 0.0 <= p <= 1.0


def test_gdi_decrease(make_set):
    V = make_set(("san jose", 8), ("helsinki", 7), ("singapore", 1))
    assert gdi_decrease_after_jailing(V, []) == 0.0
    before = sum(oracles.brute_gdi_quorum(v, V, haversine) for v in V) / 16
    rest = V[:15]
    after = sum(oracles.brute_gdi_quorum(v, rest, haversine) for v in rest) / 15
    dec = gdi_decrease_after_jailing(V, [15])
    assert dec > 0
    assert dec == pytest.approx(100 * (before - after) / before, rel=1e-9)
    single = make_set(("paris", 6))
    assert gdi_decrease_after_jailing(single, [0, 1]) == 0.0
    with pytest.raises(DomainError):
        gdi_decrease_after_jailing(single, range(6))
    with pytest.raises(DomainError):
        gdi_decrease_after_jailing(single, [99])


def test_profile_validation():
    with pytest.raises(DomainError):
        ValidatorProfile(-1, "a", HEL)
    with pytest.raises(DomainError):
        ValidatorProfile(0, "a", (95.0, 0.0))
    with pytest.raises(DomainError):
        all_gdi([ValidatorProfile(0, "a", HEL), ValidatorProfile(0, "b", SGP)])
