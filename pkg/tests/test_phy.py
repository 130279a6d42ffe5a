import math

import pytest
from hypothesis import given, strategies as st

from mmrelay.phy import base_demand, harmonic_time, rate, relay_unit_time, shannon_rate
from mmrelay.geometry import compute_feasibility
from mmrelay.scenario import LogicalLink, PhyParams, Point, RelaySite, generate_random

from support import rate as oracle_rate, unit_time

PHY = PhyParams()


def test_rate_at_one_meter():
    # 20 mW over a 1e-10 mW floor: SNR = 2e11 (about 113 dB)
    want = 2.16e9 * math.log2(1 + 20 / 1e-10)
    got = shannon_rate(1.0, PHY)
    assert got.in_range
    assert got.rate == pytest.approx(want, rel=1e-12)
    assert got.rate == pytest.approx(8.109e10, rel=1e-3)


def test_out_of_range_is_zero():
    res = shannon_rate(7.0, PHY)
    assert res.rate == 0.0 and not res.in_range
    assert shannon_rate(6.0, PHY).in_range
    assert shannon_rate(6.0 + 1e-12, PHY).in_range
    assert not shannon_rate(6.0 + 1e-6, PHY).in_range


@pytest.mark.parametrize("d", [0.0, -1.0])
def test_nonpositive_distance_rejected(d):
    with pytest.raises(ValueError):
        shannon_rate(d, PHY)


@given(st.floats(0.01, 6.0), st.floats(0.01, 6.0))
def test_rate_nonincreasing_in_distance(a, b):
    lo, hi = sorted((a, b))
    assert rate(lo, PHY) >= rate(hi, PHY)


def test_harmonic_time():
    assert harmonic_time(1e9, 2e9) == pytest.approx(1.5e-9)
    assert harmonic_time(4e9, 4e9) == pytest.approx(2 / 4e9)
    with pytest.raises(ValueError):
        harmonic_time(0.0, 1e9)


def test_equidistant_relay_time():
    link = LogicalLink(0, Point(3, 5), Point(7, 5))
    t = relay_unit_time(link, RelaySite(0, Point(5, 5 + math.sqrt(5))), (), PHY)
    assert t == pytest.approx(2 / rate(3.0, PHY), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_unit_times_match_independent_recomputation(seed):
    s = generate_random(seed, 4, 6, 2.0)
    d = compute_feasibility(s, check_overlap=False)
    for (i, k), tau in d.unit_times.items():
        link, site = s.link(i), s.site(k)
        assert tau == pytest.approx(unit_time(link.source, site.position, link.destination, s.phy), rel=1e-12)
        r = oracle_rate(math.dist(link.source, link.destination), s.phy) / 3
        assert d.demands[i] == pytest.approx(r, rel=1e-12)


def test_base_demand():
    near = LogicalLink(0, Point(1, 1), Point(2, 1))
    far = LogicalLink(1, Point(1, 1), Point(5, 1))
    assert base_demand(near, PHY) == pytest.approx(rate(1.0, PHY) / 3)
    assert base_demand(far, PHY) < base_demand(near, PHY)
    assert base_demand(LogicalLink(2, Point(1, 1), Point(2, 1), demand=5e8), PHY) == 5e8
    with pytest.raises(ValueError, match="comm radius"):
        base_demand(LogicalLink(3, Point(0, 0), Point(8, 8)), PHY)


def test_relative_loads_do_not_depend_on_bandwidth():
    s = generate_random(3, 3, 4, 2.0)
    wide = s.__class__(s.room_width, s.room_height, s.links, s.obstacles, s.sites,
                       PhyParams(channel_bandwidth=1e8))
    a, b = compute_feasibility(s, False), compute_feasibility(wide, False)
    for pair in a.unit_times:
        assert a.load(*pair) == pytest.approx(b.load(*pair), rel=1e-12)
