import math
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from mmrelay.geometry import (compute_feasibility, hop_usable, is_visible, link_lambda, point_segment_distance,
                              segment_blocked, segments_intersect)
from mmrelay.scenario import DiskObstacle, LogicalLink, PhyParams, Point, SegmentObstacle, generate_random

from support import WALL, nlos_two_sites, los_one_site, scenario

P = Point


def exact_intersect(p, q, a, b):
    """Closed-segment test in rational arithmetic."""
    p, q, a, b = [tuple(Fraction(c) for c in pt) for pt in (p, q, a, b)]

    def orient(u, v, w):
        v_ = (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])
        return (v_ > 0) - (v_ < 0)

    def between(u, v, w):
        return min(u[0], v[0]) <= w[0] <= max(u[0], v[0]) and min(u[1], v[1]) <= w[1] <= max(u[1], v[1])

    d1, d2, d3, d4 = orient(a, b, p), orient(a, b, q), orient(p, q, a), orient(p, q, b)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return ((d1 == 0 and between(a, b, p)) or (d2 == 0 and between(a, b, q))
            or (d3 == 0 and between(p, q, a)) or (d4 == 0 and between(p, q, b)))


def test_crossing_and_miss():
    assert segment_blocked(P(0, 0), P(4, 0), SegmentObstacle(P(2, -1), P(2, 1)))
    assert not segment_blocked(P(0, 0), P(4, 0), SegmentObstacle(P(2, 0.5), P(2, 1)))


def test_grazing_and_collinear_contact_block():
    assert segment_blocked(P(0, 0), P(4, 0), SegmentObstacle(P(2, 0), P(2, 1)))
    assert segment_blocked(P(0, 0), P(4, 0), SegmentObstacle(P(3, 0), P(6, 0)))
    assert segment_blocked(P(0, 0), P(4, 0), SegmentObstacle(P(4, 0), P(5, 1)))
    assert not segment_blocked(P(0, 0), P(4, 0), SegmentObstacle(P(5, 0), P(6, 0)))


def test_disk_tangent_blocks():
    assert segment_blocked(P(0, 0), P(4, 0), DiskObstacle(P(2, 1), 1.0))
    assert not segment_blocked(P(0, 0), P(4, 0), DiskObstacle(P(2, 1.01), 1.0))
    # closest point is an endpoint
    assert segment_blocked(P(0, 0), P(4, 0), DiskObstacle(P(5, 0), 1.0))
    assert point_segment_distance(P(2, 3), P(0, 0), P(4, 0)) == pytest.approx(3.0)


def test_visibility_examples():
    assert is_visible(P(1, 1), P(5, 1), [], 6.0)
    assert not is_visible(P(1, 1), P(8, 1), [], 6.0)
    assert not is_visible(P(3, 5), P(7, 5), [WALL], 6.0)


def test_link_lambda_examples():
    phy = PhyParams()
    link = LogicalLink(0, P(3, 5), P(7, 5))
    assert link_lambda(link, [], [], phy) == 1
    assert link_lambda(link, nlos_two_sites().sites, [WALL], phy) == 1
    blocked_site = nlos_two_sites().sites[:1]
    assert link_lambda(link, blocked_site, [WALL, SegmentObstacle(P(4, 5.5), P(4, 9))], phy) == 0


def test_feasibility_sets_of_hand_built_scenarios():
    d = compute_feasibility(los_one_site())
    assert d.feasible_links == (0,) and d.nlos == {0: 0} and d.per_site == {0: (0,)}
    d = compute_feasibility(nlos_two_sites())
    assert d.nlos == {0: 1} and d.sites_of(0) == (0, 1)
    # site directly on the wall line is blocked for both hops
    d = compute_feasibility(scenario([((3, 5), (7, 5))], [(5, 5)], [WALL]))
    assert d.excluded == (0,) and d.per_site == {0: ()}


def test_unservable_diagnostic():
    # a wall between the endpoints and no sites: the visibility regions still overlap
    d = compute_feasibility(scenario([((3, 5), (7, 5))], [], [WALL]))
    assert d.excluded == (0,) and d.unservable == (0,)
    assert any("overlap" in n for n in d.notes)


def test_omega_needs_both_hops_within_range():
    # both endpoints see the site, but the far hop is longer than the comm radius
    d = compute_feasibility(scenario([((1, 1), (5, 1))], [(1, 8)]))
    assert d.per_site[0] == ()


def _oracle_blocked(p, q, obstacles):
    return any(exact_intersect(p, q, ob.p, ob.q) for ob in obstacles)


@pytest.mark.parametrize("seed", range(12))
def test_feasibility_matches_exact_oracle(seed):
    s = generate_random(seed, 2, 10, 2.0)
    phy = s.phy
    d = compute_feasibility(s, check_overlap=False)

    def usable(a, b):
        return math.dist(a, b) <= phy.comm_radius and not _oracle_blocked(a, b, s.obstacles)

    for link in s.links:
        direct = usable(link.source, link.destination)
        cover = [k.id for k in s.sites if usable(link.source, k.position) and usable(k.position, link.destination)]
        if not direct and not cover:
            assert link.id in d.excluded
            continue
        assert d.nlos[link.id] == (0 if direct else 1)
        assert d.sites_of(link.id) == tuple(cover)
        assert link_lambda(link, s.sites, s.obstacles, phy) == 1


coord = st.floats(0, 10, allow_nan=False)
pts = st.builds(P, coord, coord)


@given(pts, pts, pts, pts)
def test_intersection_matches_exact_oracle(p, q, a, b):
    got = segments_intersect(p, q, a, b)
    want = exact_intersect(p, q, a, b)
    if got != want:
        # only near-degenerate configurations may differ, and only toward blocking
        assert got and not want


@given(pts, pts, st.lists(st.builds(SegmentObstacle, pts, pts), max_size=6))
def test_visibility_is_symmetric(p, q, obs):
    assert is_visible(p, q, obs, 6.0) == is_visible(q, p, obs, 6.0)


@given(pts, pts, st.lists(st.builds(SegmentObstacle, pts, pts), max_size=5), st.builds(SegmentObstacle, pts, pts))
def test_adding_an_obstacle_never_restores_visibility(p, q, obs, extra):
    if not is_visible(p, q, obs, 6.0):
        assert not is_visible(p, q, obs + [extra], 6.0)


@given(pts, pts, st.floats(0.5, 6.0))
def test_shrinking_radius_never_restores_visibility(p, q, d):
    if not is_visible(p, q, [], d):
        assert not is_visible(p, q, [], d * 0.9)


@pytest.mark.parametrize("seed", range(6))
def test_feasibility_set_invariants(seed):
    s = generate_random(seed, 4, 8, 2.0)
    d = compute_feasibility(s, check_overlap=False)
    for k in d.sites:
        assert set(d.per_site[k]) <= set(d.feasible_links)
    for i in d.feasible_links:
        link = s.link(i)
        if d.nlos[i] == 0:
            assert hop_usable(link.source, link.destination, s.obstacles, s.phy)
    assert set(d.feasible_links).isdisjoint(d.excluded)
    assert set(d.feasible_links) | set(d.excluded) == {li.id for li in s.links}
    assert all(t > 0 for t in d.unit_times.values())
