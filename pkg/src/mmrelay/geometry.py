"""Line-of-sight tests and link/site feasibility sets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ScenarioError
from . import phy as phy_rate
from .scenario import DiskObstacle, LogicalLink, Point, RelaySite, Scenario, SegmentObstacle

EPS_GEO = 1e-9


def _orient(a, b, c) -> float:
    return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])


def _sign(v: float, scale: float) -> int:
    tol = EPS_GEO * max(scale, 1.0)
    if v > tol:
        return 1
    if v < -tol:
        return -1
    return 0


def _on_box(a, b, c) -> bool:
    # c collinear with ab: is it within ab's bounding box (with tolerance)?
    return (min(a[0], b[0]) - EPS_GEO <= c[0] <= max(a[0], b[0]) + EPS_GEO
            and min(a[1], b[1]) - EPS_GEO <= c[1] <= max(a[1], b[1]) + EPS_GEO)


def segments_intersect(p, q, a, b) -> bool:
    """Closed-segment intersection; touching and collinear overlap count."""
    scale = max(math.dist(p, q), math.dist(a, b))
    d1 = _sign(_orient(a, b, p), scale)
    d2 = _sign(_orient(a, b, q), scale)
    d3 = _sign(_orient(p, q, a), scale)
    d4 = _sign(_orient(p, q, b), scale)
    if d1 * d2 < 0 and d3 * d4 < 0:
        return True
    return ((d1 == 0 and _on_box(a, b, p)) or (d2 == 0 and _on_box(a, b, q))
            or (d3 == 0 and _on_box(p, q, a)) or (d4 == 0 and _on_box(p, q, b)))


def point_segment_distance(c, p, q) -> float:
    px, py = p
    dx, dy = q[0] - px, q[1] - py
    len2 = dx * dx + dy * dy
    if len2 == 0.0:
        return math.dist(c, p)
    t = ((c[0] - px) * dx + (c[1] - py) * dy) / len2
    t = min(1.0, max(0.0, t))
    return math.hypot(c[0] - (px + t * dx), c[1] - (py + t * dy))


def segment_blocked(p: Point, q: Point, obstacle) -> bool:
    """True when the obstacle meets segment pq.

    Conservative: grazing contact, touching an endpoint and collinear overlap
    all count as blocked.
    """
    if isinstance(obstacle, SegmentObstacle):
        return segments_intersect(p, q, obstacle.p, obstacle.q)
    if isinstance(obstacle, DiskObstacle):
        return point_segment_distance(obstacle.center, p, q) <= obstacle.radius + EPS_GEO
    raise TypeError(f"unsupported obstacle {obstacle!r}")


def is_visible(p: Point, q: Point, obstacles: Iterable, d: float) -> bool:
    if math.dist(p, q) > d + EPS_GEO:
        return False
    return not any(segment_blocked(p, q, ob) for ob in obstacles)


def hop_usable(p: Point, q: Point, obstacles, phy) -> bool:
    """Visible within the visibility radius and close enough to carry data."""
    return is_visible(p, q, obstacles, phy.visibility_radius) and math.dist(p, q) <= phy.comm_radius + EPS_GEO


def covering_sites(link: LogicalLink, sites: Sequence[RelaySite], obstacles, phy) -> list[int]:
    """Ids of sites usable as a relay by ``link`` (both hops usable)."""
    return [k.id for k in sites
            if hop_usable(link.source, k.position, obstacles, phy)
            and hop_usable(k.position, link.destination, obstacles, phy)]


def link_lambda(link: LogicalLink, sites, obstacles, phy) -> int:
    """1 if the link can be served directly or through at least one candidate site."""
    if hop_usable(link.source, link.destination, obstacles, phy):
        return 1
    return int(bool(covering_sites(link, sites, obstacles, phy)))


def continuous_overlap(link: LogicalLink, obstacles, d: float, room: tuple[float, float],
                       resolution: float = 0.1) -> bool:
    """Sampled test for a non-empty overlap of the two visibility regions.

    Used only for diagnostics on links that no candidate site can serve.
    """
    w, h = room
    xs = np.arange(resolution / 2, w, resolution)
    ys = np.arange(resolution / 2, h, resolution)
    for x in xs:
        for y in ys:
            pt = (float(x), float(y))
            if (math.dist(pt, link.source) <= d and math.dist(pt, link.destination) <= d
                    and is_visible(link.source, pt, obstacles, d)
                    and is_visible(pt, link.destination, obstacles, d)):
                return True
    return False


@dataclass
class FeasibilityData:
    """Everything the formulations need, keyed by link id and site id.

    ``unit_times[(i, k)]`` is seconds of relay airtime per bit (sum over
    both hops), ``demands[i]`` bits/s.
    """

    feasible_links: tuple[int, ...]
    sites: tuple[int, ...]
    per_site: dict[int, tuple[int, ...]]
    nlos: dict[int, int]
    unit_times: dict[tuple[int, int], float]
    demands: dict[int, float]
    excluded: tuple[int, ...] = ()
    unservable: tuple[int, ...] = ()
    notes: list[str] = field(default_factory=list)

    def sites_of(self, link_id: int) -> tuple[int, ...]:
        return tuple(k for k in self.sites if link_id in self.per_site[k])

    def load(self, link_id: int, site_id: int) -> float:
        """Capacity fraction r_i * tau_ik that link i occupies on relay k."""
        return self.demands[link_id] * self.unit_times[(link_id, site_id)]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        """All (link, site) pairs where the site covers the link, site-major order."""
        return [(i, k) for k in self.sites for i in self.per_site[k]]


def compute_feasibility(s: Scenario, check_overlap: bool = True) -> FeasibilityData:
    phy = s.phy
    sites_by_id = {st.id: st for st in s.sites}
    site_ids = tuple(st.id for st in s.sites)
    per_site: dict[int, list[int]] = {k: [] for k in site_ids}
    feasible, excluded, unservable = [], [], []
    nlos, unit_times, demands = {}, {}, {}
    notes = []
    for link in s.links:
        direct = hop_usable(link.source, link.destination, s.obstacles, phy)
        cover = covering_sites(link, s.sites, s.obstacles, phy)
        if not direct and not cover:
            excluded.append(link.id)
            if check_overlap and continuous_overlap(link, s.obstacles, phy.visibility_radius,
                                                    (s.room_width, s.room_height)):
                unservable.append(link.id)
                notes.append(f"link {link.id}: visibility regions overlap but no candidate site lies inside")
            else:
                notes.append(f"link {link.id}: infeasible (no direct path and no covering site)")
            continue
        feasible.append(link.id)
        nlos[link.id] = 0 if direct else 1
        try:
            demands[link.id] = phy_rate.base_demand(link, phy)
        except ValueError as exc:
            raise ScenarioError(f"link {link.id}: {exc}", [str(exc)]) from exc
        for k in cover:
            per_site[k].append(link.id)
            unit_times[(link.id, k)] = phy_rate.relay_unit_time(link, sites_by_id[k], s.obstacles, phy)
    if not feasible:
        notes.append("no feasible logical links")
    return FeasibilityData(
        feasible_links=tuple(feasible),
        sites=site_ids,
        per_site={k: tuple(v) for k, v in per_site.items()},
        nlos=nlos,
        unit_times=unit_times,
        demands=demands,
        excluded=tuple(excluded),
        unservable=tuple(unservable),
        notes=notes,
    )
