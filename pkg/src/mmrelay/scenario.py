"""Scenario data model, JSON format, validation and random generation."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import NamedTuple, Optional, Union

import numpy as np

from .errors import ScenarioError

FORMAT_VERSION = 1

# 10^(-100/10) mW
NOISE_FLOOR_MW = 1e-10


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class SegmentObstacle:
    p: Point
    q: Point

    kind = "segment"


@dataclass(frozen=True)
class DiskObstacle:
    center: Point
    radius: float

    kind = "disk"


Obstacle = Union[SegmentObstacle, DiskObstacle]


@dataclass(frozen=True)
class LogicalLink:
    id: int
    source: Point
    destination: Point
    demand: Optional[float] = None  # bits/s; derived from the rate model when None


@dataclass(frozen=True)
class RelaySite:
    id: int
    position: Point


@dataclass(frozen=True)
class PhyParams:
    """Radio constants. Powers in mW, bandwidth in Hz, radii in meters."""

    channel_bandwidth: float = 2.16e9
    tx_power: float = 20.0
    noise_floor: float = NOISE_FLOOR_MW
    gain_tx: float = 1.0
    gain_rx: float = 1.0
    path_loss_exponent: float = 2.0
    comm_radius: float = 6.0
    visibility_radius: float = 6.0


@dataclass(frozen=True)
class Scenario:
    room_width: float
    room_height: float
    links: tuple[LogicalLink, ...]
    obstacles: tuple[Obstacle, ...] = ()
    sites: tuple[RelaySite, ...] = ()
    phy: PhyParams = field(default_factory=PhyParams)

    def link(self, link_id: int) -> LogicalLink:
        for link in self.links:
            if link.id == link_id:
                return link
        raise KeyError(link_id)

    def site(self, site_id: int) -> RelaySite:
        for site in self.sites:
            if site.id == site_id:
                return site
        raise KeyError(site_id)


# --------------------------------------------------------------------------
# validation


@dataclass(frozen=True)
class Problem:
    entity: str
    message: str

    def __str__(self):
        return f"{self.entity}: {self.message}"


@dataclass
class ValidationReport:
    problems: list[Problem] = field(default_factory=list)

    def add(self, entity, message):
        self.problems.append(Problem(entity, message))

    def __bool__(self):
        # truthy when the scenario is well formed
        return not self.problems

    def __len__(self):
        return len(self.problems)

    def __iter__(self):
        return iter(self.problems)


_EDGE_TOL = 1e-9


def _finite(p: Point) -> bool:
    return math.isfinite(p.x) and math.isfinite(p.y)


def _inside(p: Point, w: float, h: float) -> bool:
    return -_EDGE_TOL <= p.x <= w + _EDGE_TOL and -_EDGE_TOL <= p.y <= h + _EDGE_TOL


def validate(s: Scenario) -> ValidationReport:
    """Check every scenario invariant; an empty report means well formed."""
    report = ValidationReport()
    w, h = s.room_width, s.room_height
    if not (math.isfinite(w) and w > 0 and math.isfinite(h) and h > 0):
        report.add("room", f"dimensions must be positive, got {w}x{h}")
        return report

    def check_point(entity, label, p):
        if not _finite(p):
            report.add(entity, f"{label} {tuple(p)} is not finite")
        elif not _inside(p, w, h):
            report.add(entity, f"{label} {tuple(p)} outside room {w}x{h}")

    if not s.links:
        report.add("links", "at least one logical link is required")
    seen_links: dict[int, int] = {}
    for n, link in enumerate(s.links):
        entity = f"link {link.id}"
        if link.id in seen_links:
            report.add(entity, f"duplicate link id (links[{seen_links[link.id]}] and links[{n}])")
        else:
            seen_links[link.id] = n
        check_point(entity, "source", link.source)
        check_point(entity, "destination", link.destination)
        if math.dist(link.source, link.destination) <= _EDGE_TOL:
            report.add(entity, "source and destination coincide")
        if link.demand is not None and not (math.isfinite(link.demand) and link.demand > 0):
            report.add(entity, f"demand must be positive, got {link.demand}")

    for n, ob in enumerate(s.obstacles):
        entity = f"obstacle {n}"
        if isinstance(ob, SegmentObstacle):
            check_point(entity, "endpoint p", ob.p)
            check_point(entity, "endpoint q", ob.q)
            if math.dist(ob.p, ob.q) <= _EDGE_TOL:
                report.add(entity, "segment endpoints coincide")
        else:
            check_point(entity, "center", ob.center)
            if not (math.isfinite(ob.radius) and ob.radius > 0):
                report.add(entity, f"disk radius must be positive, got {ob.radius}")

    seen_sites: dict[int, int] = {}
    for n, site in enumerate(s.sites):
        entity = f"site {site.id}"
        if site.id in seen_sites:
            report.add(entity, f"duplicate site id (sites[{seen_sites[site.id]}] and sites[{n}])")
        else:
            seen_sites[site.id] = n
        check_point(entity, "position", site.position)

    for f in fields(PhyParams):
        value = getattr(s.phy, f.name)
        if not (math.isfinite(value) and value > 0):
            report.add("phy", f"{f.name} must be strictly positive, got {value}")
    diagonal = math.hypot(w, h)
    if s.phy.comm_radius > diagonal + _EDGE_TOL:
        report.add("phy", f"comm_radius {s.phy.comm_radius} exceeds room diagonal {diagonal:.6g}")
    return report


def check(s: Scenario) -> Scenario:
    """Return ``s`` unchanged or raise ScenarioError listing every problem."""
    report = validate(s)
    if not report:
        msg = "; ".join(str(p) for p in report)
        raise ScenarioError(f"invalid scenario: {msg}", report.problems)
    return s


# --------------------------------------------------------------------------
# JSON format

_TOP_KEYS = {"format", "room", "phy", "links", "obstacles", "sites"}
_PHY_KEYS = {f.name for f in fields(PhyParams)}


class _Reader:
    """Walks the decoded JSON tree keeping a path for error messages."""

    def __init__(self, path="$"):
        self.path = path

    def fail(self, path, message):
        raise ScenarioError(f"{path}: {message}")

    def obj(self, value, path, required, optional=()):
        if not isinstance(value, dict):
            self.fail(path, "expected an object")
        unknown = set(value) - set(required) - set(optional)
        if unknown:
            self.fail(path, f"unknown key(s) {sorted(unknown)}")
        missing = [k for k in required if k not in value]
        if missing:
            self.fail(path, f"missing key(s) {missing}")
        return value

    def number(self, value, path):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            self.fail(path, "expected a number")
        return float(value)

    def integer(self, value, path):
        if isinstance(value, bool) or not isinstance(value, int):
            self.fail(path, "expected an integer")
        return value

    def point(self, value, path):
        if not (isinstance(value, list) and len(value) == 2):
            self.fail(path, "expected a [x, y] pair")
        return Point(self.number(value[0], f"{path}[0]"), self.number(value[1], f"{path}[1]"))

    def array(self, value, path):
        if not isinstance(value, list):
            self.fail(path, "expected an array")
        return value


def _decode(doc) -> Scenario:
    rd = _Reader()
    rd.obj(doc, "$", required=("format", "room", "links"), optional=("phy", "obstacles", "sites"))
    if doc["format"] != FORMAT_VERSION or isinstance(doc["format"], bool):
        rd.fail("$.format", f"unsupported format {doc['format']!r}, expected {FORMAT_VERSION}")

    room = rd.obj(doc["room"], "$.room", required=("width", "height"))
    width = rd.number(room["width"], "$.room.width")
    height = rd.number(room["height"], "$.room.height")

    phy_doc = rd.obj(doc.get("phy", {}), "$.phy", required=(), optional=_PHY_KEYS)
    phy = PhyParams(**{k: rd.number(v, f"$.phy.{k}") for k, v in phy_doc.items()})

    links = []
    for n, item in enumerate(rd.array(doc["links"], "$.links")):
        path = f"$.links[{n}]"
        rd.obj(item, path, required=("id", "source", "destination"), optional=("demand",))
        demand = item.get("demand")
        links.append(LogicalLink(
            id=rd.integer(item["id"], f"{path}.id"),
            source=rd.point(item["source"], f"{path}.source"),
            destination=rd.point(item["destination"], f"{path}.destination"),
            demand=None if demand is None else rd.number(demand, f"{path}.demand"),
        ))

    obstacles: list[Obstacle] = []
    for n, item in enumerate(rd.array(doc.get("obstacles", []), "$.obstacles")):
        path = f"$.obstacles[{n}]"
        if not isinstance(item, dict) or "kind" not in item:
            rd.fail(path, "expected an object with a 'kind'")
        if item["kind"] == "segment":
            rd.obj(item, path, required=("kind", "p", "q"))
            obstacles.append(SegmentObstacle(rd.point(item["p"], f"{path}.p"), rd.point(item["q"], f"{path}.q")))
        elif item["kind"] == "disk":
            rd.obj(item, path, required=("kind", "center", "radius"))
            obstacles.append(DiskObstacle(rd.point(item["center"], f"{path}.center"),
                                          rd.number(item["radius"], f"{path}.radius")))
        else:
            rd.fail(f"{path}.kind", f"unknown obstacle kind {item['kind']!r}")

    sites = []
    for n, item in enumerate(rd.array(doc.get("sites", []), "$.sites")):
        path = f"$.sites[{n}]"
        rd.obj(item, path, required=("id", "position"))
        sites.append(RelaySite(rd.integer(item["id"], f"{path}.id"), rd.point(item["position"], f"{path}.position")))

    return Scenario(width, height, tuple(links), tuple(obstacles), tuple(sites), phy)


def load_scenario(text: str) -> Scenario:
    """Parse and validate a scenario document.

    Raises ScenarioError carrying the line/column of a syntax error, the JSON
    path of a malformed field, or the list of violated invariants.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ScenarioError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    return check(_decode(doc))


def scenario_to_dict(s: Scenario) -> dict:
    def pt(p):
        return [p.x, p.y]

    def obstacle(ob):
        if isinstance(ob, SegmentObstacle):
            return {"kind": "segment", "p": pt(ob.p), "q": pt(ob.q)}
        return {"kind": "disk", "center": pt(ob.center), "radius": ob.radius}

    def link(li):
        d = {"id": li.id, "source": pt(li.source), "destination": pt(li.destination)}
        if li.demand is not None:
            d["demand"] = li.demand
        return d

    return {
        "format": FORMAT_VERSION,
        "room": {"width": s.room_width, "height": s.room_height},
        "phy": {f.name: getattr(s.phy, f.name) for f in fields(PhyParams)},
        "links": [link(li) for li in s.links],
        "obstacles": [obstacle(ob) for ob in s.obstacles],
        "sites": [{"id": st.id, "position": pt(st.position)} for st in s.sites],
    }


def dump_scenario(s: Scenario) -> str:
    return json.dumps(scenario_to_dict(s), indent=2) + "\n"


# --------------------------------------------------------------------------
# random generation

# bar obstacles: length drawn uniformly from this range (meters)
BAR_LENGTH = (0.5, 2.0)


def grid_sites(width: float, height: float, spacing: float) -> tuple[RelaySite, ...]:
    """Candidate sites at every grid point (i*d0, j*d0) strictly inside the room."""
    if spacing <= 0:
        raise ValueError("grid spacing must be positive")
    nx = int(math.floor(width / spacing + 1e-9))
    ny = int(math.floor(height / spacing + 1e-9))
    sites = []
    for j in range(1, ny + 1):
        for i in range(1, nx + 1):
            x, y = i * spacing, j * spacing
            if x < width - _EDGE_TOL and y < height - _EDGE_TOL:
                sites.append(RelaySite(len(sites), Point(x, y)))
    return tuple(sites)


def generate_random(seed: int, n_links: int, n_obstacles: int, grid_spacing: float,
                    room: tuple[float, float] = (10.0, 10.0), phy: PhyParams | None = None) -> Scenario:
    """Draw a scenario the way the evaluation setup does.

    Devices are uniform in the room; each destination is redrawn until it
    lies within the communication radius of its source, so every link has a
    defined base demand. Obstacles are bars with uniform center, orientation
    and length in ``BAR_LENGTH``, redrawn until both ends are inside. The
    result is not validated here (``n_links=0`` yields an invalid scenario).
    """
    if grid_spacing <= 0:
        raise ValueError("grid spacing must be positive")
    if n_links < 0 or n_obstacles < 0:
        raise ValueError("counts must be non-negative")
    phy = phy or PhyParams()
    width, height = room
    rng = np.random.default_rng(seed)

    def uniform_point():
        return Point(float(rng.uniform(0, width)), float(rng.uniform(0, height)))

    links = []
    for i in range(n_links):
        src = uniform_point()
        while True:
            dst = uniform_point()
            if 1e-6 < math.dist(src, dst) <= phy.comm_radius:
                break
        links.append(LogicalLink(i, src, dst))

    obstacles = []
    while len(obstacles) < n_obstacles:
        c = uniform_point()
        theta = rng.uniform(0, math.pi)
        half = rng.uniform(*BAR_LENGTH) / 2
        dx, dy = half * math.cos(theta), half * math.sin(theta)
        p, q = Point(c.x - dx, c.y - dy), Point(c.x + dx, c.y + dy)
        if _inside(p, width, height) and _inside(q, width, height):
            obstacles.append(SegmentObstacle(p, q))

    return Scenario(float(width), float(height), tuple(links), tuple(obstacles),
                    grid_sites(width, height, grid_spacing), phy)


def with_links(s: Scenario, links) -> Scenario:
    return replace(s, links=tuple(links))
