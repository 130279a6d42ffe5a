"""Discrete-time random-walk blockage simulation.

Each human subject is a disk doing a random walk with fixed step length and
a small set of relative turns. A link is in outage at a step when every path
it may use is occluded by a subject or a static obstacle.

Seeding: subject ``j`` of replica ``r`` draws from its own stream
``SeedSequence(seed, spawn_key=(r, j))``. Adding subjects or replicas leaves
every existing trajectory unchanged, and results do not depend on how
replicas are split across worker processes.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .geometry import EPS_GEO, segment_blocked
from .robust import PlacementSolution
from .scenario import Point, Scenario

RESAMPLE_LIMIT = 10
# turn draws are taken from each subject's stream in blocks of this many steps
DRAW_BLOCK = 1024
_COMPASS = np.deg2rad(np.arange(0.0, 360.0, 45.0))


@dataclass(frozen=True)
class SubjectState:
    center: Point
    heading: float  # degrees in [0, 360)
    radius: float = 0.3


@dataclass(frozen=True)
class SimConfig:
    n_subjects: int
    n_steps: int
    step_length: float = 0.3
    turn_set: tuple[float, ...] = (-90.0, -45.0, 0.0, 45.0, 90.0)
    seed: int = 0
    replicas: int = 1
    radius: float = 0.3
    resample_limit: int = RESAMPLE_LIMIT

    def __post_init__(self):
        if self.n_subjects < 0 or self.n_steps < 1:
            raise ValueError("need n_subjects >= 0 and n_steps >= 1")
        if not self.step_length > 0:
            raise ValueError("step_length must be positive")
        if not self.turn_set:
            raise ValueError("turn_set must be nonempty")
        if self.replicas < 1:
            raise ValueError("replicas must be >= 1")
        if self.radius < 0 or self.resample_limit < 0:
            raise ValueError("radius and resample_limit must be non-negative")


def subject_rng(seed: int, replica: int, subject: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(replica, subject)))


def _inside(x, y, w, h):
    return (x >= 0.0) & (x <= w) & (y >= 0.0) & (y <= h)


def step_subject(state: SubjectState, rng: np.random.Generator, room: tuple[float, float],
                 cfg: SimConfig) -> SubjectState:
    """One random-walk step for a single subject.

    Draws a turn relative to the current heading; if the move would leave the
    room the turn is redrawn up to ``cfg.resample_limit`` times, then the
    heading is reversed, then the eight compass directions are tried in
    order. The displacement is always exactly ``cfg.step_length``.
    """
    turns = np.asarray(cfg.turn_set, dtype=float)
    draws = rng.integers(0, len(turns), size=cfg.resample_limit + 1)
    heading, ok = _choose(np.array([[state.center[0], state.center[1]]]), np.array([np.deg2rad(state.heading)]),
                          np.deg2rad(turns)[draws][None, :], room, cfg.step_length)
    x = state.center[0] + cfg.step_length * math.cos(heading[0])
    y = state.center[1] + cfg.step_length * math.sin(heading[0])
    return SubjectState(Point(float(x), float(y)), float(np.rad2deg(heading[0]) % 360.0), state.radius)


def _choose(pos, heading, turn_rad, room, step):
    """Vectorised heading choice; ``turn_rad`` holds the candidate turns per subject."""
    w, h = room
    cand = heading[:, None] + turn_rad
    ok = _inside(pos[:, 0:1] + step * np.cos(cand), pos[:, 1:2] + step * np.sin(cand), w, h)
    first = np.argmax(ok, axis=1)
    found = ok[np.arange(len(pos)), first]
    new = cand[np.arange(len(pos)), first]
    if not found.all():
        miss = ~found
        back = heading[miss] + math.pi
        back_ok = _inside(pos[miss, 0] + step * np.cos(back), pos[miss, 1] + step * np.sin(back), w, h)
        comp = _COMPASS[None, :]
        comp_ok = _inside(pos[miss, 0:1] + step * np.cos(comp), pos[miss, 1:2] + step * np.sin(comp), w, h)
        # reversal is always possible after the first step; compass covers the initial pose
        fallback = np.where(back_ok, back, _COMPASS[np.argmax(comp_ok, axis=1)])
        new[miss] = fallback
    return np.mod(new, 2 * math.pi), found


def is_path_blocked(path: Sequence[Point], subjects: Sequence[SubjectState], obstacles=()) -> bool:
    """True iff any hop of ``path`` is occluded by a subject disk or a static obstacle."""
    if len(path) not in (2, 3):
        raise ValueError("path must have 2 or 3 points")
    for a, b in zip(path, path[1:]):
        if any(segment_blocked(a, b, o) for o in obstacles):
            return True
        for s in subjects:
            if _seg_dist(np.array([s.center]), a, b)[0] <= s.radius + EPS_GEO:
                return True
    return False


def _seg_dist(pts: np.ndarray, a, b) -> np.ndarray:
    """Distances from points ``pts[..., 2]`` to segment ab."""
    ax, ay = a
    dx, dy = b[0] - ax, b[1] - ay
    len2 = dx * dx + dy * dy
    px, py = pts[..., 0] - ax, pts[..., 1] - ay
    t = np.zeros_like(px) if len2 == 0.0 else np.clip((px * dx + py * dy) / len2, 0.0, 1.0)
    return np.hypot(px - t * dx, py - t * dy)


# --------------------------------------------------------------------------
# link paths


@dataclass(frozen=True)
class LinkPaths:
    """Per link, the alternative paths; an outage needs all of them blocked."""

    link_id: int
    paths: tuple[tuple[Point, ...], ...]


def link_paths(scenario: Scenario, placement: Optional[PlacementSolution]) -> list[LinkPaths]:
    out = []
    for link in scenario.links:
        s, d = link.source, link.destination
        if placement is None:
            out.append(LinkPaths(link.id, ((s, d),)))
            continue
        if link.id not in placement.secondary:
            # not served by the placement: only the direct path remains
            out.append(LinkPaths(link.id, ((s, d),)))
            continue
        prim = placement.primary.get(link.id)
        first = (s, d) if prim is None else (s, scenario.site(prim).position, d)
        second = (s, scenario.site(placement.secondary[link.id]).position, d)
        out.append(LinkPaths(link.id, (first, second)))
    return out


def _segment_table(paths: list[LinkPaths], obstacles):
    """Unique hop segments, their static blockage, and per-path segment indices."""
    segs: dict[tuple, int] = {}
    path_segs = []
    for lp in paths:
        per_link = []
        for path in lp.paths:
            ids = []
            for a, b in zip(path, path[1:]):
                key = (tuple(a), tuple(b))
                if key not in segs:
                    segs[key] = len(segs)
                ids.append(segs[key])
            per_link.append(ids)
        path_segs.append(per_link)
    seg_list = list(segs)
    static = np.array([any(segment_blocked(a, b, o) for o in obstacles) for a, b in seg_list], dtype=bool)
    return seg_list, static, path_segs


# --------------------------------------------------------------------------
# simulation


def _walk(room: tuple[float, float], cfg: SimConfig, replicas: Sequence[int]):
    """Yield subject centers (len(replicas) * n_subjects, 2) after every step, replica-major."""
    m = cfg.n_subjects
    turns = np.deg2rad(np.asarray(cfg.turn_set, dtype=float))
    width = cfg.resample_limit + 1
    rngs = [subject_rng(cfg.seed, r, j) for r in replicas for j in range(m)]
    init = np.array([g.random(3) for g in rngs]).reshape(len(rngs), 3)
    pos = np.column_stack([init[:, 0] * room[0], init[:, 1] * room[1]])
    heading = init[:, 2] * 2 * math.pi
    draws = None
    for step in range(cfg.n_steps):
        if rngs:
            off = step % DRAW_BLOCK
            if off == 0:
                draws = np.stack([g.integers(0, len(turns), size=(DRAW_BLOCK, width)) for g in rngs], axis=1)
            heading, _ = _choose(pos, heading, turns[draws[off]], room, cfg.step_length)
            pos = pos + cfg.step_length * np.column_stack([np.cos(heading), np.sin(heading)])
        yield pos


def subject_trajectories(scenario: Scenario, cfg: SimConfig, replica: int = 0) -> np.ndarray:
    """Centers of every subject after each step: shape (n_steps, n_subjects, 2)."""
    room = (scenario.room_width, scenario.room_height)
    return np.array([pos.copy() for pos in _walk(room, cfg, [replica])]).reshape(cfg.n_steps, cfg.n_subjects, 2)


@dataclass(frozen=True)
class RelayLoads:
    """Airtime fractions used when overloaded relays starve failover traffic.

    Per link: primary site and load (site -1 for a direct primary), secondary
    site and load, all already scaled by the placement's demand scale.
    """

    primary_site: tuple[int, ...]
    primary_load: tuple[float, ...]
    secondary_site: tuple[int, ...]
    secondary_load: tuple[float, ...]
    n_sites: int


def relay_loads(scenario: Scenario, placement: PlacementSolution, paths: list[LinkPaths]) -> RelayLoads:
    from .geometry import compute_feasibility

    data = compute_feasibility(scenario, check_overlap=False)
    col = {k: n for n, k in enumerate(data.sites)}
    scale = placement.alpha if placement.alpha is not None else 1.0
    ps, pl, ss, sl = [], [], [], []
    for lp in paths:
        i = lp.link_id
        prim = placement.primary.get(i)
        sec = placement.secondary.get(i)
        ps.append(-1 if prim is None else col[prim])
        pl.append(0.0 if prim is None else scale * data.load(i, prim))
        ss.append(-1 if sec is None else col[sec])
        sl.append(0.0 if sec is None else scale * data.load(i, sec))
    return RelayLoads(tuple(ps), tuple(pl), tuple(ss), tuple(sl), len(data.sites))


def _starve(path_blocked: np.ndarray, loads: RelayLoads, tol: float = 1e-9) -> np.ndarray:
    """Outage under relay capacity limits; ``path_blocked`` is (replicas, links, 2).

    A link whose primary is up uses it (loading its primary relay, if any).
    Links that fail over are admitted on their secondary relay in link order
    until its airtime runs out; the rest are in outage.
    """
    prim_up = ~path_blocked[:, :, 0]
    failover = path_blocked[:, :, 0] & ~path_blocked[:, :, 1]
    n_r, n_l = prim_up.shape
    used = np.zeros((n_r, loads.n_sites))
    for li in range(n_l):
        k = loads.primary_site[li]
        if k >= 0:
            used[:, k] += prim_up[:, li] * loads.primary_load[li]
    out = path_blocked.all(axis=2)
    for li in range(n_l):
        k = loads.secondary_site[li]
        if k < 0:
            continue
        want = failover[:, li]
        fits = used[:, k] + loads.secondary_load[li] <= 1.0 + tol
        ok = want & fits
        used[:, k] += ok * loads.secondary_load[li]
        # once one link is refused, later ones on the same relay are refused too
        used[:, k] = np.where(want & ~fits, math.inf, used[:, k])
        out[:, li] |= want & ~ok
    return out


def _simulate_chunk(scenario: Scenario, paths: list[LinkPaths], cfg: SimConfig,
                    replicas: Sequence[int], loads: Optional[RelayLoads] = None) -> np.ndarray:
    """Outage indicator of shape (n_steps, len(replicas), n_links)."""
    n_r, m, n_l = len(replicas), cfg.n_subjects, len(paths)
    room = (scenario.room_width, scenario.room_height)
    seg_list, static, path_segs = _segment_table(paths, scenario.obstacles)
    out = np.zeros((cfg.n_steps, n_r, n_l), dtype=bool)
    seg_a = np.array([a for a, _ in seg_list], dtype=float)
    seg_b = np.array([b for _, b in seg_list], dtype=float)
    reach = cfg.radius + EPS_GEO

    def outage(hit):
        per_path = np.ones((n_r, n_l, 2), dtype=bool)
        for li, per_link in enumerate(path_segs):
            for pi, ids in enumerate(per_link):
                per_path[:, li, pi] = hit[:, ids].any(axis=1)
        if loads is not None:
            return _starve(per_path, loads)
        return per_path.all(axis=2)

    if m == 0:
        out[:] = outage(np.broadcast_to(static, (n_r, len(static))))[None]
        return out
    for step, pos in enumerate(_walk(room, cfg, replicas)):
        d = _dist_matrix(pos, seg_a, seg_b)
        out[step] = outage((d <= reach).reshape(n_r, m, -1).any(axis=1) | static[None, :])
    return out


def _dist_matrix(pts: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = b - a
    len2 = np.einsum("ij,ij->i", d, d)
    rel = pts[:, None, :] - a[None, :, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        t = np.where(len2 > 0, np.einsum("pij,ij->pi", rel, d) / len2, 0.0)
    t = np.clip(t, 0.0, 1.0)
    return np.linalg.norm(rel - t[..., None] * d[None, :, :], axis=2)


def run_lengths(blocked: np.ndarray) -> list[int]:
    """Lengths of maximal runs of True in a 1-D boolean array."""
    b = np.concatenate([[False], np.asarray(blocked, dtype=bool), [False]])
    edges = np.flatnonzero(np.diff(b.astype(np.int8)))
    return (edges[1::2] - edges[::2]).tolist()


def confidence_interval(samples, level: float = 0.90) -> tuple[float, float]:
    """Mean and t-based half-width; half-width is NaN with fewer than 2 samples
    and inf at level 1."""
    x = np.asarray(samples, dtype=float)
    if not 0.0 < level <= 1.0:
        raise ValueError("level must be in (0, 1]")
    if len(x) == 0:
        return math.nan, math.nan
    mean = float(x.mean())
    if len(x) < 2:
        return mean, math.nan
    sd = float(x.std(ddof=1))
    if level >= 1.0:
        return mean, math.inf if sd > 0 else 0.0
    return mean, float(stats.t.ppf(0.5 + level / 2, len(x) - 1) * sd / math.sqrt(len(x)))


@dataclass
class BlockageStats:
    link_ids: tuple[int, ...]
    n_steps: int
    replicas: int
    blocked_steps: np.ndarray           # (replicas, links)
    durations: dict[int, list[int]]     # pooled run lengths in steps, replica order
    replica_mean_durations: np.ndarray  # (replicas, links), NaN where a replica saw no outage
    level: float = 0.90
    events: Optional[list[tuple[int, int, int, bool]]] = None  # (replica, step, link, blocked)
    outage: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def fraction(self) -> np.ndarray:
        return self.blocked_steps.sum(axis=0) / (self.n_steps * self.replicas)

    @property
    def replica_fraction(self) -> np.ndarray:
        return self.blocked_steps / self.n_steps

    def duration_ci(self) -> list[tuple[float, float]]:
        """Per link: mean over replicas of the replica-mean outage duration, and CI half-width."""
        out = []
        for li in range(len(self.link_ids)):
            col = self.replica_mean_durations[:, li]
            out.append(confidence_interval(col[~np.isnan(col)], self.level))
        return out

    def mean_fraction(self) -> float:
        return float(self.fraction.mean()) if len(self.link_ids) else 0.0

    def to_csv(self, step_seconds: float = 1.0) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["link_id", "blockage_fraction", "mean_duration", "ci_halfwidth"])
        for lid, frac, (mean, half) in zip(self.link_ids, self.fraction, self.duration_ci()):
            w.writerow([lid, repr(float(frac)), repr(mean * step_seconds), repr(half * step_seconds)])
        return buf.getvalue()

    def events_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["replica", "step", "link_id", "state"])
        for r, step, lid, blocked in self.events or ():
            w.writerow([r, step, lid, "blocked" if blocked else "unblocked"])
        return buf.getvalue()


def _events(outage: np.ndarray, link_ids) -> list[tuple[int, int, int, bool]]:
    """State changes, with step 0 reported when a link starts blocked."""
    prev = np.concatenate([np.zeros((1,) + outage.shape[1:], dtype=bool), outage[:-1]])
    steps, reps, links = np.nonzero(outage != prev)
    order = np.lexsort((links, steps, reps))
    return [(int(reps[n]), int(steps[n]), link_ids[links[n]], bool(outage[steps[n], reps[n], links[n]]))
            for n in order]


def run_blockage_sim(scenario: Scenario, placement: Optional[PlacementSolution], cfg: SimConfig,
                     workers: int = 1, events: bool = False, keep_outage: bool = False,
                     level: float = 0.90, capacity_aware: bool = False) -> BlockageStats:
    """Monte-Carlo outage statistics for every link of ``scenario``.

    Without a placement a link is down whenever its direct path is occluded.
    With one, it is down only while both its primary path (direct for LOS
    links) and its secondary path are occluded.
    """
    w, h = scenario.room_width, scenario.room_height
    if min(w, h) < 2 * cfg.step_length:
        raise ValueError("room is too small for the step length")
    paths = link_paths(scenario, placement)
    loads = relay_loads(scenario, placement, paths) if capacity_aware and placement is not None else None
    reps = list(range(cfg.replicas))
    if workers > 1 and cfg.replicas > 1:
        chunks = [reps[n::workers] for n in range(workers) if reps[n::workers]]
        with ProcessPoolExecutor(max_workers=len(chunks)) as pool:
            parts = list(pool.map(_simulate_chunk, [scenario] * len(chunks), [paths] * len(chunks),
                                  [cfg] * len(chunks), chunks, [loads] * len(chunks)))
        outage = np.zeros((cfg.n_steps, cfg.replicas, len(paths)), dtype=bool)
        for chunk, part in zip(chunks, parts):
            outage[:, chunk, :] = part
    else:
        outage = _simulate_chunk(scenario, paths, cfg, reps, loads)

    link_ids = tuple(lp.link_id for lp in paths)
    blocked = outage.sum(axis=0)
    durations: dict[int, list[int]] = {lid: [] for lid in link_ids}
    rep_mean = np.full((cfg.replicas, len(link_ids)), math.nan)
    for r in reps:
        for li, lid in enumerate(link_ids):
            runs = run_lengths(outage[:, r, li])
            durations[lid].extend(runs)
            if runs:
                rep_mean[r, li] = float(np.mean(runs))
    return BlockageStats(link_ids, cfg.n_steps, cfg.replicas, blocked, durations, rep_mean, level,
                         _events(outage, link_ids) if events else None, outage if keep_outage else None)
