"""Small hand-built scenarios shared by the test modules."""

import math

import numpy as np

from mmrelay.geometry import compute_feasibility
from mmrelay.lp import MilpModel
from mmrelay.lp.brute import enumerate_assignments
from mmrelay.robust import Assignment, add_structure
from mmrelay.errors import InfeasibleError, UnboundedError
from mmrelay.rmurp import closed_form_scale, initial_bracket
from mmrelay.robust import RobustConfig
from mmrelay.scenario import generate_random
from mmrelay.phy import shannon_rate
from mmrelay.scenario import DiskObstacle, LogicalLink, Point, RelaySite, Scenario, SegmentObstacle

WALL = SegmentObstacle(Point(5.0, 4.0), Point(5.0, 6.0))


def scenario(links, sites=(), obstacles=(), room=(10.0, 10.0), phy=None):
    kw = {} if phy is None else {"phy": phy}
    return Scenario(room[0], room[1],
                    tuple(LogicalLink(n, Point(*s), Point(*d)) for n, (s, d) in enumerate(links)),
                    tuple(obstacles),
                    tuple(RelaySite(n, Point(*p)) for n, p in enumerate(sites)), **kw)


def los_one_site():
    """One LOS link (3,5)-(7,5) and a single site above it."""
    return scenario([((3, 5), (7, 5))], [(5, 7)])


def nlos_two_sites():
    """Link (3,5)-(7,5) cut by a wall, two sites on either side of the wall."""
    return scenario([((3, 5), (7, 5))], [(5, 7.5), (5, 2.5)], [WALL])


def nlos_one_site():
    return scenario([((3, 5), (7, 5))], [(5, 7.5)], [WALL])


def data_of(sc):
    return compute_feasibility(sc)


def rate(d, phy):
    """Rate evaluated from scratch, independent of the library's rate code."""
    if d > phy.comm_radius:
        return 0.0
    snr = phy.tx_power * phy.gain_tx * phy.gain_rx / (phy.noise_floor * d ** phy.path_loss_exponent)
    return phy.channel_bandwidth * math.log2(1.0 + snr)


def unit_time(a, k, b, phy):
    return 1.0 / rate(math.dist(a, k), phy) + 1.0 / rate(math.dist(k, b), phy)


def structural_binaries(data):
    return 2 * len(data.pairs) + len(data.sites)


def gbd_instances(count, start=1000):
    """Small utility instances an enumeration over assignments can check.

    8m x 6m rooms (six candidate sites), two or three links, every link
    coverable, at most 24 structural binaries, random budget index and relay cap.
    Yields (seed, data, cfg).
    """
    seed = start
    while count:
        rng = np.random.default_rng(seed)
        sc = generate_random(seed, int(rng.integers(2, 4)), int(rng.integers(2, 6)), 2.0, room=(8.0, 6.0))
        seed += 1
        data = compute_feasibility(sc, False)
        if data.excluded or not data.feasible_links or structural_binaries(data) > 24:
            continue
        rho = float(rng.choice([0.25, 0.5, 1.0]))
        cfg = RobustConfig(rho=rho, max_relays=int(rng.integers(2, len(data.sites) + 1)))
        try:
            initial_bracket(data, cfg)
        except (InfeasibleError, UnboundedError):
            continue
        count -= 1
        yield seed - 1, data, cfg


def lambda_oracle(data, cfg, alpha_cap=math.inf):
    """Best demand scale over every structurally valid assignment, by enumeration.

    Returns (alpha, assignment). Scales come from the closed form (one over the
    busiest relay's load), not from an LP.
    """
    model = MilpModel(name="structure")
    max_relays = cfg.max_relays if cfg.max_relays is not None else len(data.sites)
    idx = add_structure(model, data, max_relays)
    gammas = cfg.budgets(data)
    best, arg = -math.inf, None
    for row in enumerate_assignments(model):
        # the structure model has only binaries, in declaration order
        a = Assignment.from_vector(row, idx)
        v = closed_form_scale(data, gammas, a, alpha_cap)
        if v > best:
            best, arg = v, a
    return best, arg


__all__ = ["WALL", "scenario", "los_one_site", "nlos_two_sites", "nlos_one_site", "data_of", "rate", "unit_time",
           "lambda_oracle", "gbd_instances", "structural_binaries", "DiskObstacle", "SegmentObstacle", "Point", "shannon_rate"]
