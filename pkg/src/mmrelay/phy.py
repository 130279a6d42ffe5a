"""AWGN Shannon rate model and per-relay unit transmission times."""

from __future__ import annotations

import math
from dataclasses import dataclass

# distances within this of the radius still count as in range
RANGE_TOL = 1e-9


@dataclass(frozen=True)
class RateResult:
    rate: float  # bits/s
    in_range: bool


def shannon_rate(distance: float, phy) -> RateResult:
    """W * log2(1 + Pt*Gt*Gr / (Pn * D^gamma)) inside the comm radius, else 0."""
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance}")
    if distance > phy.comm_radius + RANGE_TOL:
        return RateResult(0.0, False)
    snr = phy.tx_power * phy.gain_tx * phy.gain_rx / (phy.noise_floor * distance ** phy.path_loss_exponent)
    return RateResult(phy.channel_bandwidth * math.log2(1.0 + snr), True)


def rate(distance: float, phy) -> float:
    return shannon_rate(distance, phy).rate


def harmonic_time(r1: float, r2: float) -> float:
    """Seconds per bit when relaying over hops with rates r1 and r2."""
    if r1 <= 0 or r2 <= 0:
        raise ValueError("relay hop out of range (zero rate)")
    return 1.0 / r1 + 1.0 / r2


def relay_unit_time(link, site, obstacles, phy) -> float:
    """tau_ik for relaying ``link`` through ``site``.

    Visibility of the hops is the caller's precondition; only range is
    rechecked here since a zero-rate hop makes tau undefined.
    """
    r1 = rate(math.dist(link.source, site.position), phy)
    r2 = rate(math.dist(site.position, link.destination), phy)
    return harmonic_time(r1, r2)


def base_demand(link, phy) -> float:
    """Explicit demand if present, else a third of the direct-distance capacity.

    For NLOS links the unobstructed direct distance is used.
    """
    if link.demand is not None:
        return link.demand
    res = shannon_rate(math.dist(link.source, link.destination), phy)
    if not res.in_range:
        raise ValueError(f"link {link.id}: endpoints farther apart than comm radius and no explicit demand")
    return res.rate / 3.0
