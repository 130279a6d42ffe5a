"""Robust placement MILPs under the budgeted (D-norm) failure model.

Both formulations share the same binaries: ``x[i,k]`` (relay k carries the
primary path of link i), ``y[i,k]`` (secondary path) and ``z[k]`` (relay k
deployed). The worst case over at most Gamma_k simultaneous fail-overs at a
relay is replaced by its LP dual, which adds continuous ``p[i,k]`` and
``q[k]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

from .errors import InfeasibleError, LimitExceeded, MMRelayError, StructuralInfeasibility
from .geometry import FeasibilityData, compute_feasibility
from .lp import EQ, GE, LE, LIMIT, OPTIMAL, MilpModel, solve_lp, solve_milp
from .lp.solve import EPS_FEAS

PLACEMENT_FORMAT = 1


def gamma_from_rho(rho: float, size: int) -> int:
    """Budget Gamma_k = min(size, ceil(rho * size)).

    A 1e-9 slack keeps float products such as 0.7 * 10 from rounding up.
    """
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"robustness index must be in [0, 1], got {rho}")
    return min(size, max(0, math.ceil(rho * size - 1e-9)))


def protection_value(loads, gamma: int) -> float:
    """Worst-case secondary load: sum of the ``gamma`` largest loads."""
    loads = sorted((float(w) for w in loads), reverse=True)
    if not 0 <= gamma <= len(loads):
        raise ValueError(f"budget {gamma} outside [0, {len(loads)}]")
    return float(sum(loads[:gamma]))


def protection_dual_check(loads, gamma: int):
    """Solve the dual protection LP ``min q*gamma + sum(p)`` s.t. ``q + p_i >= w_i``.

    Returns ``(optimum, p, q)``. The optimum equals ``protection_value``; the
    minimiser is not unique (any q between the gamma-th and (gamma+1)-th
    largest load works).

    The LP is homogeneous in the loads, so it is solved on loads divided by
    the largest one and scaled back; tiny loads would otherwise sit inside
    the solver's absolute feasibility tolerance.
    """
    loads = [float(w) for w in loads]
    if not 0 <= gamma <= len(loads):
        raise ValueError(f"budget {gamma} outside [0, {len(loads)}]")
    scale = max((abs(w) for w in loads), default=0.0) or 1.0
    m = MilpModel(name="protection_dual")
    q = m.add_var("q")
    ps = [m.add_var(f"p_{n}") for n in range(len(loads))]
    for n, w in enumerate(loads):
        m.add_constraint({q: 1.0, ps[n]: 1.0}, GE, w / scale, name=f"cover_{n}")
    m.set_objective({q: float(gamma), **{p: 1.0 for p in ps}})
    sol = solve_lp(m)
    if not sol.optimal:
        raise MMRelayError(f"protection dual LP returned {sol.status}")
    return sol.objective * scale, sol.x[ps] * scale, float(sol.x[q]) * scale


def protection_primal_lp(loads, gamma: int):
    """LP relaxation ``max sum(w_i s_i)`` s.t. ``sum(s) <= gamma``, ``0 <= s <= 1``.

    Returns ``(optimum, s)``; used to check there is no integrality gap.
    Costs are normalised by the largest load, as in ``protection_dual_check``.
    """
    scale = max((abs(float(w)) for w in loads), default=0.0) or 1.0
    m = MilpModel(maximize=True, name="protection_primal")
    s = [m.add_var(f"s_{n}", 0.0, 1.0) for n in range(len(loads))]
    m.add_constraint({j: 1.0 for j in s}, LE, float(gamma), name="budget")
    m.set_objective({j: float(w) / scale for j, w in zip(s, loads)})
    sol = solve_lp(m)
    return sol.objective * scale, sol.x.copy()


@dataclass(frozen=True)
class RobustConfig:
    """Robustness index, optional explicit per-site budgets, relay cap."""

    rho: float = 1.0
    gammas: Optional[Mapping[int, int]] = None
    max_relays: Optional[int] = None

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError(f"robustness index must be in [0, 1], got {self.rho}")
        if self.max_relays is not None and self.max_relays < 1:
            raise ValueError("max_relays must be at least 1")

    def budgets(self, data: FeasibilityData) -> dict[int, int]:
        out = {}
        for k in data.sites:
            size = len(data.per_site[k])
            if self.gammas is not None and k in self.gammas:
                g = int(self.gammas[k])
                if not 0 <= g <= size:
                    raise ValueError(f"site {k}: budget {g} outside [0, {size}]")
            else:
                g = gamma_from_rho(self.rho, size)
            out[k] = g
        return out


@dataclass
class Index:
    """Variable indices of a placement formulation, keyed by (link, site)."""

    x: dict[tuple[int, int], int] = field(default_factory=dict)
    y: dict[tuple[int, int], int] = field(default_factory=dict)
    z: dict[int, int] = field(default_factory=dict)
    p: dict[tuple[int, int], int] = field(default_factory=dict)
    q: dict[int, int] = field(default_factory=dict)
    capacity_rows: dict[int, int] = field(default_factory=dict)
    protection_rows: dict[tuple[int, int], int] = field(default_factory=dict)

    def structural(self) -> list[int]:
        """Binary indices in a fixed order: x, y (site-major), then z."""
        return list(self.x.values()) + list(self.y.values()) + list(self.z.values())


@dataclass
class Formulation:
    model: MilpModel
    index: Index
    gammas: dict[int, int]
    alpha: Optional[float] = None
    diagnostics: list[str] = field(default_factory=list)


def structural_check(data: FeasibilityData, max_relays: Optional[int] = None) -> None:
    """Raise StructuralInfeasibility when coverage alone rules out every placement."""
    if not data.feasible_links:
        raise StructuralInfeasibility("no feasible logical links", ())
    bad = []
    for i in data.feasible_links:
        need = 2 if data.nlos[i] else 1
        if len(data.sites_of(i)) < need:
            bad.append(i)
    if bad:
        detail = ", ".join(f"link {i} ({'NLOS' if data.nlos[i] else 'LOS'}, "
                           f"{len(data.sites_of(i))} covering site(s))" for i in bad)
        raise StructuralInfeasibility(f"insufficient relay coverage: {detail}", bad)
    if max_relays is not None and max_relays < 2:
        nlos = [i for i in data.feasible_links if data.nlos[i]]
        if nlos:
            raise StructuralInfeasibility(
                f"NLOS link(s) {nlos} need disjoint primary and secondary relays (>= 2), max_relays={max_relays}",
                nlos)


def overloaded_pairs(data: FeasibilityData, alpha: float = 1.0) -> list[tuple[int, int]]:
    """(link, site) pairs whose single load alone exceeds one relay's airtime."""
    return [(i, k) for (i, k) in data.pairs if alpha * data.load(i, k) > 1.0 + EPS_FEAS]


def add_structure(model: MilpModel, data: FeasibilityData, max_relays: Optional[int] = None) -> Index:
    """Declare x, y, z and the path-selection rows shared by every formulation."""
    idx = Index()
    pairs = data.pairs
    for i, k in pairs:
        idx.x[(i, k)] = model.add_var(f"x_{i}_{k}", binary=True)
    for i, k in pairs:
        idx.y[(i, k)] = model.add_var(f"y_{i}_{k}", binary=True)
    for k in data.sites:
        idx.z[k] = model.add_var(f"z_{k}", binary=True)
    for i in data.feasible_links:
        ks = data.sites_of(i)
        model.add_constraint({idx.x[(i, k)]: 1.0 for k in ks}, EQ, float(data.nlos[i]), name=f"primary_{i}")
        model.add_constraint({idx.y[(i, k)]: 1.0 for k in ks}, EQ, 1.0, name=f"secondary_{i}")
    for i, k in pairs:
        model.add_constraint({idx.x[(i, k)]: 1.0, idx.y[(i, k)]: 1.0}, LE, 1.0, name=f"disjoint_{i}_{k}")
        model.add_constraint({idx.x[(i, k)]: 1.0, idx.z[k]: -1.0}, LE, 0.0, name=f"link_x_{i}_{k}")
        model.add_constraint({idx.y[(i, k)]: 1.0, idx.z[k]: -1.0}, LE, 0.0, name=f"link_y_{i}_{k}")
    if max_relays is not None:
        model.add_constraint({j: 1.0 for j in idx.z.values()}, LE, float(max_relays), name="cardinality")
    return idx


def add_capacity(model: MilpModel, idx: Index, data: FeasibilityData, gammas: dict[int, int],
                 alpha: float = 1.0) -> None:
    """TDMA rows with the dualised worst-case secondary load, demands scaled by ``alpha``."""
    for i, k in data.pairs:
        idx.p[(i, k)] = model.add_var(f"p_{i}_{k}")
    for k in data.sites:
        idx.q[k] = model.add_var(f"q_{k}")
    for k in data.sites:
        row = {idx.z[k]: -1.0, idx.q[k]: float(gammas[k])}
        for i in data.per_site[k]:
            row[idx.p[(i, k)]] = 1.0
            if data.nlos[i]:
                row[idx.x[(i, k)]] = alpha * data.load(i, k)
        idx.capacity_rows[k] = model.add_constraint(row, LE, 0.0, name=f"capacity_{k}")
    for i, k in data.pairs:
        idx.protection_rows[(i, k)] = model.add_constraint(
            {idx.q[k]: 1.0, idx.p[(i, k)]: 1.0, idx.y[(i, k)]: -alpha * data.load(i, k)}, GE, 0.0,
            name=f"protect_{i}_{k}")


def build_rmrp(data: FeasibilityData, cfg: RobustConfig) -> Formulation:
    """Minimum-relay MILP: min sum(z) under path, disjointness and capacity rows."""
    structural_check(data)
    gammas = cfg.budgets(data)
    model = MilpModel(name="rmrp")
    idx = add_structure(model, data)
    add_capacity(model, idx, data, gammas)
    model.set_objective({j: 1.0 for j in idx.z.values()})
    diag = [f"link {i} alone overloads site {k}" for i, k in overloaded_pairs(data)]
    return Formulation(model, idx, gammas, None, diag)


def build_rmurp_fixed_alpha(data: FeasibilityData, cfg: RobustConfig, alpha: float) -> Formulation:
    """Utility problem at a fixed demand scale ``alpha``: a feasibility MILP
    with at most ``cfg.max_relays`` relays, ties broken by fewest relays."""
    if alpha < 0:
        raise ValueError("alpha must be non-negative")
    structural_check(data, cfg.max_relays)
    gammas = cfg.budgets(data)
    model = MilpModel(name=f"rmurp_alpha_{alpha!r}")
    idx = add_structure(model, data, cfg.max_relays)
    add_capacity(model, idx, data, gammas, alpha)
    model.set_objective({j: 1.0 for j in idx.z.values()})
    diag = [f"link {i} alone overloads site {k} at alpha={alpha}" for i, k in overloaded_pairs(data, alpha)]
    return Formulation(model, idx, gammas, alpha, diag)


# --------------------------------------------------------------------------
# decoded placements


@dataclass
class PlacementSolution:
    """A decoded placement. ``primary[i]`` is None for links served directly."""

    selected: tuple[int, ...]
    primary: dict[int, Optional[int]]
    secondary: dict[int, int]
    objective: float
    gammas: dict[int, int]
    rho: Optional[float] = None
    max_relays: Optional[int] = None
    alpha: Optional[float] = None
    utility: Optional[float] = None
    p: dict[tuple[int, int], float] = field(default_factory=dict)
    q: dict[int, float] = field(default_factory=dict)
    problem: str = "rmrp"
    algorithm: Optional[str] = None
    nlos: dict[int, int] = field(default_factory=dict)

    @property
    def relay_count(self) -> int:
        return len(self.selected)

    def assignment(self) -> "Assignment":
        x = frozenset((i, k) for i, k in self.primary.items() if k is not None)
        y = frozenset(self.secondary.items())
        return Assignment(x, y, frozenset(self.selected))


@dataclass(frozen=True)
class Assignment:
    """Binary part of a placement as sets: x pairs, y pairs and selected sites."""

    x: frozenset
    y: frozenset
    z: frozenset

    def vector(self, idx: Index) -> dict[int, float]:
        vals = {j: 0.0 for j in idx.structural()}
        for pair in self.x:
            vals[idx.x[pair]] = 1.0
        for pair in self.y:
            vals[idx.y[pair]] = 1.0
        for k in self.z:
            vals[idx.z[k]] = 1.0
        return vals

    @classmethod
    def from_vector(cls, x, idx: Index) -> "Assignment":
        def on(j):
            return x[j] > 0.5
        return cls(frozenset(p for p, j in idx.x.items() if on(j)),
                   frozenset(p for p, j in idx.y.items() if on(j)),
                   frozenset(k for k, j in idx.z.items() if on(j)))


def site_loads(data: FeasibilityData, a: Assignment, gammas: dict[int, int], alpha: float = 1.0) -> dict[int, float]:
    """Primary load plus worst-case secondary load on every site."""
    out = {}
    for k in data.sites:
        prim = sum(alpha * data.load(i, kk) for (i, kk) in a.x if kk == k and data.nlos[i])
        sec = [alpha * data.load(i, kk) for (i, kk) in a.y if kk == k]
        # the budget counts over every link the site covers; absent links contribute zero load
        sec += [0.0] * (len(data.per_site[k]) - len(sec))
        out[k] = prim + protection_value(sec, gammas[k])
    return out


def check_placement(sol: PlacementSolution, data: FeasibilityData, tol: float = 1e-7) -> list[str]:
    """Return every violated placement invariant (empty when valid)."""
    errs = []
    alpha = sol.alpha if sol.alpha is not None else 1.0
    selected = set(sol.selected)
    for i in data.feasible_links:
        prim = sol.primary.get(i)
        if data.nlos[i] and prim is None:
            errs.append(f"link {i}: NLOS link without primary relay")
        if not data.nlos[i] and prim is not None:
            errs.append(f"link {i}: LOS link assigned a primary relay")
        if i not in sol.secondary:
            errs.append(f"link {i}: no secondary relay")
            continue
        sec = sol.secondary[i]
        if prim is not None and prim == sec:
            errs.append(f"link {i}: primary and secondary share relay {sec}")
        for role, k in (("primary", prim), ("secondary", sec)):
            if k is None:
                continue
            if i not in data.per_site.get(k, ()):
                errs.append(f"link {i}: {role} relay {k} does not cover the link")
            if k not in selected:
                errs.append(f"link {i}: {role} relay {k} not selected")
    extra = set(sol.primary) - set(data.feasible_links)
    if extra:
        errs.append(f"assignments for unknown links {sorted(extra)}")
    if any(i not in data.per_site.get(k, ()) for i, k in sol.secondary.items()):
        return errs
    loads = site_loads(data, sol.assignment(), sol.gammas, alpha)
    for k, load in loads.items():
        cap = 1.0 if k in selected else 0.0
        if load > cap + tol:
            errs.append(f"site {k}: load {load:.9g} exceeds capacity {cap}")
    if sol.max_relays is not None and len(selected) > sol.max_relays:
        errs.append(f"{len(selected)} relays exceed max_relays={sol.max_relays}")
    return errs


def decode(form: Formulation, x, data: FeasibilityData, objective: float, cfg: RobustConfig,
           problem: str = "rmrp", alpha: Optional[float] = None) -> PlacementSolution:
    idx = form.index
    a = Assignment.from_vector(x, idx)
    primary = {i: None for i in data.feasible_links}
    for i, k in a.x:
        primary[i] = k
    secondary = {i: k for i, k in sorted(a.y)}
    sol = PlacementSolution(
        selected=tuple(sorted(a.z)), primary=primary, secondary=secondary, objective=float(objective),
        gammas=dict(form.gammas), rho=cfg.rho, max_relays=cfg.max_relays, alpha=alpha,
        utility=None if alpha is None else alpha * sum(data.demands[i] for i in data.feasible_links),
        p={pair: float(x[j]) for pair, j in idx.p.items()}, q={k: float(x[j]) for k, j in idx.q.items()},
        problem=problem, nlos=dict(data.nlos))
    errs = check_placement(sol, data)
    if errs:
        raise MMRelayError("decoded placement violates invariants: " + "; ".join(errs))
    return sol


def _run(form: Formulation, limits: Optional[dict]):
    res = solve_milp(form.model, **(limits or {}))
    if res.status == LIMIT:
        raise LimitExceeded(f"{form.model.name}: solver limit reached (gap {res.gap:.3g})", res.x, res.gap)
    return res


def solve_rmrp_data(data: FeasibilityData, cfg: RobustConfig, limits: Optional[dict] = None) -> PlacementSolution:
    form = build_rmrp(data, cfg)
    res = _run(form, limits)
    if res.status != OPTIMAL:
        raise InfeasibleError(f"RMRP infeasible (solver status {res.status})")
    return decode(form, res.x, data, res.objective, cfg, "rmrp")


def solve_rmrp(scenario, rho: float, limits: Optional[dict] = None) -> PlacementSolution:
    """Feasibility sets, MILP and decode for the minimum-relay problem."""
    return solve_rmrp_data(compute_feasibility(scenario), RobustConfig(rho=rho), limits)


def solve_fixed_alpha(data: FeasibilityData, cfg: RobustConfig, alpha: float,
                      limits: Optional[dict] = None) -> Optional[PlacementSolution]:
    """Feasible placement at demand scale ``alpha`` or None."""
    form = build_rmurp_fixed_alpha(data, cfg, alpha)
    res = _run(form, limits)
    if res.status != OPTIMAL:
        return None
    return decode(form, res.x, data, res.objective, cfg, "rmurp", alpha)


# --------------------------------------------------------------------------
# placement document


def placement_to_dict(sol: PlacementSolution, data: Optional[FeasibilityData] = None) -> dict:
    sites = sorted(set(sol.gammas) | set(sol.selected))
    doc = {
        "format": PLACEMENT_FORMAT,
        "problem": sol.problem,
        "algorithm": sol.algorithm,
        "rho": sol.rho,
        "max_relays": sol.max_relays,
        "objective": sol.objective,
        "alpha": sol.alpha,
        "utility": sol.utility,
        "relay_count": sol.relay_count,
        "sites": [{"id": k, "selected": k in sol.selected, "gamma": sol.gammas.get(k)} for k in sites],
        "links": [{"id": i, "nlos": bool(sol.nlos.get(i, sol.primary[i] is not None)),
                   "primary": sol.primary[i], "secondary": sol.secondary[i]} for i in sorted(sol.secondary)],
    }
    return doc


def dump_placement(sol: PlacementSolution) -> str:
    return json.dumps(placement_to_dict(sol), indent=2) + "\n"


def load_placement(text: str) -> PlacementSolution:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise MMRelayError(f"placement: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    try:
        if doc["format"] != PLACEMENT_FORMAT:
            raise MMRelayError(f"placement: unsupported format {doc['format']!r}")
        links = doc["links"]
        return PlacementSolution(
            selected=tuple(s["id"] for s in doc["sites"] if s["selected"]),
            primary={li["id"]: li["primary"] for li in links},
            secondary={li["id"]: li["secondary"] for li in links},
            objective=doc["objective"],
            gammas={s["id"]: s["gamma"] for s in doc["sites"]},
            rho=doc.get("rho"), max_relays=doc.get("max_relays"), alpha=doc.get("alpha"),
            utility=doc.get("utility"), problem=doc.get("problem", "rmrp"), algorithm=doc.get("algorithm"),
            nlos={li["id"]: int(li["nlos"]) for li in links},
        )
    except (KeyError, TypeError) as exc:
        raise MMRelayError(f"placement: malformed document ({exc!r})") from exc
