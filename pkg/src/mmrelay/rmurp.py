"""Maximum-utility placement: bisection on the demand scale and Generalized
Benders Decomposition over the binary path/relay choices.

Internally the demand scale ``alpha`` is the objective (utility divided by
the total base demand), which keeps LP coefficients O(1). Bounds and
utilities are reported in bits/s.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Optional

from .errors import InfeasibleError, LimitExceeded, MMRelayError, UnboundedError
from .geometry import FeasibilityData
from .lp import GE, LE, LIMIT, OPTIMAL, MilpModel, certify, solve_lp, solve_milp
from .lp.solve import LpSolution
from .robust import (Assignment, PlacementSolution, RobustConfig, add_structure, check_placement,
                     site_loads, solve_fixed_alpha, structural_check)

MAX_BISECTION_ITER = 64
MAX_GBD_ITER = 500
# multipliers below this are treated as exact zeros when building cuts
DUAL_TOL = 1e-10


def total_demand(data: FeasibilityData) -> float:
    return float(sum(data.demands[i] for i in data.feasible_links))


def _config(data: FeasibilityData, cfg: RobustConfig) -> RobustConfig:
    if cfg.max_relays is None:
        return RobustConfig(rho=cfg.rho, gammas=cfg.gammas, max_relays=len(data.sites))
    return cfg


# --------------------------------------------------------------------------
# bracket and bisection


def zero_load_placement_exists(data: FeasibilityData, cfg: RobustConfig, limits: Optional[dict] = None) -> bool:
    """True when some valid placement puts no load on any relay.

    That needs every link LOS (primaries are direct) and every secondary on a
    site whose budget is zero, within the relay cap.
    """
    if any(data.nlos[i] for i in data.feasible_links):
        return False
    gammas = cfg.budgets(data)
    model = MilpModel(name="zero_load")
    idx = add_structure(model, data, cfg.max_relays)
    for (i, k), j in idx.y.items():
        if gammas[k] > 0:
            model.variables[j].ub = 0.0
    model.set_objective({})
    return solve_milp(model, **(limits or {})).status == OPTIMAL


@dataclass
class Bracket:
    low: float
    high: float
    low_solution: PlacementSolution
    doublings: int = 0


def initial_bracket(data: FeasibilityData, cfg: RobustConfig, limits: Optional[dict] = None) -> Bracket:
    """[A, B] with the problem feasible at A = 0 and infeasible at B.

    B starts at 1 + 1/min(r_i * tau_ik): once no placement leaves every relay
    unloaded, every placement carries at least the cheapest load somewhere,
    so B is infeasible. Doubling B is kept only as a guard against rounding.
    """
    cfg = _config(data, cfg)
    structural_check(data, cfg.max_relays)
    at_zero = solve_fixed_alpha(data, cfg, 0.0, limits)
    if at_zero is None:
        raise InfeasibleError(f"no placement with at most {cfg.max_relays} relays satisfies the path constraints")
    if zero_load_placement_exists(data, cfg, limits):
        raise UnboundedError("utility is unbounded: a placement leaves every relay unloaded "
                             "(LOS links only, secondaries on zero-budget sites)")
    cheapest = min(data.load(i, k) for i, k in data.pairs)
    high = 1.0 / cheapest + 1.0
    for n in range(60):
        if solve_fixed_alpha(data, cfg, high, limits) is None:
            return Bracket(0.0, high, at_zero, n)
        high *= 2.0
    raise UnboundedError("utility is unbounded: no demand scale makes the placement infeasible")


@dataclass
class BisectionStep:
    iteration: int
    low: float
    high: float
    probe: float
    feasible: bool


@dataclass
class BisectionResult:
    alpha: float
    utility: float
    solution: PlacementSolution
    trace: list[BisectionStep]
    bracket: tuple[float, float]
    converged: bool

    def trace_csv(self) -> str:
        """Bracket after each probe, in demand-scale units."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "A", "B", "feasible"])
        for st in self.trace:
            w.writerow([st.iteration, repr(st.low), repr(st.high), int(st.feasible)])
        return buf.getvalue()


def bisection_search(data: FeasibilityData, cfg: RobustConfig, tol: float = 1.0,
                     max_iter: int = MAX_BISECTION_ITER, limits: Optional[dict] = None,
                     bracket: Optional[Bracket] = None) -> BisectionResult:
    """Bisect the demand scale on MILP feasibility until (B - A)/2 <= tol.

    ``tol`` is absolute, in units of the base demand scale. Returns the last
    feasible placement, which sits at alpha = A.
    """
    if tol <= 0:
        raise ValueError("tolerance must be positive")
    cfg = _config(data, cfg)
    br = bracket or initial_bracket(data, cfg, limits)
    lo, hi = br.low, br.high
    best = br.low_solution
    trace = []
    converged = (hi - lo) / 2 <= tol
    n = 1
    while n <= max_iter and not converged:
        c = (lo + hi) / 2
        sol = solve_fixed_alpha(data, cfg, c, limits)
        if sol is not None:
            lo, best = c, sol
        else:
            hi = c
        trace.append(BisectionStep(n, lo, hi, c, sol is not None))
        n += 1
        converged = (hi - lo) / 2 <= tol
    best.algorithm = "bisection"
    return BisectionResult(lo, lo * total_demand(data), best, trace, (lo, hi), converged)


# --------------------------------------------------------------------------
# GBD pieces


@dataclass
class PrimalResult:
    feasible: bool
    alpha: float = math.nan
    objective: float = math.nan            # alpha units
    p: dict = field(default_factory=dict)
    q: dict = field(default_factory=dict)
    lam: dict = field(default_factory=dict)  # capacity-row multipliers, per site
    nu: dict = field(default_factory=dict)   # protection-row multipliers, per (link, site)
    duality_gap: float = math.nan
    lp: Optional[LpSolution] = None


def _restricted_lp(data: FeasibilityData, gammas, a: Assignment, alpha_lo: float, alpha_hi: float,
                   slack: bool):
    """LP over (alpha, p, q) with the binaries fixed to ``a``.

    With ``slack`` the rows are relaxed by a shared violation ``delta`` that
    is minimised (the feasibility-check problem).
    """
    m = MilpModel(maximize=not slack, name="gbd_feasibility" if slack else "gbd_primal")
    ja = m.add_var("alpha", alpha_lo, alpha_hi)
    jd = m.add_var("delta", 0.0) if slack else None
    jp = {pair: m.add_var(f"p_{pair[0]}_{pair[1]}") for pair in data.pairs}
    jq = {k: m.add_var(f"q_{k}") for k in data.sites}
    cap_rows, prot_rows = {}, {}
    for k in data.sites:
        prim = sum(data.load(i, k) for (i, kk) in a.x if kk == k and data.nlos[i])
        row = {ja: prim, jq[k]: float(gammas[k])}
        for i in data.per_site[k]:
            row[jp[(i, k)]] = 1.0
        if slack:
            row[jd] = -1.0
        cap_rows[k] = m.add_constraint(row, LE, 1.0 if k in a.z else 0.0, name=f"capacity_{k}")
    for i, k in data.pairs:
        w = data.load(i, k) if (i, k) in a.y else 0.0
        if slack:
            prot_rows[(i, k)] = m.add_constraint({ja: w, jq[k]: -1.0, jp[(i, k)]: -1.0, jd: -1.0}, LE, 0.0,
                                                 name=f"protect_{i}_{k}")
        else:
            prot_rows[(i, k)] = m.add_constraint({jq[k]: 1.0, jp[(i, k)]: 1.0, ja: -w}, GE, 0.0,
                                                 name=f"protect_{i}_{k}")
    m.set_objective({jd: 1.0} if slack else {ja: 1.0})
    return m, ja, jd, jp, jq, cap_rows, prot_rows


def solve_primal(data: FeasibilityData, cfg: RobustConfig, a: Assignment, alpha_max: float,
                 alpha_min: float = 0.0) -> PrimalResult:
    """Best demand scale for fixed binaries, with capacity/protection multipliers.

    ``alpha_max`` is a valid upper bound on the scale (from the bracket);
    ``alpha_min`` optionally forces a floor, which is the only way the fixed
    problem can become infeasible.
    """
    gammas = cfg.budgets(data)
    m, ja, _, jp, jq, cap_rows, prot_rows = _restricted_lp(data, gammas, a, alpha_min, alpha_max, slack=False)
    sol = solve_lp(m)
    if not sol.optimal:
        return PrimalResult(False, lp=sol)
    cert = certify(m, sol)
    return PrimalResult(
        True, float(sol.x[ja]), float(sol.objective),
        p={pair: float(sol.x[j]) for pair, j in jp.items()},
        q={k: float(sol.x[j]) for k, j in jq.items()},
        lam={k: max(0.0, float(sol.duals[r])) for k, r in cap_rows.items()},
        nu={pair: max(0.0, -float(sol.duals[r])) for pair, r in prot_rows.items()},
        duality_gap=cert.duality_gap, lp=sol)


@dataclass
class FeasibilityResult:
    delta: float
    alpha: float
    mu: dict
    sigma: dict
    lp: Optional[LpSolution] = None


def solve_feasibility(data: FeasibilityData, cfg: RobustConfig, a: Assignment, alpha_max: float,
                      alpha_min: float = 0.0) -> FeasibilityResult:
    """Minimise the uniform violation delta of the fixed-binary rows.

    delta* = 0 iff the primal is feasible. When delta* > 0 the multipliers
    (mu, sigma) sum to one.
    """
    gammas = cfg.budgets(data)
    m, ja, jd, _, _, cap_rows, prot_rows = _restricted_lp(data, gammas, a, alpha_min, alpha_max, slack=True)
    sol = solve_lp(m)
    if not sol.optimal:
        raise MMRelayError(f"feasibility check LP returned {sol.status}")
    return FeasibilityResult(
        float(sol.x[jd]), float(sol.x[ja]),
        mu={k: max(0.0, -float(sol.duals[r])) for k, r in cap_rows.items()},
        sigma={pair: max(0.0, -float(sol.duals[r])) for pair, r in prot_rows.items()},
        lp=sol)


@dataclass
class Cut:
    """A master-problem row ``beta <= const + coefs . Lambda (+ disjunctive term)``.

    Feasibility cuts use ``0 <= const + coefs . Lambda``. Coefficients are
    keyed by ('x'|'y'|'z', pair-or-site). ``excess`` holds the coefficients
    of the scale-response term ``c(Lambda) = 1 - excess . Lambda`` for exact
    optimality cuts, with ``span = alpha_max - alpha_min``.
    """

    kind: str                      # "optimality" | "feasibility"
    iteration: int
    const: float
    coefs: dict
    excess: dict = field(default_factory=dict)
    span: float = 0.0
    excess_bound: float = 0.0

    def value(self, a: Assignment) -> float:
        """Evaluate the cut's right-hand side at ``a``."""
        v = self.const + sum(c * _on(a, key) for key, c in self.coefs.items())
        if self.span:
            resp = 1.0 - sum(c * _on(a, key) for key, c in self.excess.items())
            v += self.span * max(0.0, resp)
        return v


def _on(a: Assignment, key) -> float:
    kind, item = key
    return float(item in (a.x if kind == "x" else a.y if kind == "y" else a.z))


def optimality_cut(data: FeasibilityData, gammas, a: Assignment, pr: PrimalResult, n: int,
                   alpha_max: float, alpha_min: float = 0.0, mode: str = "lagrangian") -> Cut:
    """Cut from a solved primal.

    ``lagrangian``: beta <= max over (p, q, alpha in [alpha_min, alpha_max]) of the
    partial Lagrangian at the fixed multipliers. p and q drop out (their
    coefficients are non-positive by dual feasibility) and the alpha term is
    solved in closed form, giving a valid cut that is exact at the generating assignment.

    ``linearized``: the Lagrangian evaluated at the primal's own continuous
    point, linear in Lambda. Tight at the generating assignment but not a valid bound in
    general since alpha is held at alpha^n.
    """
    lam, nu = pr.lam, pr.nu
    if mode == "linearized":
        al = pr.alpha
        const = al
        coefs = {}
        for k in data.sites:
            if lam[k] > DUAL_TOL:
                coefs[("z", k)] = lam[k]
                const -= lam[k] * (gammas[k] * pr.q[k] + sum(pr.p[(i, k)] for i in data.per_site[k]))
        for (i, k) in data.pairs:
            const += nu[(i, k)] * (pr.q[k] + pr.p[(i, k)])
            if data.nlos[i] and lam[k] > DUAL_TOL:
                coefs[("x", (i, k))] = -lam[k] * data.load(i, k) * al
            if nu[(i, k)] > DUAL_TOL:
                coefs[("y", (i, k))] = -nu[(i, k)] * data.load(i, k) * al
        return Cut("optimality", n, const, coefs)
    if mode != "lagrangian":
        raise ValueError(f"unknown cut mode {mode!r}")
    # dual feasibility of the p/q coefficients is what lets them drop out
    for k in data.sites:
        cq = -lam[k] * gammas[k] + sum(nu[(i, k)] for i in data.per_site[k])
        cp = max((nu[(i, k)] - lam[k] for i in data.per_site[k]), default=0.0)
        if cq > 1e-7 or cp > 1e-7:
            raise MMRelayError(f"site {k}: primal multipliers not dual feasible ({cq:.3g}, {cp:.3g})")
    coefs = {("z", k): lam[k] for k in data.sites if lam[k] > DUAL_TOL}
    excess = {}
    for (i, k) in data.pairs:
        if data.nlos[i] and lam[k] * data.load(i, k) > DUAL_TOL:
            excess[("x", (i, k))] = lam[k] * data.load(i, k)
        if nu[(i, k)] * data.load(i, k) > DUAL_TOL:
            excess[("y", (i, k))] = nu[(i, k)] * data.load(i, k)
    const = alpha_min
    for key, c in excess.items():
        coefs[key] = coefs.get(key, 0.0) - alpha_min * c
    # largest excess any structurally valid Lambda can reach: one primary and one secondary per link
    reach = 0.0
    for i in data.feasible_links:
        ks = data.sites_of(i)
        reach += max((excess.get(("x", (i, k)), 0.0) for k in ks), default=0.0)
        reach += max((excess.get(("y", (i, k)), 0.0) for k in ks), default=0.0)
    return Cut("optimality", n, const, coefs, excess, alpha_max - alpha_min, max(0.0, reach - 1.0))


def feasibility_cut(data: FeasibilityData, fr: FeasibilityResult, n: int, alpha_min: float) -> Cut:
    """0 >= min over (p, q, alpha >= alpha_min) of the feasibility Lagrangian.

    Reduces to ``sum_k mu_k z_k - alpha_min * (loads weighted by mu, sigma) >= 0``.
    """
    coefs = {("z", k): fr.mu[k] for k in data.sites if fr.mu[k] > DUAL_TOL}
    for (i, k) in data.pairs:
        if data.nlos[i] and fr.mu[k] > DUAL_TOL:
            coefs[("x", (i, k))] = -alpha_min * fr.mu[k] * data.load(i, k)
        if fr.sigma[(i, k)] > DUAL_TOL:
            coefs[("y", (i, k))] = -alpha_min * fr.sigma[(i, k)] * data.load(i, k)
    return Cut("feasibility", n, 0.0, coefs)


def _var_of(idx, key):
    kind, item = key
    return {"x": idx.x, "y": idx.y, "z": idx.z}[kind][item]


def build_master(data: FeasibilityData, cfg: RobustConfig, cuts: list[Cut], beta_max: float):
    """Master MILP: max beta over structurally valid Lambda subject to ``cuts``."""
    cfg = _config(data, cfg)
    m = MilpModel(maximize=True, name="gbd_master")
    idx = add_structure(m, data, cfg.max_relays)
    jb = m.add_var("beta", 0.0, beta_max)
    for cut in cuts:
        if cut.kind == "feasibility":
            m.add_constraint({_var_of(idx, key): c for key, c in cut.coefs.items()}, GE, -cut.const,
                             name=f"fcut_{cut.iteration}")
            continue
        row = {jb: 1.0}
        for key, c in cut.coefs.items():
            row[_var_of(idx, key)] = row.get(_var_of(idx, key), 0.0) - c
        if cut.span and cut.excess:
            excess_row = {_var_of(idx, key): c for key, c in cut.excess.items()}
            if cut.excess_bound <= 0.0:
                # response never goes negative on valid Lambda: the max(0, .) is linear
                for j, c in excess_row.items():
                    row[j] = row.get(j, 0.0) + cut.span * c
                m.add_constraint(row, LE, cut.const + cut.span, name=f"ocut_{cut.iteration}")
                continue
            jw = m.add_var(f"w_{cut.iteration}", 0.0, 1.0)
            jd = m.add_var(f"d_{cut.iteration}", binary=True)
            row[jw] = -cut.span
            m.add_constraint(row, LE, cut.const, name=f"ocut_{cut.iteration}")
            m.add_constraint({jw: 1.0, jd: -1.0}, LE, 0.0, name=f"ocut_on_{cut.iteration}")
            big = cut.excess_bound
            m.add_constraint({jw: 1.0, jd: big, **excess_row}, LE, 1.0 + big, name=f"ocut_resp_{cut.iteration}")
        elif cut.span:
            m.add_constraint(row, LE, cut.const + cut.span, name=f"ocut_{cut.iteration}")
        else:
            m.add_constraint(row, LE, cut.const, name=f"ocut_{cut.iteration}")
    m.set_objective({jb: 1.0})
    return m, idx, jb


def solve_master(data: FeasibilityData, cfg: RobustConfig, cuts: list[Cut], beta_max: float,
                 limits: Optional[dict] = None):
    """Next Lambda and the master bound beta (alpha units), or None when infeasible."""
    if not cuts:
        raise ValueError("master needs at least one cut")
    m, idx, jb = build_master(data, cfg, cuts, beta_max)
    res = solve_milp(m, **(limits or {}))
    if res.status == LIMIT:
        raise LimitExceeded("GBD master hit its solver limit", res.x, res.gap)
    if res.status != OPTIMAL:
        return None
    return Assignment.from_vector(res.x, idx), float(res.x[jb])


@dataclass
class GbdIteration:
    iteration: int
    lower: float   # alpha units
    upper: float
    kind: str
    assignment: Assignment
    value: float   # primal scale of this assignment, or delta*


@dataclass
class GbdResult:
    alpha: float
    utility: float
    solution: PlacementSolution
    trace: list[GbdIteration]
    converged: bool
    gap: float
    scale: float
    feasibility_cuts: int = 0
    cuts: list[Cut] = field(default_factory=list)

    @property
    def lower_bounds(self) -> list[float]:
        return [it.lower * self.scale for it in self.trace]

    @property
    def upper_bounds(self) -> list[float]:
        return [it.upper * self.scale for it in self.trace]

    def trace_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["iteration", "LB", "UB"])
        for it in self.trace:
            w.writerow([it.iteration, repr(it.lower * self.scale), repr(it.upper * self.scale)])
        return buf.getvalue()


def placement_from_assignment(data: FeasibilityData, cfg: RobustConfig, a: Assignment, pr: PrimalResult,
                              algorithm: str) -> PlacementSolution:
    gammas = cfg.budgets(data)
    primary = {i: None for i in data.feasible_links}
    for i, k in a.x:
        primary[i] = k
    used = {k for _, k in a.x} | {k for _, k in a.y}
    # unused selected relays add nothing; report only relays that carry a path
    sol = PlacementSolution(
        selected=tuple(sorted(used)), primary=primary, secondary=dict(sorted(a.y)),
        objective=pr.alpha * total_demand(data), gammas=gammas, rho=cfg.rho, max_relays=cfg.max_relays,
        alpha=pr.alpha, utility=pr.alpha * total_demand(data), p=dict(pr.p), q=dict(pr.q),
        problem="rmurp", algorithm=algorithm, nlos=dict(data.nlos))
    errs = check_placement(sol, data)
    if errs:
        raise MMRelayError("GBD incumbent violates placement invariants: " + "; ".join(errs))
    return sol


def gbd_solve(data: FeasibilityData, cfg: RobustConfig, eps_conv: float = 1e-6, max_iter: int = MAX_GBD_ITER,
              cut_mode: str = "lagrangian", alpha_min: float = 0.0, limits: Optional[dict] = None,
              bracket: Optional[Bracket] = None) -> GbdResult:
    """Alternate primal LPs (lower bounds, multipliers) and master MILPs (upper bounds).

    ``eps_conv`` is relative to total demand, i.e. in alpha units. The
    starting Lambda is the fewest-relay structurally valid placement. Stops
    when UB - LB <= eps_conv, when the master is infeasible, or after
    ``max_iter`` iterations (``converged`` False, gap reported).
    """
    cfg = _config(data, cfg)
    gammas = cfg.budgets(data)
    br = bracket or initial_bracket(data, cfg, limits)
    alpha_max = br.high
    scale = total_demand(data)
    start = br.low_solution.assignment()

    lower, upper = -math.inf, math.inf
    best: Optional[tuple[Assignment, PrimalResult]] = None
    cuts: list[Cut] = []
    trace: list[GbdIteration] = []
    seen: set[Assignment] = set()
    n_feas = 0
    a = start
    converged = False
    for n in range(1, max_iter + 1):
        seen.add(a)
        pr = solve_primal(data, cfg, a, alpha_max, alpha_min)
        if pr.feasible:
            if best is None or pr.objective > lower:
                best = (a, pr)
            lower = max(lower, pr.objective)
            cuts.append(optimality_cut(data, gammas, a, pr, n, alpha_max, alpha_min, cut_mode))
            kind, value = "optimality", pr.objective
        else:
            fr = solve_feasibility(data, cfg, a, alpha_max, alpha_min)
            cuts.append(feasibility_cut(data, fr, n, alpha_min))
            n_feas += 1
            kind, value = "feasibility", fr.delta
        nxt = solve_master(data, cfg, cuts, alpha_max, limits)
        if nxt is None:
            upper = min(upper, lower)
            trace.append(GbdIteration(n, lower, upper, kind, a, value))
            converged = True
            break
        a_next, beta = nxt
        upper = min(upper, beta)
        trace.append(GbdIteration(n, lower, upper, kind, a, value))
        if upper - lower <= eps_conv:
            converged = True
            break
        if a_next in seen:
            # only reachable through numerical slack in the cuts
            converged = upper - lower <= max(eps_conv, 1e-7)
            break
        a = a_next
    if best is None:
        raise InfeasibleError("GBD found no feasible primal")
    a_best, pr_best = best
    sol = placement_from_assignment(data, cfg, a_best, pr_best, "gbd")
    gap = max(0.0, upper - lower) * scale
    return GbdResult(pr_best.alpha, pr_best.alpha * scale, sol, trace, converged, gap, scale, n_feas, cuts)


# --------------------------------------------------------------------------
# independent reference


def closed_form_scale(data: FeasibilityData, gammas, a: Assignment, alpha_cap: float = math.inf) -> float:
    """Best demand scale for fixed binaries without an LP: 1 / worst relay load.

    Loads scale linearly in alpha, so the optimum is set by the busiest
    selected relay. Any load on an unselected site forces alpha = 0.
    """
    loads = site_loads(data, a, gammas, 1.0)
    best = alpha_cap
    for k, v in loads.items():
        if v <= 0.0:
            continue
        if k not in a.z:
            return 0.0
        best = min(best, 1.0 / v)
    return best
