"""LP relaxation solves with dual extraction and post-solve certificates.

The simplex work itself is delegated to HiGHS (through scipy); this module
owns the sign conventions so callers always see duals as the sensitivity of
the model's own objective to each right-hand side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from ..errors import NumericalError
from .model import EQ, GE, LE, MilpModel

EPS_FEAS = 1e-8
EPS_GAP = 1e-7

OPTIMAL, INFEASIBLE, UNBOUNDED = "optimal", "infeasible", "unbounded"


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    duals: np.ndarray | None = None          # d objective / d rhs, one per constraint
    reduced_costs: np.ndarray | None = None  # d objective / d (active bound), one per variable
    bound_duals: tuple[np.ndarray, np.ndarray] | None = None  # (lower, upper) parts

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL


class CompiledLP:
    """A model frozen into HiGHS arrays; only bounds vary between solves."""

    def __init__(self, model: MilpModel):
        self.model = model
        self.sign = -1.0 if model.maximize else 1.0
        self.c = self.sign * model.cost_vector()
        self.lb, self.ub = model.bounds()
        le = [n for n, c in enumerate(model.constraints) if c.sense in (LE, GE)]
        eq = [n for n, c in enumerate(model.constraints) if c.sense == EQ]
        self.le_rows, self.eq_rows = le, eq
        # >= rows are negated into <= form
        flip = np.array([-1.0 if model.constraints[n].sense == GE else 1.0 for n in le])
        self.flip = flip
        if le:
            a = model.matrix(le)
            self.A_ub = a.multiply(flip[:, None]).tocsr()
            self.b_ub = flip * np.array([model.constraints[n].rhs for n in le])
        else:
            self.A_ub = self.b_ub = None
        if eq:
            self.A_eq = model.matrix(eq)
            self.b_eq = np.array([model.constraints[n].rhs for n in eq])
        else:
            self.A_eq = self.b_eq = None

    def solve(self, lb=None, ub=None) -> LpSolution:
        lb = self.lb if lb is None else lb
        ub = self.ub if ub is None else ub
        if np.any(lb > ub + EPS_FEAS):
            return LpSolution(INFEASIBLE)
        bounds = np.column_stack([np.where(np.isinf(lb), -np.inf, lb), np.where(np.isinf(ub), np.inf, ub)])
        res = linprog(self.c, A_ub=self.A_ub, b_ub=self.b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                      bounds=bounds, method="highs")
        if res.status == 2:
            return LpSolution(INFEASIBLE)
        if res.status == 3:
            return LpSolution(UNBOUNDED)
        if res.status != 0:
            raise NumericalError(f"LP engine failed on {self.model.name}: {res.message}")
        model = self.model
        duals = np.zeros(len(model.constraints))
        if self.le_rows:
            duals[self.le_rows] = self.sign * self.flip * res.ineqlin.marginals
        if self.eq_rows:
            duals[self.eq_rows] = self.sign * res.eqlin.marginals
        low = self.sign * res.lower.marginals
        up = self.sign * res.upper.marginals
        x = np.asarray(res.x, dtype=float)
        return LpSolution(OPTIMAL, x, model.evaluate(x), duals, low + up, (low, up))


def solve_lp(model: MilpModel) -> LpSolution:
    """Solve the continuous relaxation of ``model`` (integrality ignored)."""
    return CompiledLP(model).solve()


@dataclass
class Certificate:
    primal_infeasibility: float
    dual_infeasibility: float
    duality_gap: float
    complementarity: float
    dual_objective: float = math.nan
    notes: list[str] = field(default_factory=list)

    def ok(self, eps_feas=EPS_FEAS, eps_gap=EPS_GAP, scale=1.0) -> bool:
        return (self.primal_infeasibility <= eps_feas * scale and self.dual_infeasibility <= eps_feas * scale
                and self.duality_gap <= eps_gap * scale and self.complementarity <= eps_feas * scale)


def certify(model: MilpModel, sol: LpSolution, lb=None, ub=None) -> Certificate:
    """Independent optimality check of an LP solution from its duals.

    Recomputes primal residuals, stationarity ``c = A^T y + mu``, dual sign
    conditions, complementary slackness and the strong-duality gap
    ``|c^T x - (b^T y + bounds^T mu)|`` (relative to max(1, |objective|)).
    """
    if not sol.optimal:
        raise ValueError("certificate needs an optimal solution")
    x, y = sol.x, sol.duals
    mu_l, mu_u = sol.bound_duals
    lo, hi = model.bounds()
    lo = lo if lb is None else lb
    hi = hi if ub is None else ub
    # orient everything as a minimization
    s = -1.0 if model.maximize else 1.0
    c = s * model.cost_vector()
    ym, ml, mu = s * y, s * mu_l, s * mu_u

    a = model.matrix()
    rhs = np.array([con.rhs for con in model.constraints])
    act = a @ x if len(rhs) else np.zeros(0)
    p_inf = 0.0
    d_inf = 0.0
    comp = 0.0
    for n, con in enumerate(model.constraints):
        slack = act[n] - con.rhs
        if con.sense == LE:
            p_inf = max(p_inf, slack)
            d_inf = max(d_inf, ym[n])          # min-form: <= rows need y <= 0
        elif con.sense == GE:
            p_inf = max(p_inf, -slack)
            d_inf = max(d_inf, -ym[n])
        else:
            p_inf = max(p_inf, abs(slack))
        if con.sense != EQ:
            comp = max(comp, abs(ym[n] * slack))
    p_inf = max(p_inf, float(np.max(np.maximum(lo - x, 0.0), initial=0.0)),
                float(np.max(np.maximum(x - hi, 0.0), initial=0.0)))
    d_inf = max(d_inf, float(np.max(-ml, initial=0.0)), float(np.max(mu, initial=0.0)))
    stat = c - (a.T @ ym if len(rhs) else 0.0) - ml - mu
    d_inf = max(d_inf, float(np.max(np.abs(stat), initial=0.0)))
    with np.errstate(invalid="ignore"):
        comp = max(comp,
                   float(np.max(np.abs(np.where(np.isfinite(lo), ml * (x - lo), 0.0)), initial=0.0)),
                   float(np.max(np.abs(np.where(np.isfinite(hi), mu * (hi - x), 0.0)), initial=0.0)))
        bound_term = float(np.sum(np.where(np.isfinite(lo), ml * lo, 0.0))
                           + np.sum(np.where(np.isfinite(hi), mu * hi, 0.0)))
    dual_obj_min = float(rhs @ ym) + bound_term if len(rhs) else bound_term
    primal_min = float(c @ x)
    gap = abs(primal_min - dual_obj_min) / max(1.0, abs(primal_min))
    dual_obj = s * dual_obj_min + model.objective_constant
    return Certificate(p_inf, d_inf, gap, comp, dual_obj)
