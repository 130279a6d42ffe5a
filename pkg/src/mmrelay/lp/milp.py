"""Best-first branch-and-bound over the LP relaxation."""

from __future__ import annotations

import heapq
import itertools
import math
import time
from dataclasses import dataclass

import numpy as np

from .model import MilpModel
from .solve import EPS_GAP, INFEASIBLE, OPTIMAL, UNBOUNDED, CompiledLP, LpSolution

INT_TOL = 1e-6
LIMIT = "limit"


@dataclass
class MipSolution:
    status: str
    x: np.ndarray | None = None
    objective: float = math.nan
    nodes: int = 0
    bound: float = math.nan
    gap: float = math.nan

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL

    @property
    def feasible(self) -> bool:
        return self.x is not None


def _integral_objective(model: MilpModel) -> bool:
    if not model.objective:
        return True
    if float(model.objective_constant) != round(model.objective_constant):
        return False
    return all(model.variables[j].binary and float(a).is_integer() for j, a in model.objective.items())


def _mip_result(status, x, obj_min, sign, nodes, bound_min):
    obj = float(sign * obj_min) if x is not None else math.nan
    bound = float(sign * bound_min)
    if x is not None and math.isfinite(bound_min):
        gap = abs(obj_min - bound_min) / max(1.0, abs(obj_min))
    else:
        gap = math.inf if x is None else 0.0
    return MipSolution(status, x, obj, nodes, bound, gap)


def solve_milp(model: MilpModel, node_limit: int = 200_000, time_limit: float | None = None,
               gap: float = EPS_GAP, int_tol: float = INT_TOL) -> MipSolution:
    """Solve ``model`` exactly (within ``gap``) by branch and bound.

    Node order is best bound first, ties broken by creation order. Branching
    picks the most fractional binary, ties by lowest index. Incumbents get
    their binaries rounded and the continuous part re-solved so the returned
    point is exactly integral.
    """
    lp = CompiledLP(model)
    sign = lp.sign
    bins = np.array(model.binaries, dtype=int)
    integral_obj = _integral_objective(model)
    started = time.perf_counter()

    def eff(bound_min):
        # bound in min-form, tightened when the objective only takes integers
        if integral_obj and math.isfinite(bound_min):
            return math.ceil(bound_min - 1e-6)
        return bound_min

    def min_obj(sol: LpSolution):
        return sign * sol.objective

    root = lp.solve()
    nodes = 1
    if root.status == INFEASIBLE:
        return MipSolution(INFEASIBLE, nodes=nodes)
    if root.status == UNBOUNDED:
        return MipSolution(UNBOUNDED, nodes=nodes)

    best_x = None
    best = math.inf
    counter = itertools.count()
    heap = [(eff(min_obj(root)), next(counter), lp.lb.copy(), lp.ub.copy(), root)]

    def can_improve(bound_min):
        if best_x is None:
            return True
        return bound_min < best - gap * max(1.0, abs(best))

    while heap:
        bound_min, _, lb, ub, sol = heap[0]
        if not can_improve(bound_min):
            break
        if nodes >= node_limit or (time_limit is not None and time.perf_counter() - started > time_limit):
            return _mip_result(LIMIT, best_x, best, sign, nodes, bound_min)
        heapq.heappop(heap)
        x = sol.x
        frac = np.abs(x[bins] - np.round(x[bins])) if len(bins) else np.zeros(0)
        if not len(bins) or frac.max() <= int_tol:
            if len(bins):
                flb, fub = lb.copy(), ub.copy()
                flb[bins] = fub[bins] = np.round(x[bins])
                fixed = lp.solve(flb, fub)
                nodes += 1
                if fixed.status != OPTIMAL:
                    continue
                sol = fixed
            val = min_obj(sol)
            if best_x is None or val < best:
                best, best_x = val, sol.x.copy()
                if len(bins):
                    best_x[bins] = np.round(best_x[bins])
            continue
        # most fractional: distance to 0.5 smallest, lowest index on ties
        closeness = np.abs(x[bins] - np.floor(x[bins]) - 0.5)
        j = int(bins[int(np.argmin(closeness))])
        for side in (0.0, 1.0):
            clb, cub = lb.copy(), ub.copy()
            clb[j] = cub[j] = side
            child = lp.solve(clb, cub)
            nodes += 1
            if child.status == OPTIMAL:
                cb = eff(min_obj(child))
                if can_improve(cb):
                    heapq.heappush(heap, (cb, next(counter), clb, cub, child))
            elif child.status == UNBOUNDED:
                return MipSolution(UNBOUNDED, nodes=nodes)

    if best_x is None:
        return MipSolution(INFEASIBLE, nodes=nodes)
    remaining = heap[0][0] if heap else best
    return _mip_result(OPTIMAL, best_x, best, sign, nodes, min(remaining, best))
