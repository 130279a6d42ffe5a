"""Exhaustive MILP oracle: enumerate every binary assignment.

Assignments are enumerated depth first over the binaries in index order. A
partial assignment is abandoned only when some row can no longer be met
whatever the remaining binaries and continuous variables do (activity
bounds from the variable bounds), so every feasible assignment is visited.
Each complete assignment gets an LP solve over the continuous remainder.
When the objective ignores the continuous variables, complete assignments
are visited in objective order and the first feasible one is optimal.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import MMRelayError
from .milp import MipSolution
from .model import GE, LE, MilpModel
from .solve import EPS_FEAS, INFEASIBLE, OPTIMAL, UNBOUNDED, CompiledLP

MAX_BINARIES = 24


class TooLarge(MMRelayError):
    pass


class _Rows:
    """Activity bookkeeping for the binary part of every constraint."""

    def __init__(self, model: MilpModel, bins: list[int]):
        pos = {j: n for n, j in enumerate(bins)}
        lb, ub = model.bounds()
        n_rows = len(model.constraints)
        self.sense = [c.sense for c in model.constraints]
        self.rhs = [float(c.rhs) for c in model.constraints]
        self.tol = [EPS_FEAS * max(1.0, abs(b)) for b in self.rhs]
        self.cont_lo = [0.0] * n_rows   # least continuous activity
        self.cont_hi = [0.0] * n_rows
        self.fixed = [0.0] * n_rows
        self.rest_lo = [0.0] * n_rows   # least activity of the unfixed binaries
        self.rest_hi = [0.0] * n_rows
        self.cols: list[list[tuple[int, float]]] = [[] for _ in bins]
        for r, con in enumerate(model.constraints):
            for j, a in con.coefs.items():
                if j in pos:
                    self.cols[pos[j]].append((r, a))
                    self.rest_lo[r] += min(0.0, a)
                    self.rest_hi[r] += max(0.0, a)
                else:
                    self.cont_lo[r] += a * (lb[j] if a > 0 else ub[j])
                    self.cont_hi[r] += a * (ub[j] if a > 0 else lb[j])

    def ok(self, r: int) -> bool:
        s = self.sense[r]
        if s != GE and self.fixed[r] + self.rest_lo[r] + self.cont_lo[r] > self.rhs[r] + self.tol[r]:
            return False
        if s != LE and self.fixed[r] + self.rest_hi[r] + self.cont_hi[r] < self.rhs[r] - self.tol[r]:
            return False
        return True

    def fix(self, n: int, v: float, sign: float = 1.0) -> None:
        for r, a in self.cols[n]:
            self.fixed[r] += sign * a * v
            self.rest_lo[r] -= sign * min(0.0, a)
            self.rest_hi[r] -= sign * max(0.0, a)


def enumerate_assignments(model: MilpModel, max_binaries: int = MAX_BINARIES) -> np.ndarray:
    """Every binary assignment not ruled out by row activity bounds, one per row."""
    bins = list(model.binaries)
    if len(bins) > max_binaries:
        raise TooLarge(f"{len(bins)} binaries exceeds the brute-force cap of {max_binaries}")
    lb, ub = model.bounds()
    rows = _Rows(model, bins)
    out = []
    cur = [0.0] * len(bins)

    def dfs(n: int):
        if n == len(bins):
            out.append(list(cur))
            return
        j = bins[n]
        for v in (0.0, 1.0):
            if v < lb[j] - 0.5 or v > ub[j] + 0.5:
                continue
            rows.fix(n, v)
            if all(rows.ok(r) for r, _ in rows.cols[n]):
                cur[n] = v
                dfs(n + 1)
            rows.fix(n, v, -1.0)
        cur[n] = 0.0

    if all(rows.ok(r) for r in range(len(rows.rhs))):
        dfs(0)
    return np.array(out, dtype=float).reshape(len(out), len(bins))


def brute_force_milp(model: MilpModel, max_binaries: int = MAX_BINARIES) -> MipSolution:
    bins = np.array(model.binaries, dtype=int)
    nb = len(bins)
    if nb > max_binaries:
        raise TooLarge(f"{nb} binaries exceeds the brute-force cap of {max_binaries}")
    lp = CompiledLP(model)
    if nb == 0:
        sol = lp.solve()
        if sol.status == OPTIMAL:
            return MipSolution(OPTIMAL, sol.x, sol.objective, 1, sol.objective, 0.0)
        return MipSolution(sol.status, nodes=1)

    cands = enumerate_assignments(model, max_binaries)
    if not len(cands):
        return MipSolution(INFEASIBLE, nodes=0)
    lb, ub = model.bounds()
    sign = lp.sign
    cvec = model.cost_vector()
    cont_free = not np.any(np.delete(cvec, bins))
    order = np.arange(len(cands))
    if cont_free:
        order = np.argsort(sign * (cands @ cvec[bins]), kind="stable")

    best_x, best = None, math.inf
    nodes = 0
    for n in order:
        flb, fub = lb.copy(), ub.copy()
        flb[bins] = fub[bins] = cands[n]
        sol = lp.solve(flb, fub)
        nodes += 1
        if sol.status == UNBOUNDED:
            return MipSolution(UNBOUNDED, nodes=nodes)
        if sol.status != OPTIMAL:
            continue
        val = sign * sol.objective
        if val < best - 1e-12 * max(1.0, abs(val)):
            best, best_x = val, sol.x.copy()
            best_x[bins] = cands[n]
            if cont_free:
                break
    if best_x is None:
        return MipSolution(INFEASIBLE, nodes=nodes)
    return MipSolution(OPTIMAL, best_x, float(sign * best), nodes, float(sign * best), 0.0)
