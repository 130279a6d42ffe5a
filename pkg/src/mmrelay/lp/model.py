"""Mixed-integer linear model container."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

LE, GE, EQ = "<=", ">=", "=="
SENSES = (LE, GE, EQ)


@dataclass
class Variable:
    name: str
    lb: float = 0.0
    ub: float = math.inf
    binary: bool = False


@dataclass
class Constraint:
    coefs: dict[int, float]
    sense: str
    rhs: float
    name: str = ""


@dataclass
class MilpModel:
    """Variables, linear rows and a linear objective.

    Rows are stored sparsely as ``{var_index: coefficient}``. ``maximize``
    flips the objective sense; everything else is sense-agnostic.
    """

    maximize: bool = False
    variables: list[Variable] = field(default_factory=list)
    constraints: list[Constraint] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    objective_constant: float = 0.0
    name: str = "model"

    def add_var(self, name, lb=0.0, ub=math.inf, binary=False) -> int:
        if binary:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if lb > ub:
            raise ValueError(f"variable {name}: lb {lb} > ub {ub}")
        self.variables.append(Variable(name, float(lb), float(ub), binary))
        return len(self.variables) - 1

    def add_constraint(self, coefs, sense, rhs, name="") -> int:
        if sense not in SENSES:
            raise ValueError(f"unknown sense {sense!r}")
        n = len(self.variables)
        clean = {}
        for j, a in dict(coefs).items():
            if not 0 <= j < n:
                raise IndexError(f"constraint {name}: variable index {j} undeclared")
            if a != 0.0:
                clean[j] = clean.get(j, 0.0) + float(a)
        self.constraints.append(Constraint(clean, sense, float(rhs), name))
        return len(self.constraints) - 1

    def set_objective(self, coefs, maximize=None, constant=0.0):
        self.objective = {j: float(a) for j, a in dict(coefs).items() if a != 0.0}
        self.objective_constant = float(constant)
        if maximize is not None:
            self.maximize = maximize

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    @property
    def binaries(self) -> list[int]:
        return [j for j, v in enumerate(self.variables) if v.binary]

    def index(self, name) -> int:
        for j, v in enumerate(self.variables):
            if v.name == name:
                return j
        raise KeyError(name)

    # -- dense/sparse views -------------------------------------------------

    def cost_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, a in self.objective.items():
            c[j] = a
        return c

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        lb = np.array([v.lb for v in self.variables], dtype=float)
        ub = np.array([v.ub for v in self.variables], dtype=float)
        return lb, ub

    def matrix(self, rows=None) -> sparse.csr_matrix:
        rows = range(len(self.constraints)) if rows is None else rows
        data, ri, ci = [], [], []
        for r, idx in enumerate(rows):
            for j, a in self.constraints[idx].coefs.items():
                data.append(a)
                ri.append(r)
                ci.append(j)
        return sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), self.n_vars))

    def evaluate(self, x) -> float:
        return self.objective_constant + sum(a * x[j] for j, a in self.objective.items())

    def violations(self, x, tol=1e-8) -> list[str]:
        """Human-readable list of rows/bounds violated by ``x`` beyond ``tol``."""
        out = []
        for j, v in enumerate(self.variables):
            if x[j] < v.lb - tol or x[j] > v.ub + tol:
                out.append(f"bound {v.name}: {x[j]} not in [{v.lb}, {v.ub}]")
        for c in self.constraints:
            lhs = sum(a * x[j] for j, a in c.coefs.items())
            scale = tol * max(1.0, abs(c.rhs))
            bad = ((c.sense == LE and lhs > c.rhs + scale) or (c.sense == GE and lhs < c.rhs - scale)
                   or (c.sense == EQ and abs(lhs - c.rhs) > scale))
            if bad:
                out.append(f"row {c.name or '?'}: {lhs} {c.sense} {c.rhs}")
        return out

    def copy(self) -> "MilpModel":
        return MilpModel(
            maximize=self.maximize,
            variables=[Variable(v.name, v.lb, v.ub, v.binary) for v in self.variables],
            constraints=[Constraint(dict(c.coefs), c.sense, c.rhs, c.name) for c in self.constraints],
            objective=dict(self.objective),
            objective_constant=self.objective_constant,
            name=self.name,
        )

    def relaxed(self) -> "MilpModel":
        m = self.copy()
        for v in m.variables:
            v.binary = False
        return m

    def to_lp_format(self) -> str:
        """CPLEX-LP text dump for cross-checking with external solvers."""

        def term(a, j):
            name = self.variables[j].name
            return f"{'-' if a < 0 else '+'} {abs(a)!r} {name}"

        lines = [f"\\ {self.name}", "Maximize" if self.maximize else "Minimize"]
        lines.append(" obj: " + (" ".join(term(a, j) for j, a in sorted(self.objective.items())) or "0"))
        lines.append("Subject To")
        for n, c in enumerate(self.constraints):
            body = " ".join(term(a, j) for j, a in sorted(c.coefs.items())) or "0"
            op = {LE: "<=", GE: ">=", EQ: "="}[c.sense]
            lines.append(f" {c.name or f'c{n}'}: {body} {op} {c.rhs!r}")
        lines.append("Bounds")
        for v in self.variables:
            ub = "+inf" if math.isinf(v.ub) else repr(v.ub)
            lb = "-inf" if math.isinf(v.lb) else repr(v.lb)
            lines.append(f" {lb} <= {v.name} <= {ub}")
        bins = [v.name for v in self.variables if v.binary]
        if bins:
            lines.append("Binaries")
            lines.append(" " + " ".join(bins))
        lines.append("End")
        return "\n".join(lines) + "\n"
