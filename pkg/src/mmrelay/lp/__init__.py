"""Generic LP/MILP layer used by the placement formulations."""

from .brute import MAX_BINARIES, TooLarge, brute_force_milp
from .milp import INT_TOL, LIMIT, MipSolution, solve_milp
from .model import EQ, GE, LE, Constraint, MilpModel, Variable
from .solve import (EPS_FEAS, EPS_GAP, INFEASIBLE, OPTIMAL, UNBOUNDED, Certificate, CompiledLP,
                    LpSolution, certify, solve_lp)

__all__ = [
    "EQ", "GE", "LE", "Constraint", "MilpModel", "Variable",
    "EPS_FEAS", "EPS_GAP", "INFEASIBLE", "OPTIMAL", "UNBOUNDED", "LIMIT", "INT_TOL",
    "LpSolution", "MipSolution", "Certificate", "CompiledLP",
    "solve_lp", "solve_milp", "brute_force_milp", "certify", "MAX_BINARIES", "TooLarge",
]
