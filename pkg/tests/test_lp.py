import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mmrelay.lp import (EQ, GE, INFEASIBLE, LE, LIMIT, OPTIMAL, UNBOUNDED, MilpModel, TooLarge, brute_force_milp,
                        certify, solve_lp, solve_milp)
from mmrelay.lp.brute import enumerate_assignments


def test_single_variable_bound_and_dual():
    m = MilpModel(maximize=True)
    x = m.add_var("x")
    m.add_constraint({x: 1.0}, LE, 3.0)
    m.set_objective({x: 1.0})
    sol = solve_lp(m)
    assert sol.status == OPTIMAL
    assert sol.objective == pytest.approx(3.0)
    assert sol.duals[0] == pytest.approx(1.0)
    assert certify(m, sol).ok()


def test_unbounded():
    m = MilpModel(maximize=True)
    x = m.add_var("x")
    m.set_objective({x: 1.0})
    assert solve_lp(m).status == UNBOUNDED
    assert solve_milp(m).status == UNBOUNDED


def test_infeasible():
    m = MilpModel()
    x = m.add_var("x")
    m.add_constraint({x: 1.0}, GE, 2.0)
    m.add_constraint({x: 1.0}, LE, 1.0)
    assert solve_lp(m).status == INFEASIBLE
    assert solve_milp(m).status == INFEASIBLE


def test_protection_relaxation_is_integral():
    m = MilpModel(maximize=True)
    s = [m.add_var(f"s{n}", 0, 1) for n in range(3)]
    m.add_constraint({j: 1.0 for j in s}, LE, 2.0)
    m.set_objective(dict(zip(s, (0.3, 0.2, 0.5))))
    sol = solve_lp(m)
    assert sol.objective == pytest.approx(0.8)
    assert np.allclose(sol.x, [1, 0, 1], atol=1e-9)


def knapsack(values, weights, cap):
    m = MilpModel(maximize=True, name="knapsack")
    xs = [m.add_var(f"x{n}", binary=True) for n in range(len(values))]
    m.add_constraint(dict(zip(xs, weights)), LE, cap)
    m.set_objective(dict(zip(xs, values)))
    return m


def test_knapsack():
    m = knapsack([3, 2, 2], [2, 1, 1], 2)
    res = solve_milp(m)
    assert res.status == OPTIMAL and res.objective == 4
    assert brute_force_milp(m).objective == 4
    assert solve_lp(m).objective == pytest.approx(4.0)


def test_milp_without_binaries_is_the_lp():
    m = MilpModel()
    x, y = m.add_var("x"), m.add_var("y")
    m.add_constraint({x: 1, y: 2}, GE, 4)
    m.add_constraint({x: 3, y: 1}, GE, 6)
    m.set_objective({x: 1, y: 1})
    lp = solve_lp(m)
    assert solve_milp(m).objective == pytest.approx(lp.objective)
    assert brute_force_milp(m).objective == pytest.approx(lp.objective)
    assert lp.objective == pytest.approx(2.8)


def random_milp(rng, n_bin, n_cont, n_rows):
    m = MilpModel(maximize=bool(rng.integers(2)), name="random")
    b = [m.add_var(f"b{n}", binary=True) for n in range(n_bin)]
    c = [m.add_var(f"c{n}", 0.0, float(rng.uniform(1, 4))) for n in range(n_cont)]
    for r in range(n_rows):
        coefs = {j: float(rng.integers(-3, 4)) for j in b + c}
        sense = [LE, GE, EQ][int(rng.integers(3)) if r else 0]
        act = sum(a * (rng.integers(2) if j in b else rng.uniform(0, 1)) for j, a in coefs.items())
        m.add_constraint(coefs, sense, float(np.round(act, 3)) if sense == EQ else float(act + rng.uniform(-1, 1)))
    m.set_objective({j: float(rng.integers(-5, 6)) for j in b + c})
    return m


@given(st.integers(0, 100_000), st.integers(1, 8), st.integers(0, 3), st.integers(1, 5))
def test_branch_and_bound_matches_enumeration(seed, n_bin, n_cont, n_rows):
    m = random_milp(np.random.default_rng(seed), n_bin, n_cont, n_rows)
    a, b = solve_milp(m), brute_force_milp(m)
    assert a.status == b.status
    if a.status == OPTIMAL:
        assert a.objective == pytest.approx(b.objective, abs=1e-6)
        assert not m.violations(a.x, tol=1e-6)
        assert np.all(np.isin(a.x[m.binaries], (0.0, 1.0)))


@given(st.integers(0, 100_000))
def test_lp_certificate(seed):
    rng = np.random.default_rng(seed)
    m = random_milp(rng, 0, 5, 4).relaxed()
    sol = solve_lp(m)
    if sol.optimal:
        cert = certify(m, sol)
        assert cert.ok(scale=10.0), cert


def test_enumeration_visits_every_feasible_assignment():
    m = MilpModel()
    xs = [m.add_var(f"x{n}", binary=True) for n in range(4)]
    m.add_constraint({j: 1.0 for j in xs}, EQ, 2.0)
    got = {tuple(r) for r in enumerate_assignments(m)}
    want = {v for v in itertools.product((0.0, 1.0), repeat=4) if sum(v) == 2}
    assert got == want


def test_brute_force_cap():
    m = knapsack([1] * 25, [1] * 25, 3)
    with pytest.raises(TooLarge):
        brute_force_milp(m)


def test_node_limit_reports_limit_with_incumbent():
    rng = np.random.default_rng(5)
    m = knapsack(list(rng.integers(10, 60, 30)), list(rng.integers(5, 40, 30)), 200)
    res = solve_milp(m, node_limit=3)
    assert res.status == LIMIT
    if res.feasible:
        assert not m.violations(res.x)
        assert res.gap >= 0


def test_model_validation():
    m = MilpModel()
    m.add_var("x")
    with pytest.raises(IndexError):
        m.add_constraint({3: 1.0}, LE, 1.0)
    with pytest.raises(ValueError):
        m.add_var("y", lb=2.0, ub=1.0)
    with pytest.raises(ValueError):
        m.add_constraint({0: 1.0}, "<", 1.0)


def test_lp_text_export():
    text = knapsack([3, 2], [2, 1], 2).to_lp_format()
    for part in ("Maximize", "Subject To", "Bounds", "Binaries", "End"):
        assert part in text
