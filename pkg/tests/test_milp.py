import itertools
import math

import numpy as np
import pytest

from degrade_opt import milp
from degrade_opt.milp import (BINARY, CONTINUOUS, INTEGER, MilpModel, SolverConfig, SolverError,
                              check_solution, clean_name, export_lp, read_lp, resolve_backend, solve)


def knapsack():
    m = MilpModel("knap sack")
    vals, wts = [10, 13, 7, 8], [5, 6, 3, 4]
    xs = [m.add_var(f"x{i}", BINARY) for i in range(4)]
    m.add_constr({x: w for x, w in zip(xs, wts)}, "<=", 10, "cap")
    m.set_objective({x: -v for x, v in zip(xs, vals)})
    return m


def mixed():
    m = MilpModel("mixed")
    n = m.add_var("n", INTEGER, 0, 7)
    y = m.add_var("y", CONTINUOUS, -math.inf, math.inf)
    z = m.add_var("z", CONTINUOUS, 1.5, 1.5)
    m.add_constr({n: 2, y: 1}, ">=", 3.5, "a")
    m.add_constr({y: 1, z: -1}, "=", 0.25, "b")
    m.add_constr({n: 1}, "<=", 6)
    m.set_objective({n: 1, y: 2}, constant=4.0)
    return m


def test_clean_name():
    assert clean_name("w[Heating,Heater,Slow,3]") == "w_Heating_Heater_Slow_3_"
    assert clean_name("3x") == "v3x"


def test_duplicate_names_are_made_unique():
    m = MilpModel()
    a = m.add_var("x")
    b = m.add_var("x")
    assert m.var_names[a] != m.var_names[b]


def test_bad_inputs():
    m = MilpModel()
    x = m.add_var("x")
    with pytest.raises(ValueError):
        m.add_var("q", "Z")
    with pytest.raises(ValueError):
        m.add_constr({x: 1}, "<", 1)
    with pytest.raises(ValueError):
        m.add_constr({x: math.nan}, "<=", 1)
    with pytest.raises(ValueError):
        m.add_var("nb", lb=math.nan)
    m.seal()
    with pytest.raises(RuntimeError):
        m.add_var("late")


def test_counts():
    c = mixed().counts()
    assert c["variables"] == 3
    assert c["constraints"] == 3
    assert c["discrete"] == 1


@pytest.mark.parametrize("build", [knapsack, mixed])
def test_lp_round_trip(build):
    m = build()
    back = read_lp(export_lp(m))
    assert back.var_names == m.var_names
    assert back.var_kinds == m.var_kinds
    assert back.var_lb == m.var_lb and back.var_ub == m.var_ub
    assert back.row_names == m.row_names
    assert back.row_sense == m.row_sense
    assert back.row_rhs == m.row_rhs
    for r1, r2 in zip(back.row_coefs, m.row_coefs):
        assert {back.var_names[i]: c for i, c in r1.items()} == {m.var_names[i]: c for i, c in r2.items()}
    assert export_lp(back) == export_lp(m)


def test_lp_text_sections():
    text = export_lp(mixed())
    for head in ("Minimize", "Subject To", "Bounds", "Generals", "Binaries", "End"):
        assert f"\n{head}" in text
    assert " y free" in text
    assert " z = 1.5" in text


def test_knapsack_optimum():
    sol = solve(knapsack())
    assert sol.status == "optimal"
    # brute force over all subsets of weight <= 10
    best = max(sum(v for v, b in zip([10, 13, 7, 8], bits) if b)
               for bits in itertools.product([0, 1], repeat=4)
               if sum(w for w, b in zip([5, 6, 3, 4], bits) if b) <= 10)
    assert sol.objective == pytest.approx(-best) == -21
    assert check_solution(knapsack(), sol.values) == []


def test_mixed_optimum_includes_constant():
    m = mixed()
    sol = solve(m)
    # y = 1.75 fixed by z; 2n >= 1.75 -> n = 1; objective 1 + 3.5 + 4
    assert sol.objective == pytest.approx(8.5)
    assert sol.value("n") == pytest.approx(1)


def test_infeasible():
    m = MilpModel()
    x = m.add_var("x", INTEGER, 0, 1)
    m.add_constr({x: 1}, ">=", 2)
    assert solve(m).status == "infeasible"


def test_check_solution_reports_violations():
    m = knapsack()
    v = check_solution(m, np.array([1, 1, 0, 0.5]))
    kinds = {x.kind for x in v}
    assert kinds == {"row", "integrality"}
    assert check_solution(m, np.array([2, 0, 0, 0]))[0].kind == "bound"


def test_self_test():
    assert milp.self_test()


def test_backend_resolution(monkeypatch):
    monkeypatch.delenv(milp.SOLVER_ENV, raising=False)
    assert resolve_backend(SolverConfig()) == "highs"
    monkeypatch.setenv(milp.SOLVER_ENV, "cbc")
    assert resolve_backend(SolverConfig()) == "cbc"
    monkeypatch.setenv(milp.SOLVER_ENV, "/opt/solvers/cbc")
    assert resolve_backend(SolverConfig()) == "cbc"


def test_missing_executable(monkeypatch):
    monkeypatch.setenv(milp.SOLVER_ENV, "/nonexistent/cbc")
    with pytest.raises(SolverError):
        solve(knapsack())


def test_cbc_backend_agrees(monkeypatch):
    try:
        milp.find_cbc()
    except SolverError:
        pytest.skip("no CBC executable available")
    monkeypatch.delenv(milp.SOLVER_ENV, raising=False)
    sol = solve(knapsack(), SolverConfig(backend="cbc"))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(-21)
    assert solve(mixed(), SolverConfig(backend="cbc")).objective == pytest.approx(8.5)


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(time_limit=0)
    with pytest.raises(ValueError):
        SolverConfig(mip_gap=-1)


def test_keep_dir(tmp_path):
    solve(knapsack(), SolverConfig(keep_dir=str(tmp_path)))
    assert (tmp_path / "knap_sack.lp").exists()
