import math

import numpy as np
import pytest
from scipy import stats

from degrade_opt.milp import SolverConfig, check_solution
from degrade_opt.stn import (Carryover, StnBuildConfig, batch_sizes, build, build_deterministic,
                             build_robust, check_robust_feasibility, extract_schedule,
                             lift_deterministic_solution, maintenance_count, model_summary,
                             objective_breakdown, slack_penalty, solve_stn, write_model_summary)
from degrade_opt.uncertainty import build_set

EXACT = SolverConfig(mip_gap=0.0, time_limit=60)


def sched_only(**kw):
    return StnBuildConfig(planning=False, **kw)


def test_tiny_two_batches(tiny):
    # 15 units need two batches of <= 10; signal 0 + 4 + 4 = 8, final-signal cost 100 * 8 / 10
    inst = tiny()
    res = solve_stn(inst, sched_only(), EXACT)
    assert res.solution.status == "optimal"
    assert res.solution.objective == pytest.approx(80.0)
    assert maintenance_count(res) == 0
    assert sum(batch_sizes(res).values()) == pytest.approx(15.0)
    assert check_solution(res.model, res.solution.values) == []


def test_tiny_needs_maintenance(tiny):
    # three batches would reach 12 > 10: two runs, maintenance, one run -> 100 + 40
    inst = tiny(demand=(25, 0))
    res = solve_stn(inst, sched_only(), EXACT)
    assert res.solution.objective == pytest.approx(140.0)
    sched = extract_schedule(res)
    assert sched.labels("U") == [("T", "A"), ("T", "A"), "maint", ("T", "A")]
    parts = objective_breakdown(res.model, res.solution.values)
    assert parts["maintenance"] == pytest.approx(100.0)
    assert parts["final_signal"] == pytest.approx(40.0)
    assert parts["slack"] == pytest.approx(0.0)


def test_tiny_worst_case_increment(tiny):
    # alpha = 0.1 with sigma 1: d_max = 4 - z_0.1; two runs exceed 10 so maintenance goes between
    inst = tiny(sigma=1.0)
    unc = build_set(inst, 0.1)
    dmax = 4 - stats.norm.ppf(0.1)
    assert unc.d_max(("T", "U", "A")) == pytest.approx(dmax)
    det = solve_stn(inst, sched_only(uncertainty=unc), EXACT)
    assert det.solution.objective == pytest.approx(100 + 100 * dmax / 10)
    rob = solve_stn(inst, sched_only(uncertainty=unc, variant="robust"), EXACT)
    # the robust objective prices the final signal at the nominal increment
    assert rob.solution.objective == pytest.approx(140.0)
    assert maintenance_count(rob) == 1


def test_unmet_demand_goes_to_slack(tiny):
    # 4 steps x 10 units = 40 at most; with alpha 0.5 and maintenance 30 is the most a unit
    # with s_max 10 can deliver (runs at 4 + 4, maintain, run), so 45 leaves slack 15
    inst = tiny(demand=(45, 0))
    res = solve_stn(inst, sched_only(), EXACT)
    parts = objective_breakdown(res.model, res.solution.values)
    assert parts["slack_amount"] == pytest.approx(15.0)
    assert res.model.penalty == slack_penalty(inst, 0)


def test_slack_penalty_formula(toy):
    # 300 * (1 + 15 + n) per unit (ceil(30/2) and ceil(30/3) maintenance slots) + storage 29 (n + 1) + 1
    n = 23
    expected = 300 * (1 + 15 + n) + 300 * (1 + 10 + n) + 29 * (n + 1) + 1
    assert slack_penalty(toy, n) == expected


def test_planning_horizon(tiny):
    inst = tiny(demand=(15, 15))
    res = solve_stn(inst, StnBuildConfig(), EXACT)
    parts = objective_breakdown(res.model, res.solution.values)
    assert res.ok
    assert parts["slack"] == pytest.approx(0.0)
    # cheapest: two full batches now (5 units stored, cost 5, signal 8), one batch plus
    # maintenance in the plan period, where the aggregate signal may drop to 8 + 4 - 10 = 2
    assert res.solution.objective == pytest.approx(100 + 5 + 20)
    assert maintenance_count(res) == 1
    assert maintenance_count(res, include_planning=False) == 0
    assert res.model.nP == 1


def test_blocked_unit_and_arrivals(tiny):
    inst = tiny(demand=(15, 0))
    carry = Carryover(blocked={"U": 3}, arrivals={("P", 2): 10.0})
    res = solve_stn(inst, sched_only(carry=carry), EXACT)
    sched = extract_schedule(res)
    assert all(a.start >= 3 for a in sched.unit_activities("U"))
    assert sum(batch_sizes(res).values()) == pytest.approx(5.0)


def test_config_validation():
    with pytest.raises(ValueError):
        StnBuildConfig(variant="stochastic")


def test_builder_variant_guards(toy):
    with pytest.raises(ValueError):
        build_deterministic(toy, StnBuildConfig(variant="robust"))
    with pytest.raises(ValueError):
        build_robust(toy, StnBuildConfig())


def test_toy_counts_are_stable(toy):
    c = build(toy, StnBuildConfig()).counts()
    assert (c["discrete"], c["continuous"], c["constraints"]) == (518, 897, 1680)
    r = build(toy, StnBuildConfig(variant="robust", uncertainty=build_set(toy, 0.1))).counts()
    assert (r["variables"], r["constraints"]) == (4001, 2860)


def test_model_summary(tmp_path, tiny):
    m = build(tiny(), StnBuildConfig())
    rows = model_summary(m)
    assert rows[-1]["family"] == "TOTAL"
    assert sum(r["variables"] for r in rows[:-1]) == rows[-1]["variables"]
    write_model_summary(m, tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text().startswith("family,variables,discrete,constraints")


def test_lifted_solution_is_robust_feasible(toy):
    unc = build_set(toy, 0.1)
    det = solve_stn(toy, sched_only(uncertainty=unc), SolverConfig(mip_gap=0.05, time_limit=30))
    assert det.ok
    rep = check_robust_feasibility(toy, lift_deterministic_solution(toy, det), det, unc)
    assert rep.feasible, rep.violations[:5]


def test_robust_check_detects_a_broken_rule(toy):
    unc = build_set(toy, 0.1)
    det = solve_stn(toy, sched_only(uncertainty=unc), SolverConfig(mip_gap=0.05, time_limit=30))
    coeffs = lift_deterministic_solution(toy, det)
    j = "Reactor"
    key = next(k for k in coeffs.ck[j] if coeffs.ck[j][k][-1] > 0)
    coeffs.ck[j][key][-1] -= 1.0
    rep = check_robust_feasibility(toy, coeffs, det, unc)
    assert not rep.feasible and rep.max_violation > 0
