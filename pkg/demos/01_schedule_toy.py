"""Solve one toy scheduling problem and look at what maintenance the solver planned.

Run from the repository root:

    python3 demos/01_schedule_toy.py

A conservative uncertainty level (small alpha) widens the worst-case
degradation of every task, so the optimiser has to plan maintenance
earlier.  We solve the same instance at two alphas and compare.
"""
from pathlib import Path

from degrade_opt import builtin_instance
from degrade_opt.horizon import gantt_svg
from degrade_opt.milp import SolverConfig
from degrade_opt.stn import StnBuildConfig, extract_schedule, maintenance_count, objective_breakdown, solve_stn
from degrade_opt.uncertainty import build_set

toy = builtin_instance("toy")
print(f"{toy.name}: units {[u.name for u in toy.units]}, products {toy.products}")

out = Path("demo_output")
out.mkdir(exist_ok=True)

for alpha in (0.5, 0.05):
    cfg = StnBuildConfig(uncertainty=build_set(toy, alpha), scenario="avg")
    res = solve_stn(toy, cfg, SolverConfig(mip_gap=0.01, time_limit=60))
    costs = objective_breakdown(res.model, res.solution.values)
    print(f"\nalpha={alpha}: status {res.solution.status}, objective {res.solution.objective:.1f}")
    print("  cost split:", {k: round(v, 1) for k, v in costs.items() if k != "slack_amount"})
    print("  maintenance actions incl. planning periods:", maintenance_count(res))

    sched = extract_schedule(res)
    for unit in sched.activities:
        line = ", ".join("MAINT" if a.is_maintenance else f"{a.task}/{a.mode}@{a.start}"
                         for a in sched.unit_activities(unit))
        print(f"  {unit}: {line}")
    (out / f"toy_alpha{alpha}.svg").write_text(gantt_svg(sched, f"toy, alpha={alpha}"))

print(f"\nGantt charts written to {out}/")
