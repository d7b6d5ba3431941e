"""Roll a plan forward period by period and score it.

Each iteration solves the current scheduling period plus a coarse
planning horizon, keeps the first period, and hands stocks, running
batches and the unit signals to the next iteration.  The demo rolls six
periods at two alphas and adds the expected failure cost of each plan.
"""
from degrade_opt import builtin_instance
from degrade_opt.degradation import DegradationModel, failure_probability_mc
from degrade_opt.horizon import roll
from degrade_opt.milp import SolverConfig

toy = builtin_instance("toy")
model = DegradationModel.from_instance(toy)
solver = SolverConfig(mip_gap=0.02, time_limit=10)

for alpha in (0.5, 0.2):
    res = roll(toy, "avg", alpha, n_periods=6, solver_config=solver, seed=0)
    print(f"alpha={alpha}: {res.status}, {len(res.iterations)} iterations")
    print("  costs:", {k: round(v, 1) for k, v in res.cost.items()})
    fail = 0.0
    for unit in toy.units:
        p = failure_probability_mc(model, res.schedule, unit.name, 10_000, seed=1).p_f
        fail += p * unit.c_fail
        print(f"  {unit.name}: {res.schedule.maintenance_count(unit.name)} maintenance actions, p_f = {p:.3f}")
    print(f"  plan cost {res.total_cost:.0f} + expected failure cost {fail:.0f} = {res.total_cost + fail:.0f}\n")
