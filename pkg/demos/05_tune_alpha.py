"""Pick alpha by Bayesian optimisation.

Small alpha buys safety with extra maintenance; large alpha saves
maintenance but risks failures.  The total cost is therefore roughly
U-shaped in alpha and expensive to evaluate, which is where a Gaussian
process surrogate pays off.  We first compare against random search on
a cheap stand-in curve, then spend a few real evaluations on the toy.
"""
import numpy as np

from degrade_opt import builtin_instance
from degrade_opt.bayesopt import EvalConfig, random_search, tune_alpha
from degrade_opt.milp import SolverConfig


def bowl(alpha):
    return 50 * (alpha - 0.27) ** 2 + 0.3 * np.sin(40 * alpha)


for name, fn in (("bayesopt", tune_alpha), ("random", random_search)):
    finals = [fn(bowl, budget=12, seed=s).best[-1] for s in range(5)]
    print(f"{name:8s} mean best after 12 evaluations: {np.mean(finals):.4f}")

toy = builtin_instance("toy")
cfg = EvalConfig(n_periods=4, planning=False, n_paths=1000, solver=SolverConfig(mip_gap=0.02, time_limit=10))
trace = tune_alpha(toy, "avg", budget=6, n_init=3, seed=0, eval_config=cfg)
for a, y in zip(trace.alphas, trace.ys):
    print(f"  alpha {a:.3f} -> total cost {y:.1f}")
print(f"best alpha on the toy: {trace.best_alpha:.3f}")
