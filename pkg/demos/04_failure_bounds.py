"""Predict failure probabilities without rolling the full plan.

Instead of solving a long rolling horizon for each alpha, we learn how
often each operating mode appears (and which mode tends to follow
which) from cheap single-period solves at random demands.  Sampling
mode sequences from those models and simulating them gives an upper
estimate of the failure probability for any demand forecast.

A small training set keeps the demo short; the statistical quality
improves with more samples.
"""
from degrade_opt import builtin_instance
from degrade_opt.estimators import demand_covariates, estimate_pf_frequency, estimate_pf_markov, fit_models
from degrade_opt.horizon import generate_training_data
from degrade_opt.milp import SolverConfig
from degrade_opt.uncertainty import build_set

toy = builtin_instance("toy")
data = generate_training_data(toy, 30, alpha=0.5, solver_config=SolverConfig(mip_gap=0.05, time_limit=5), seed=0)
models = fit_models(data)
print(f"trained on {len(data)} solves; Reactor symbols: {models.symbols['Reactor']}")

psi = demand_covariates(toy, "avg", 12, models.products)
for alpha in (0.5, 0.26, 0.1):
    unc = build_set(toy, alpha)
    freq = estimate_pf_frequency(toy, models, psi, unc, N=50, seed=1, n_paths=500)
    chain = estimate_pf_markov(toy, models, psi, unc, N=50, seed=1, n_paths=500)
    print(f"alpha={alpha}: " + "  ".join(
        f"{u}: freq {freq[u].p_bar:.3f} / chain {chain[u].p_bar:.3f}" for u in freq))
