"""How likely is a unit to fail under a given task sequence?

The signal of a unit grows by a random amount while it works and drifts
a little while idle.  We build a long Reactor sequence, let the
worst-case rule insert maintenance, and then estimate the chance that
the signal ever crosses its limit with three estimators.
"""
import numpy as np

from degrade_opt import builtin_instance
from degrade_opt.degradation import DegradationModel, failure_probability, insert_maintenance, sample_path
from degrade_opt.uncertainty import build_set

toy = builtin_instance("toy")
model = DegradationModel.from_instance(toy)
pattern = [("Reaction 1", "Normal"), ("Reaction 2", "Normal"), None, ("Reaction 1", "Slow")]

for alpha in (0.5, 0.2, 0.05):
    sched = insert_maintenance(toy, "Reactor", pattern * 15, build_set(toy, alpha))
    print(f"alpha={alpha}: {sched.maintenance_count('Reactor')} maintenance actions over {sched.n_steps} steps")
    for method, n in (("mc", 10_000), ("bridge", 10_000), ("analytic", 1000)):
        est = failure_probability(model, sched, "Reactor", method, n, seed=1)
        print(f"   {method:8s} p_f = {est.p_f:.4f} +- {est.stderr:.4f}")

# one realised path, to see the saw-tooth shape maintenance produces
path = sample_path(model, sched, "Reactor", seed=3)
peaks = np.maximum.reduceat(path.values, np.arange(0, len(path.values), 40))
print("\npeak signal per 40-step window:", np.round(peaks, 1))
print("limit:", toy.unit("Reactor").s_max, "| failed:", path.failed)
