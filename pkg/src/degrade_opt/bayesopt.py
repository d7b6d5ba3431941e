"""Choosing the uncertainty-set size ``alpha`` by minimising total expected cost.

The objective of one ``alpha`` is the optimisation cost of the resulting
plan plus the failure cost of each unit weighted by its simulated failure
probability.  It is expensive and noisy, so it is minimised with a
Gaussian-process surrogate and expected improvement on a dense 1-D grid.
A uniform random search is provided for comparison.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, stats

from .degradation import DegradationModel, failure_probability
from .horizon import roll
from .milp import SolverConfig
from .uncertainty import check_alpha

log = logging.getLogger(__name__)

ALPHA_LO, ALPHA_HI = 0.02, 0.5


# -- objective ---------------------------------------------------------------------

@dataclass
class EvalConfig:
    """How one ``alpha`` is scored.

    ``planning=False`` rolls scheduling-only models, which is much cheaper
    and still lets ``alpha`` drive the maintenance timing.
    """

    n_periods: int = 12
    planning: bool = True
    n_plan: int | None = None
    pf_method: str = "mc"
    n_paths: int = 2000
    solver: SolverConfig = field(default_factory=SolverConfig)


@dataclass
class Evaluation:
    alpha: float
    c_star: float
    p_f: dict
    c_fail: dict
    ok: bool = True
    message: str = ""

    @property
    def total(self) -> float:
        return self.c_star + sum(self.p_f[u] * self.c_fail[u] for u in self.p_f)


def evaluate_alpha(instance, scenario: str, alpha: float, eval_config: EvalConfig | None = None,
                   seed: int = 0) -> Evaluation:
    """Roll the plan for ``alpha`` and add failure costs from simulated signal paths."""
    alpha = check_alpha(alpha)
    cfg = eval_config or EvalConfig()
    ss = np.random.SeedSequence(seed)
    s_roll, s_pf = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    c_fail = {u.name: u.c_fail for u in instance.units}
    res = roll(instance, scenario, alpha, cfg.n_periods, cfg.solver, s_roll,
               planning=cfg.planning, n_plan=cfg.n_plan)
    if res.status != "ok":
        return Evaluation(alpha, math.nan, {}, c_fail, False, "roll failed")
    dm = DegradationModel.from_instance(instance)
    pf = {u.name: failure_probability(dm, res.schedule, u.name, cfg.pf_method, cfg.n_paths,
                                      s_pf + k).p_f
          for k, u in enumerate(instance.units)}
    return Evaluation(alpha, res.total_cost, pf, c_fail)


class TuneObjective:
    """Callable ``alpha -> Evaluation`` with a per-call seed stream."""

    def __init__(self, instance, scenario: str = "avg", eval_config: EvalConfig | None = None,
                 seed: int = 0):
        self.instance = instance
        self.scenario = scenario
        self.eval_config = eval_config or EvalConfig()
        self.seed = seed
        self.calls = 0

    def __call__(self, alpha: float) -> Evaluation:
        self.calls += 1
        return evaluate_alpha(self.instance, self.scenario, alpha, self.eval_config,
                              seed=int(np.random.SeedSequence([self.seed, self.calls]).generate_state(1)[0]))


def _score(objective, alpha):
    out = objective(alpha)
    if isinstance(out, Evaluation):
        return (out.total if out.ok else math.nan), out
    return float(out), None


# -- Gaussian process -------------------------------------------------------------------

@dataclass
class GpSurrogate:
    x: np.ndarray
    y: np.ndarray
    length: float
    signal: float
    noise: float  # noise variance, in normalised units
    y_mean: float
    y_std: float
    _chol: tuple = field(repr=False, default=None)
    _alpha: np.ndarray = field(repr=False, default=None)

    def _k(self, a, b):
        d = np.subtract.outer(np.asarray(a, float), np.asarray(b, float))
        return self.signal * np.exp(-0.5 * (d / self.length) ** 2)

    def predict(self, xs):
        xs = np.atleast_1d(np.asarray(xs, float))
        Ks = self._k(xs, self.x)
        mu = Ks @ self._alpha
        v = linalg.cho_solve(self._chol, Ks.T)
        var = np.maximum(self.signal - np.sum(Ks * v.T, axis=1), 0.0)
        return mu * self.y_std + self.y_mean, np.sqrt(var) * self.y_std

    @property
    def noise_std(self) -> float:
        return math.sqrt(self.noise) * self.y_std


def _factor(K):
    jitter = 0.0
    for _ in range(8):
        try:
            return linalg.cho_factor(K + jitter * np.eye(len(K)), lower=True), jitter
        except linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0 else jitter * 100
    raise linalg.LinAlgError("kernel matrix is not positive definite even with jitter")


LENGTHS = np.logspace(-2.3, 0.3, 27)
SIGNALS = np.logspace(-1, 1, 9)
NOISES = np.logspace(-8, 0, 17)


def fit_gp(x, y, lengths=LENGTHS, signals=SIGNALS, noises=NOISES) -> GpSurrogate:
    """Squared-exponential GP with hyperparameters maximising the marginal likelihood on a grid."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if len(x) < 2:
        raise ValueError("at least two observations needed")
    y_mean = float(y.mean())
    y_std = float(y.std()) or 1.0
    z = (y - y_mean) / y_std
    d2 = np.subtract.outer(x, x) ** 2
    best = None
    for ell in lengths:
        base = np.exp(-0.5 * d2 / ell ** 2)
        for sf in signals:
            for sn in noises:
                K = sf * base + sn * np.eye(len(x))
                try:
                    c, _ = _factor(K)
                except linalg.LinAlgError:
                    continue
                a = linalg.cho_solve(c, z)
                lml = -0.5 * z @ a - np.sum(np.log(np.diag(c[0])))
                if best is None or lml > best[0]:
                    best = (lml, ell, sf, sn)
    if best is None:
        raise linalg.LinAlgError("no hyperparameters gave a factorisable kernel")
    _, ell, sf, sn = best
    K = sf * np.exp(-0.5 * d2 / ell ** 2) + sn * np.eye(len(x))
    c, _ = _factor(K)
    return GpSurrogate(x, y, float(ell), float(sf), float(sn), y_mean, y_std, c, linalg.cho_solve(c, z))


def expected_improvement(surrogate, alpha, best_y):
    """EI for minimisation; accepts a fitted surrogate or a ``(mu, sigma)`` pair."""
    if isinstance(surrogate, GpSurrogate):
        mu, sd = surrogate.predict(alpha)
    else:
        mu, sd = (np.asarray(v, float) for v in surrogate)
    mu, sd = np.broadcast_arrays(np.atleast_1d(mu), np.atleast_1d(sd))
    imp = best_y - mu
    out = np.maximum(imp, 0.0).astype(float)
    pos = sd > 0
    z = imp[pos] / sd[pos]
    out[pos] = imp[pos] * stats.norm.cdf(z) + sd[pos] * stats.norm.pdf(z)
    out = np.maximum(out, 0.0)
    return float(out[0]) if np.ndim(alpha) == 0 and out.size == 1 else out


# -- optimisers ---------------------------------------------------------------------

@dataclass
class TuneTrace:
    method: str
    alphas: list = field(default_factory=list)
    ys: list = field(default_factory=list)
    evaluations: list = field(default_factory=list)

    @property
    def best(self) -> list:
        out, cur = [], math.inf
        for y in self.ys:
            if not math.isnan(y):
                cur = min(cur, y)
            out.append(cur)
        return out

    @property
    def best_alpha(self) -> float:
        ok = [(y, a) for a, y in zip(self.alphas, self.ys) if not math.isnan(y)]
        return min(ok)[1] if ok else math.nan

    def add(self, alpha, y, ev=None):
        self.alphas.append(float(alpha))
        self.ys.append(float(y))
        self.evaluations.append(ev)
        if math.isnan(y):
            log.warning("evaluation at alpha=%.4g failed; excluded from the surrogate", alpha)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "alpha", "y", "best"])
            for i, (a, y, b) in enumerate(zip(self.alphas, self.ys, self.best), start=1):
                w.writerow([i, repr(a), repr(y), repr(b)])


def _as_objective(target, scenario, eval_config, seed):
    if callable(target) and not hasattr(target, "units"):
        return target
    return TuneObjective(target, scenario, eval_config, seed)


def tune_alpha(target, scenario: str = "avg", budget: int = 20, n_init: int = 4, seed: int = 0,
               eval_config: EvalConfig | None = None, grid_size: int = 512,
               bounds=(ALPHA_LO, ALPHA_HI)) -> TuneTrace:
    """Bayesian optimisation of ``alpha``.

    ``target`` is an instance (scored with :func:`evaluate_alpha`) or any
    callable ``alpha -> float | Evaluation``.  The first ``n_init`` points
    are one uniform draw from each of ``n_init`` equal slices of ``bounds``;
    afterwards the maximiser of expected improvement on a
    ``grid_size``-point grid is evaluated.
    """
    if not budget >= n_init >= 2:
        raise ValueError("need budget >= n_init >= 2")
    f = _as_objective(target, scenario, eval_config, seed)
    trace = TuneTrace("bayesopt")
    edges = np.linspace(bounds[0], bounds[1], n_init + 1)
    u = np.random.default_rng([seed, 0]).uniform(size=n_init)
    for a in edges[:-1] + u * np.diff(edges):
        trace.add(a, *_score(f, a))
    grid = np.linspace(bounds[0], bounds[1], grid_size)
    while len(trace.ys) < budget:
        ok = [(a, y) for a, y in zip(trace.alphas, trace.ys) if not math.isnan(y)]
        if len(ok) < 2:
            a = float(np.random.default_rng([seed, 1, len(trace.ys)]).uniform(*bounds))
        else:
            xs, ys = map(np.array, zip(*ok))
            gp = fit_gp(xs, ys)
            mu, _ = gp.predict(xs)
            ei = expected_improvement(gp, grid, float(np.min(mu)))
            a = float(grid[int(np.argmax(ei))])
        trace.add(a, *_score(f, a))
    return trace


def random_search(target, scenario: str = "avg", budget: int = 20, seed: int = 0,
                  eval_config: EvalConfig | None = None, bounds=(ALPHA_LO, ALPHA_HI)) -> TuneTrace:
    """Uniform samples of ``alpha`` over ``bounds``."""
    if budget < 1:
        raise ValueError("budget must be >= 1")
    f = _as_objective(target, scenario, eval_config, seed)
    rng = np.random.default_rng(seed)
    trace = TuneTrace("random")
    for a in rng.uniform(bounds[0], bounds[1], budget):
        trace.add(a, *_score(f, a))
    return trace
