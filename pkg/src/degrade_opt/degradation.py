"""Stochastic degradation of process units.

Each (task, unit, mode) drives the degradation signal of its unit with
independent increments: a Wiener process with drift ``mu`` and volatility
``sigma`` per unit time, or a gamma process with matching mean and
variance.  Idle steps add mean-zero Wiener noise.  A unit fails when its
signal exceeds ``s_max``; maintenance resets the signal to ``s_0``.

The module offers path sampling, Monte-Carlo failure probabilities, the
exact crossing probability of Brownian motion through a linear boundary,
its piecewise extension over mode changes, and greedy maintenance
insertion under a worst-case budget.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

IDLE = "idle"
MAINT = "maint"


class InfeasibleInsertion(ValueError):
    """A single task exceeds the post-maintenance degradation budget."""


# -- schedules -------------------------------------------------------------

@dataclass(frozen=True)
class Activity:
    start: int
    steps: int
    task: str | None = None  # None marks maintenance
    mode: str | None = None

    @property
    def is_maintenance(self) -> bool:
        return self.task is None

    @property
    def end(self) -> int:
        return self.start + self.steps


@dataclass
class Schedule:
    """Timed activities per unit on a grid of ``n_steps`` steps of length ``dt``."""

    dt: float
    n_steps: int
    activities: dict = field(default_factory=dict)  # unit -> list[Activity]

    def unit_activities(self, unit: str) -> list:
        return sorted(self.activities.get(unit, []), key=lambda a: a.start)

    def labels(self, unit: str) -> list:
        """Per-step labels: ``(task, mode)``, ``"idle"`` or ``"maint"``."""
        out = [IDLE] * self.n_steps
        for a in self.unit_activities(unit):
            lab = MAINT if a.is_maintenance else (a.task, a.mode)
            for n in range(a.start, min(a.end, self.n_steps)):
                if out[n] != IDLE:
                    raise ValueError(f"overlapping activities on {unit} at step {n}")
                out[n] = lab
        return out

    def maintenance_count(self, unit: str | None = None) -> int:
        units = [unit] if unit else list(self.activities)
        return sum(a.is_maintenance for u in units for a in self.activities.get(u, []))

    def validate(self, instance=None) -> None:
        for unit in self.activities:
            self.labels(unit)
            if instance is not None:
                R = instance.steps(instance.unit(unit).tau)
                for a in self.activities[unit]:
                    if a.is_maintenance and a.steps != R:
                        raise ValueError(f"maintenance on {unit} must last {R} steps")


def schedule_from_sequence(instance, unit: str, tokens, dt: float | None = None) -> Schedule:
    """Lay out tokens back to back: ``(task, mode)`` runs a task, ``None`` idles one step,
    ``"maint"`` performs maintenance."""
    acts, n = [], 0
    for tok in tokens:
        if tok is None or tok == IDLE:
            n += 1
        elif tok == MAINT:
            R = instance.steps(instance.unit(unit).tau)
            acts.append(Activity(n, R))
            n += R
        else:
            task, mode = tok
            P = instance.steps(instance.mode_data(task, unit, mode).p)
            acts.append(Activity(n, P, task, mode))
            n += P
    return Schedule(dt or instance.horizons.dt_S, n, {unit: acts})


# -- increment distributions -------------------------------------------------

@dataclass(frozen=True)
class IncrementDistribution:
    """Per-unit-time increment law.

    Wiener: ``mu`` drift and ``sigma`` volatility.  Gamma: ``shape`` per
    unit time and ``rate``; the mean rate is ``shape / rate``.
    """

    kind: str = "wiener"
    mu: float = 0.0
    sigma: float = 0.0
    shape: float = 0.0
    rate: float = 1.0

    def __post_init__(self):
        if self.kind not in ("wiener", "gamma"):
            raise ValueError(f"unknown increment kind {self.kind!r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if self.kind == "gamma" and (self.shape <= 0 or self.rate <= 0):
            raise ValueError("gamma parameters must be positive")

    def mean(self, dt: float) -> float:
        return self.mu * dt if self.kind == "wiener" else self.shape * dt / self.rate

    def var(self, dt: float) -> float:
        return self.sigma ** 2 * dt if self.kind == "wiener" else self.shape * dt / self.rate ** 2

    def quantile(self, alpha: float, dt: float) -> float:
        if self.kind == "wiener":
            return self.mean(dt) + math.sqrt(self.var(dt)) * stats.norm.ppf(alpha)
        return stats.gamma.ppf(alpha, self.shape * dt, scale=1.0 / self.rate)


@dataclass(frozen=True)
class UnitHealth:
    s_max: float
    s_init: float
    s_0: float


@dataclass(frozen=True)
class DegradationModel:
    increments: dict  # (task, unit, mode) -> IncrementDistribution
    idle: IncrementDistribution
    health: dict  # unit -> UnitHealth

    @classmethod
    def from_instance(cls, instance, kind: str = "wiener") -> "DegradationModel":
        """Increment laws whose total over one task run has mean d and std sigma."""
        dt = instance.horizons.dt_S
        inc = {}
        for key in instance.triples():
            md = instance.mode_data(*key)
            dur = instance.steps(md.p) * dt
            if kind == "wiener":
                inc[key] = IncrementDistribution("wiener", md.d / dur, md.sigma / math.sqrt(dur))
            else:
                if md.d <= 0 or md.sigma <= 0:
                    raise ValueError("gamma increments need positive mean and std")
                shape = (md.d / md.sigma) ** 2
                rate = md.d / md.sigma ** 2
                inc[key] = IncrementDistribution("gamma", shape=shape / dur, rate=rate)
        if kind == "wiener":
            idle = IncrementDistribution("wiener", instance.idle_mean, instance.idle_sigma)
        else:
            idle = IncrementDistribution("wiener", 0.0, 0.0)
        health = {u.name: UnitHealth(u.s_max, u.s_init, u.s_0) for u in instance.units}
        return cls(inc, idle, health)

    def with_health(self, unit: str, **changes) -> "DegradationModel":
        h = dict(self.health)
        old = h[unit]
        h[unit] = UnitHealth(changes.get("s_max", old.s_max), changes.get("s_init", old.s_init),
                             changes.get("s_0", old.s_0))
        return DegradationModel(self.increments, self.idle, h)

    def scaled(self, sigma_factor: float = 1.0) -> "DegradationModel":
        inc = {k: IncrementDistribution(v.kind, v.mu, v.sigma * sigma_factor, v.shape, v.rate)
               for k, v in self.increments.items()}
        idle = IncrementDistribution(self.idle.kind, self.idle.mu, self.idle.sigma * sigma_factor,
                                     self.idle.shape, self.idle.rate)
        return DegradationModel(inc, idle, self.health)

    @property
    def is_wiener(self) -> bool:
        return self.idle.kind == "wiener" and all(d.kind == "wiener" for d in self.increments.values())


# -- per-step view of a schedule ----------------------------------------------

@dataclass
class StepPlan:
    labels: list
    dists: list  # IncrementDistribution or None for maintenance
    dt: float

    @property
    def n(self) -> int:
        return len(self.labels)


def step_plan(model: DegradationModel, schedule: Schedule, unit: str) -> StepPlan:
    labels = schedule.labels(unit)
    dists = []
    for lab in labels:
        if lab == MAINT:
            dists.append(None)
        elif lab == IDLE:
            dists.append(model.idle)
        else:
            key = (lab[0], unit, lab[1])
            if key not in model.increments:
                raise KeyError(f"no increment law for task {lab[0]!r} mode {lab[1]!r} on {unit!r}")
            dists.append(model.increments[key])
    return StepPlan(labels, dists, schedule.dt)


def _draw(dist: IncrementDistribution, dt: float, z: np.ndarray, g_rng, n: int):
    if dist.kind == "wiener":
        return dist.mu * dt + dist.sigma * math.sqrt(dt) * z
    return g_rng.gamma(dist.shape * dt, 1.0 / dist.rate, size=n)


@dataclass
class SignalPath:
    t: np.ndarray
    values: np.ndarray
    kinds: list
    failed: bool
    crossing_time: float | None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value", "entry_kind"])
            for t, v, k in zip(self.t, self.values, self.kinds):
                w.writerow([f"{t:g}", repr(float(v)), k])


def _kind_of(lab) -> str:
    if lab == MAINT:
        return MAINT
    if lab == IDLE:
        return IDLE
    return f"{lab[0]}:{lab[1]}"


def simulate_paths(model: DegradationModel, schedule: Schedule, unit: str, n_paths: int,
                   seed=None, s_init: float | None = None, monitor: str = "discrete"):
    """Simulate ``n_paths`` signal paths at once.

    Returns ``(values, failed)`` with ``values`` of shape ``(n_paths, n+1)``.
    Random numbers are drawn per step independently of the health limits,
    so runs with the same seed share increments (common random numbers).
    With ``monitor="bridge"`` a Brownian-bridge test also catches crossings
    between grid points.
    """
    if monitor not in ("discrete", "bridge"):
        raise ValueError("monitor must be 'discrete' or 'bridge'")
    plan = step_plan(model, schedule, unit)
    h = model.health[unit]
    x0 = h.s_init if s_init is None else s_init
    rng = np.random.default_rng(seed)
    z_all = rng.standard_normal((plan.n, n_paths))
    u_all = rng.random((plan.n, n_paths))
    g_rng = np.random.default_rng(rng.integers(2 ** 63))
    vals = np.empty((n_paths, plan.n + 1))
    vals[:, 0] = x0
    failed = np.zeros(n_paths, bool)
    x = np.full(n_paths, float(x0))
    for n, dist in enumerate(plan.dists):
        if dist is None:
            x = np.full(n_paths, float(h.s_0))
        else:
            new = x + _draw(dist, plan.dt, z_all[n], g_rng, n_paths)
            if monitor == "bridge" and dist.kind == "wiener" and dist.sigma > 0:
                v = dist.sigma ** 2 * plan.dt
                a = np.maximum(h.s_max - x, 0.0)
                b = np.maximum(h.s_max - new, 0.0)
                p_cross = np.exp(-2.0 * a * b / v)
                failed |= u_all[n] < p_cross
            x = new
        failed |= x > h.s_max
        vals[:, n + 1] = x
    return vals, failed


def sample_path(model: DegradationModel, schedule: Schedule, unit: str, seed=None,
                s_init: float | None = None) -> SignalPath:
    vals, failed = simulate_paths(model, schedule, unit, 1, seed, s_init)
    v = vals[0]
    plan = step_plan(model, schedule, unit)
    t = np.arange(plan.n + 1) * schedule.dt
    h = model.health[unit]
    above = np.flatnonzero(v > h.s_max)
    ct = float(t[above[0]]) if above.size else None
    kinds = ["init"] + [_kind_of(lab) for lab in plan.labels]
    return SignalPath(t, v, kinds, bool(failed[0]), ct)


@dataclass(frozen=True)
class Estimate:
    p_f: float
    stderr: float
    n: int


def failure_probability_mc(model: DegradationModel, schedule: Schedule, unit: str,
                           N: int = 1000, seed=None, s_init: float | None = None,
                           monitor: str = "discrete") -> Estimate:
    """Fraction of simulated paths that exceed ``s_max`` somewhere on the horizon."""
    if N < 1:
        raise ValueError("N must be >= 1")
    _, failed = simulate_paths(model, schedule, unit, N, seed, s_init, monitor)
    p = float(failed.mean())
    return Estimate(p, math.sqrt(p * (1 - p) / N), N)


# -- analytic crossing probabilities ----------------------------------------------

def crossing_probability_linear(a: float, b: float, T: float) -> float:
    """P(W_t >= a t + b for some t in [0, T]) for standard Brownian motion W."""
    if not T > 0:
        raise ValueError("T must be positive")
    if b < 0:
        raise ValueError("b must be nonnegative")
    if b == 0:
        return 1.0
    rt = math.sqrt(T)
    first = special.ndtr(-(a * T + b) / rt)
    log_second = -2.0 * a * b + special.log_ndtr((a * T - b) / rt)
    p = first + math.exp(min(log_second, 700.0))
    return float(min(1.0, max(0.0, p)))


@dataclass
class _Segment:
    x0: float
    drift: np.ndarray  # mean increment per piece
    var: np.ndarray  # variance per piece


def _segments(model: DegradationModel, schedule: Schedule, unit: str, s_init=None):
    """Maintenance-free stretches as lists of constant-law pieces."""
    plan = step_plan(model, schedule, unit)
    h = model.health[unit]
    x0 = h.s_init if s_init is None else s_init
    segs, drift, var, key = [], [], [], None
    for dist in plan.dists:
        if dist is None:
            if drift:
                segs.append(_Segment(x0, np.array(drift), np.array(var)))
            drift, var, key = [], [], None
            x0 = h.s_0
            continue
        if dist.kind != "wiener":
            raise ValueError("analytic crossing probabilities need Wiener increments")
        k = (dist.mu, dist.sigma)
        m, v = dist.mean(plan.dt), dist.var(plan.dt)
        if k == key:
            drift[-1] += m
            var[-1] += v
        else:
            drift.append(m)
            var.append(v)
            key = k
    if drift:
        segs.append(_Segment(x0, np.array(drift), np.array(var)))
    return segs


def _survival_samples(seg: _Segment, s_max: float, z: np.ndarray) -> np.ndarray:
    """Per-sample survival weight h(y) for one maintenance-free stretch.

    Distances to the boundary are sampled at the mode-change points; between
    points the Brownian bridge survives a linear boundary with probability
    ``1 - exp(-2 y0 y1 / v)``.
    """
    c = s_max - seg.x0 - np.cumsum(seg.drift)  # boundary distance of the mean path
    w = np.cumsum(np.sqrt(seg.var)[:, None] * z, axis=0)
    y = c[:, None] - w
    y_prev = np.vstack([np.full((1, z.shape[1]), s_max - seg.x0), y[:-1]])
    pos = (y > 0) & (y_prev > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        expo = np.where(seg.var[:, None] > 0,
                        np.exp(-2.0 * np.maximum(y_prev, 0) * np.maximum(y, 0)
                               / np.where(seg.var[:, None] > 0, seg.var[:, None], 1.0)),
                        0.0)
    f = np.where(pos, 1.0 - expo, 0.0)
    if s_max - seg.x0 <= 0:
        f[:] = 0.0
    return np.prod(f, axis=0)


def failure_probability_analytic(model: DegradationModel, schedule: Schedule, unit: str,
                                 M: int = 1000, seed=None, s_init: float | None = None) -> Estimate:
    """Failure probability under continuous monitoring for Wiener degradation.

    Only the signal at mode-change points is sampled (``M`` draws); the
    crossing probability between those points is exact.  Stretches between
    maintenance actions are independent and combine as
    ``1 - prod(1 - p_segment)``.
    """
    if not model.is_wiener:
        raise ValueError("analytic crossing probabilities need Wiener increments")
    if M < 1:
        raise ValueError("M must be >= 1")
    h = model.health[unit]
    rng = np.random.default_rng(seed)
    surv = np.ones(M)
    for seg in _segments(model, schedule, unit, s_init):
        z = rng.standard_normal((len(seg.drift), M))
        surv *= _survival_samples(seg, h.s_max, z)
    p = 1.0 - float(surv.mean())
    se = float(surv.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return Estimate(min(1.0, max(0.0, p)), se, M)


def failure_probability(model, schedule, unit, method: str = "mc", n: int = 1000, seed=None,
                        s_init=None) -> Estimate:
    if method == "mc":
        return failure_probability_mc(model, schedule, unit, n, seed, s_init)
    if method == "bridge":
        return failure_probability_mc(model, schedule, unit, n, seed, s_init, monitor="bridge")
    if method == "analytic":
        return failure_probability_analytic(model, schedule, unit, n, seed, s_init)
    raise ValueError(f"unknown failure-probability method {method!r}")


# -- maintenance insertion ----------------------------------------------------------

def insert_maintenance(instance, unit: str, raw_modes, uncertainty, s_init: float | None = None,
                       dt: float | None = None) -> Schedule:
    """Insert maintenance as late as possible into a maintenance-free sequence.

    ``raw_modes`` holds ``(task, mode)`` tokens (one task run each) and
    ``None`` tokens (one idle step).  Before each task the worst-case
    accumulated degradation since the last maintenance must stay strictly
    below ``s_max - s_0`` (``s_max - s_init`` before the first maintenance);
    otherwise maintenance is inserted right before it and the remaining
    sequence is shifted back.
    """
    u = instance.unit(unit)
    start = u.s_init if s_init is None else s_init
    budget0 = u.s_max - start
    budget = u.s_max - u.s_0
    tokens, used, limit = [], 0.0, budget0
    for tok in raw_modes:
        if tok is None or tok == IDLE:
            tokens.append(None)
            continue
        if tok == MAINT:
            raise ValueError("raw mode sequence must not contain maintenance")
        task, mode = tok
        inc = uncertainty.d_max((task, unit, mode))
        if inc >= budget:
            raise InfeasibleInsertion(
                f"worst-case increment {inc:g} of {task}/{mode} on {unit} "
                f"exceeds the maintenance budget {budget:g}")
        if used + inc >= limit:
            tokens.append(MAINT)
            used, limit = 0.0, budget
        tokens.append(tok)
        used += inc
    return schedule_from_sequence(instance, unit, tokens, dt)
