"""Rolling-horizon driver and scheduling-only training data.

A roll repeatedly solves the STN model, keeps the first scheduling
horizon, advances the clock by that horizon and re-solves with updated
stocks, signals and unit occupancy.  The kept pieces are stitched into
one long schedule.
"""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import qmc

from .degradation import IDLE, MAINT, Activity, DegradationModel, Schedule, sample_path
from .milp import SolverConfig
from .stn import Carryover, StnBuildConfig, batch_sizes, extract_schedule, solve_stn
from .uncertainty import build_set

log = logging.getLogger(__name__)

SLACK_TOL = 1e-6


@dataclass
class Iteration:
    index: int
    status: str
    objective: float | None
    gap: float | None
    wall_time: float
    demand_slack: dict = field(default_factory=dict)  # product -> unmet demand at the period end
    storage_slack: float = 0.0
    plan_slack: float = 0.0
    maintenance: int = 0


@dataclass
class RollResult:
    instance_name: str
    scenario: str
    alpha: float
    schedule: Schedule
    iterations: list
    status: str  # ok | error
    cost: dict  # maintenance, storage, final_signal, slack, total
    signals: dict  # unit -> carried signal after each iteration
    stock_end: dict

    @property
    def total_cost(self) -> float:
        return self.cost["total"]

    @property
    def sequences(self) -> dict:
        return extract_mode_sequences(self)

    @property
    def slack_log(self) -> list:
        rows = []
        for it in self.iterations:
            for prod, val in it.demand_slack.items():
                if val > 1e-6:
                    rows.append((it.index, prod, val))
        return rows

    def to_csv(self, path) -> None:
        write_labels_csv(self.schedule, path)

    def to_svg(self, path, title: str | None = None) -> None:
        with open(path, "w") as fh:
            fh.write(gantt_svg(self.schedule, title or f"{self.instance_name} alpha={self.alpha:g}"))


def _carry_forward(instance, result, stocks, s_start, signal_model, rng, simulate):
    """Stocks, signals and occupancy handed to the next iteration."""
    M = result.model
    nS = M.nS
    x = result.solution.values
    new_stocks = {}
    for st in instance.states:
        if math.isinf(stocks.get(st.name, st.initial)):
            new_stocks[st.name] = math.inf
        else:
            new_stocks[st.name] = max(0.0, float(x[M.v["qfin"][(st.name,)]]))
    sched = extract_schedule(result)
    sizes = batch_sizes(result)
    carry = Carryover()
    for unit, acts in sched.activities.items():
        over = max((a.end - nS for a in acts), default=0)
        if over > 0:
            carry.blocked[unit] = over
        for a in acts:
            if a.is_maintenance or a.end <= nS:
                continue
            amount = sizes[(a.task, unit, a.mode, a.start)]
            for s, r in instance.task(a.task).produces.items():
                key = (s, a.end - nS)
                carry.arrivals[key] = carry.arrivals.get(key, 0.0) + r * amount
    new_s = {}
    for u in instance.units:
        j = u.name
        if simulate:
            path = sample_path(signal_model, sched, j, seed=rng, s_init=s_start[j])
            # the path ends at the horizon; spill-over tasks are charged in full at their start
            s = float(path.values[-1])
            for a in sched.unit_activities(j):
                if not a.is_maintenance and a.end > nS:
                    frac = (a.end - nS) / a.steps
                    s += frac * instance.mode_data(a.task, j, a.mode).d
            if s > u.s_max:
                log.warning("simulated signal of %s exceeds s_max (%.3g); clamped", j, s)
            new_s[j] = float(min(max(s, 0.0), u.s_max))
        else:
            # the planned signal: worst-case increments, as in the model's own health rows
            s = s_start[j]
            for a in sched.unit_activities(j):
                if a.is_maintenance:
                    s = u.s_0
                else:
                    s += M.dmax[(a.task, j, a.mode)]
            new_s[j] = float(min(s, u.s_max))
    return new_stocks, new_s, carry, sched


def roll(instance, scenario: str = "avg", alpha: float = 0.5, n_periods: int = 12,
         solver_config: SolverConfig | None = None, seed: int = 0, *, variant: str = "deterministic",
         simulate_degradation: bool = False, demand: dict | None = None,
         n_plan: int | None = None, planning: bool = True) -> RollResult:
    """Solve ``n_periods`` consecutive iterations and stitch their scheduling horizons.

    ``demand`` optionally replaces the scenario table (product -> per-period
    values).  ``seed`` drives the solver seed of each iteration and, with
    ``simulate_degradation``, the realised signal between iterations.
    """
    if n_periods < 1:
        raise ValueError("n_periods must be >= 1")
    solver_config = solver_config or SolverConfig()
    unc = build_set(instance, alpha)
    nS = instance.horizons.n_sched
    ss = np.random.SeedSequence(seed)
    solver_seeds = ss.spawn(1)[0].generate_state(n_periods)
    rng = np.random.default_rng(ss.spawn(1)[0])
    signal_model = DegradationModel.from_instance(instance)

    stocks = {s.name: s.initial for s in instance.states}
    s_start = {u.name: u.s_init for u in instance.units}
    carry = Carryover()
    acts = {u.name: [] for u in instance.units}
    iterations = []
    signals = {u.name: [] for u in instance.units}
    cost = {"maintenance": 0.0, "storage": 0.0, "slack": 0.0, "final_signal": 0.0}
    status = "ok"
    penalty = None
    for r in range(n_periods):
        dem = None
        if demand is not None:
            dem = {p: list(v)[r:] for p, v in demand.items()}
        cfg = StnBuildConfig(variant=variant, uncertainty=unc, scenario=scenario, demand_offset=r,
                             demand=dem, s_start=dict(s_start), stocks=dict(stocks), carry=carry,
                             n_plan=n_plan, planning=planning)
        sc = replace(solver_config, seed=int(solver_seeds[r]) % (2**31 - 1))
        result = solve_stn(instance, cfg, sc)
        sol = result.solution
        penalty = result.model.penalty
        if not result.ok:
            iterations.append(Iteration(r, sol.status, None, None, sol.wall_time))
            status = "error"
            log.error("iteration %d failed: %s %s", r, sol.status, sol.message)
            break
        x = sol.values
        M = result.model
        dslack = {p: float(x[M.v["phid"][(p,)]]) for p in instance.products}
        qslack = float(sum(x[i] for i in M.v["phiq"].values()))
        pslack = float(sum(x[i] for i in M.v.get("phidp", {}).values()))
        stocks, s_start, carry, sched = _carry_forward(instance, result, stocks, s_start,
                                                       signal_model, rng, simulate_degradation)
        n_maint = 0
        for unit, lst in sched.activities.items():
            for a in lst:
                acts[unit].append(Activity(a.start + r * nS, a.steps, a.task, a.mode))
                n_maint += a.is_maintenance
        for u in instance.units:
            signals[u.name].append(s_start[u.name])
            cost["maintenance"] += u.c_maint * sched.maintenance_count(u.name)
        for st in instance.states:
            if st.storage_cost and math.isfinite(stocks[st.name]):
                cost["storage"] += st.storage_cost * stocks[st.name]
        # slack below the feasibility tolerance is solver noise, not unmet demand
        cost["slack"] += penalty * sum(v for v in (*dslack.values(), qslack) if v > SLACK_TOL)
        iterations.append(Iteration(r, sol.status, sol.objective, sol.gap, sol.wall_time,
                                    dslack, qslack, pslack, n_maint))
    done = len([it for it in iterations if it.objective is not None])
    for u in instance.units:
        if signals[u.name]:
            cost["final_signal"] += float(u.c_maint * signals[u.name][-1] / u.s_max)
    cost["total"] = float(sum(cost.values()))
    # activities of a failed roll are truncated to the completed iterations
    sched = Schedule(instance.horizons.dt_S, max(done, 0) * nS if status == "error" else n_periods * nS,
                     acts)
    return RollResult(instance.name, scenario, float(alpha), sched, iterations, status, cost, signals,
                      stocks)


def extract_mode_sequences(roll_result) -> dict:
    """Per-unit step labels: ``(task, mode)``, ``"idle"`` or ``"maint"``.

    Raises ``ValueError`` on overlapping activities.
    """
    sched = roll_result.schedule if isinstance(roll_result, RollResult) else roll_result
    return {u: sched.labels(u) for u in sched.activities}


def token_sequence(schedule: Schedule, unit: str) -> list:
    """Symbols of one unit in time order: one ``(task, mode)`` per task run, one ``"idle"``
    per idle step; maintenance is dropped.
    """
    starts = {a.start: a for a in schedule.unit_activities(unit)}
    out = []
    for n, lab in enumerate(schedule.labels(unit)):
        if lab == IDLE:
            out.append(IDLE)
        elif lab != MAINT and n in starts:
            a = starts[n]
            out.append((a.task, a.mode))
    return out


# -- output ----------------------------------------------------------------------------

def write_labels_csv(schedule: Schedule, path) -> None:
    units = list(schedule.activities)
    labels = {u: schedule.labels(u) for u in units}
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "time"] + units)
        for n in range(schedule.n_steps):
            row = [n, f"{n * schedule.dt:g}"]
            for u in units:
                lab = labels[u][n]
                row.append(lab if isinstance(lab, str) else f"{lab[0]}:{lab[1]}")
            w.writerow(row)


_PALETTE = ["#4e79a7", "#f28e2b", "#59a14f", "#b07aa1", "#76b7b2", "#edc948", "#ff9da7",
            "#9c755f", "#bab0ac", "#e15759"]


def gantt_svg(schedule: Schedule, title: str = "") -> str:
    """Standalone SVG 1.1 Gantt chart, one lane per unit."""
    from xml.sax.saxutils import escape

    units = list(schedule.activities)
    px, lane, left, top = 8.0, 26.0, 110.0, 34.0
    width = left + schedule.n_steps * px + 20
    height = top + lane * len(units) + 30
    colors = {}
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0f}" '
        f'height="{height:.0f}" font-family="sans-serif" font-size="11">',
        f'<text x="{left}" y="18" font-size="13">{escape(title)}</text>',
    ]
    for row, u in enumerate(units):
        y = top + row * lane
        parts.append(f'<text x="6" y="{y + 16}">{escape(u)}</text>')
        parts.append(f'<rect x="{left}" y="{y}" width="{schedule.n_steps * px}" height="{lane - 4}" '
                     'fill="#f4f4f4" stroke="#ccc"/>')
        for a in schedule.unit_activities(u):
            end = min(a.end, schedule.n_steps)
            x0 = left + a.start * px
            wdt = (end - a.start) * px
            if a.is_maintenance:
                fill, label = "#d62728", "M"
            else:
                label = f"{a.task}:{a.mode}"
                fill = colors.setdefault(label, _PALETTE[len(colors) % len(_PALETTE)])
            parts.append(f'<rect x="{x0:.1f}" y="{y}" width="{wdt:.1f}" height="{lane - 4}" '
                         f'fill="{fill}" stroke="#333"><title>{escape(label)} @ {a.start}</title></rect>')
    axis_y = top + lane * len(units) + 14
    step = max(1, schedule.n_steps // 12)
    for n in range(0, schedule.n_steps + 1, step):
        parts.append(f'<text x="{left + n * px:.1f}" y="{axis_y}" text-anchor="middle">'
                     f'{n * schedule.dt:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- training data -------------------------------------------------------------------------

@dataclass
class TrainingDataset:
    """Scheduling-horizon solutions under sampled demands.

    ``psi`` holds one row of product demands per sample (columns
    ``products``).  The symbols of a unit are its ``(task, mode)`` pairs
    followed by ``"idle"``.  ``freq[unit]`` counts task runs per symbol and
    idle steps for ``"idle"``; ``trans[unit]`` counts transitions between
    consecutive symbols of the token sequence (maintenance dropped).
    """

    instance_name: str
    products: list
    psi: np.ndarray
    symbols: dict
    freq: dict
    trans: dict
    sequences: dict  # unit -> list of per-sample symbol sequences
    n_steps: int
    alpha: float

    def __len__(self) -> int:
        return len(self.psi)

    def to_csv(self, path) -> None:
        header = [f"psi:{p}" for p in self.products]
        for u, syms in self.symbols.items():
            names = [symbol_name(k) for k in syms]
            header += [f"n:{u}:{k}" for k in names]
            header += [f"t:{u}:{a}>{b}" for a in names for b in names]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for r in range(len(self)):
                row = [repr(float(v)) for v in self.psi[r]]
                for u, syms in self.symbols.items():
                    row += [int(v) for v in self.freq[u][r]]
                    row += [int(v) for v in self.trans[u][r].ravel()]
                w.writerow(row)

    @classmethod
    def from_csv(cls, path, instance) -> "TrainingDataset":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        products = [h.split(":", 1)[1] for h in header if h.startswith("psi:")]
        symbols = unit_symbols(instance)
        psi = np.array([[float(v) for v in r[:len(products)]] for r in body]).reshape(len(body), -1)
        col = {h: i for i, h in enumerate(header)}
        freq, trans = {}, {}
        for u, syms in symbols.items():
            names = [symbol_name(k) for k in syms]
            fi = [col[f"n:{u}:{k}"] for k in names]
            ti = [col[f"t:{u}:{a}>{b}"] for a in names for b in names]
            freq[u] = np.array([[int(r[i]) for i in fi] for r in body]).reshape(len(body), len(syms))
            trans[u] = np.array([[int(r[i]) for i in ti] for r in body]).reshape(
                len(body), len(syms), len(syms))
        return cls(instance.name, products, psi, symbols, freq, trans, {u: [] for u in symbols},
                   instance.horizons.n_sched, float("nan"))


def unit_symbols(instance) -> dict:
    return {u.name: [(t, m) for t, _, m in instance.triples(u.name)] + [IDLE]
            for u in instance.units}


def symbol_name(sym) -> str:
    return sym if isinstance(sym, str) else f"{sym[0]}-{sym[1]}"


def _counts(symbols, seq):
    idx = {s: i for i, s in enumerate(symbols)}
    f = np.zeros(len(symbols), int)
    t = np.zeros((len(symbols), len(symbols)), int)
    prev = None
    for s in seq:
        if s == MAINT:
            continue
        f[idx[s]] += 1
        if prev is not None:
            t[idx[prev], idx[s]] += 1
        prev = s
    return f, t


def latin_hypercube(demand_box: dict, n_samples: int, seed) -> tuple:
    products = list(demand_box)
    sampler = qmc.LatinHypercube(d=len(products), seed=np.random.default_rng(seed))
    lo = np.array([demand_box[p][0] for p in products], float)
    hi = np.array([demand_box[p][1] for p in products], float)
    u = sampler.random(n_samples)
    return products, lo + u * (hi - lo)


def default_demand_box(instance) -> dict:
    """Per-product range spanned by all demand scenarios."""
    box = {}
    for p in instance.products:
        vals = [v for sc in instance.scenarios for v in instance.demand[sc].get(p, ())]
        box[p] = (min(vals), max(vals)) if vals else (0.0, 0.0)
    return box


def generate_training_data(instance, n_samples: int, demand_box: dict | None = None,
                           alpha: float = 0.5, solver_config: SolverConfig | None = None,
                           seed: int = 0, jobs: int = 1) -> TrainingDataset:
    """Scheduling-horizon-only solves at Latin-hypercube demand points."""
    if n_samples < 2:
        raise ValueError("n_samples must be >= 2")
    solver_config = solver_config or SolverConfig()
    demand_box = demand_box or default_demand_box(instance)
    products, pts = latin_hypercube(demand_box, n_samples, seed)
    unc = build_set(instance, alpha)
    symbols = unit_symbols(instance)

    def one(row):
        dem = {p: [float(pts[row, c])] for c, p in enumerate(products)}
        cfg = StnBuildConfig(uncertainty=unc, demand=dem, planning=False)
        res = solve_stn(instance, cfg, replace(solver_config, seed=row))
        if not res.ok:
            log.warning("training sample %d skipped: %s", row, res.solution.status)
            return None
        sched = extract_schedule(res)
        return {u: token_sequence(sched, u) for u in symbols}

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            seqs = list(ex.map(one, range(n_samples)))
    else:
        seqs = [one(r) for r in range(n_samples)]
    keep = [r for r, s in enumerate(seqs) if s is not None]
    if len(keep) < n_samples:
        log.warning("%d of %d training solves failed", n_samples - len(keep), n_samples)
    freq = {u: [] for u in symbols}
    trans = {u: [] for u in symbols}
    sequences = {u: [] for u in symbols}
    for r in keep:
        for u, syms in symbols.items():
            f, t = _counts(syms, seqs[r][u])
            freq[u].append(f)
            trans[u].append(t)
            sequences[u].append(seqs[r][u])
    n = len(keep)
    return TrainingDataset(
        instance.name, products, pts[keep], symbols,
        {u: np.array(v, int).reshape(n, len(symbols[u])) for u, v in freq.items()},
        {u: np.array(v, int).reshape(n, len(symbols[u]), len(symbols[u])) for u, v in trans.items()},
        sequences, instance.horizons.n_sched, float(alpha))
