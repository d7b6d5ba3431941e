"""State-task-network instances with degradation data.

An instance bundles the plant topology (states, tasks, units), the
per-(task, unit, mode) processing time and degradation increment
parameters, the two time grids and the demand scenarios.  Instances are
stored as JSON; unbounded capacities and stocks use the string ``"inf"``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

INF_TOKEN = "inf"
BUILTIN_NAMES = ("toy", "p1", "p2", "p4", "p6")


class InstanceError(ValueError):
    """Raised when an instance file cannot be parsed or fails validation."""

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


@dataclass(frozen=True)
class Horizons:
    T_S: float
    dt_S: float
    T_P: float
    dt_P: float

    @property
    def n_sched(self) -> int:
        """Number of scheduling steps."""
        return int(round(self.T_S / self.dt_S))

    @property
    def n_plan(self) -> int:
        """Number of planning periods after the scheduling horizon."""
        return int(round(self.T_P / self.dt_P)) - 1

    @property
    def n_periods(self) -> int:
        """Demand rows: the scheduling horizon plus every planning period."""
        return int(round(self.T_P / self.dt_P))

    @property
    def steps_per_period(self) -> int:
        return int(round(self.dt_P / self.dt_S))


@dataclass(frozen=True)
class State:
    name: str
    capacity: float = math.inf
    initial: float = 0.0
    storage_cost: float = 0.0
    is_product: bool = False


@dataclass(frozen=True)
class Unit:
    name: str
    s_max: float
    s_init: float
    s_0: float
    tau: float
    c_maint: float
    c_fail: float
    c_fail_is_default: bool = False


@dataclass(frozen=True)
class ModeData:
    p: float
    d: float
    sigma: float


@dataclass(frozen=True)
class UnitTask:
    v_min: float
    v_max: float
    modes: dict


@dataclass(frozen=True)
class Task:
    name: str
    consumes: dict
    produces: dict
    units: dict


@dataclass(frozen=True)
class Instance:
    name: str
    states: tuple
    units: tuple
    tasks: tuple
    horizons: Horizons
    demand: dict
    idle_mean: float = 0.0
    idle_sigma: float = 0.05
    provenance: tuple = field(default=(), compare=False)

    # -- lookups -------------------------------------------------------
    def state(self, name: str) -> State:
        for s in self.states:
            if s.name == name:
                return s
        raise KeyError(name)

    def unit(self, name: str) -> Unit:
        for u in self.units:
            if u.name == name:
                return u
        raise KeyError(name)

    def task(self, name: str) -> Task:
        for t in self.tasks:
            if t.name == name:
                return t
        raise KeyError(name)

    @property
    def modes(self) -> list:
        seen = []
        for t in self.tasks:
            for ut in t.units.values():
                for k in ut.modes:
                    if k not in seen:
                        seen.append(k)
        return seen

    @property
    def products(self) -> list:
        return [s.name for s in self.states if s.is_product]

    @property
    def scenarios(self) -> list:
        return list(self.demand)

    def triples(self, unit: str | None = None) -> list:
        """(task, unit, mode) triples in declaration order."""
        out = []
        for t in self.tasks:
            for j, ut in t.units.items():
                if unit is not None and j != unit:
                    continue
                for k in ut.modes:
                    out.append((t.name, j, k))
        if unit is None:
            order = {u.name: n for n, u in enumerate(self.units)}
            out.sort(key=lambda x: order[x[1]])
        return out

    def mode_data(self, task: str, unit: str, mode: str) -> ModeData:
        return self.task(task).units[unit].modes[mode]

    def unit_modes(self, unit: str) -> list:
        """Operating modes available on a unit (the set K_j)."""
        seen = []
        for _, _, k in self.triples(unit):
            if k not in seen:
                seen.append(k)
        return seen

    def steps(self, duration: float) -> int:
        """Duration rounded up to whole scheduling steps."""
        return max(1, math.ceil(duration / self.horizons.dt_S - 1e-9))

    def demand_rows(self, scenario: str) -> dict:
        return self.demand[scenario]


# -- (de)serialisation -------------------------------------------------

def _num(x):
    if isinstance(x, str):
        if x.strip().lower() in (INF_TOKEN, "infinity"):
            return math.inf
        raise InstanceError(f"expected a number or '{INF_TOKEN}', got {x!r}")
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise InstanceError(f"expected a number, got {x!r}")
    return float(x)


def _out(x):
    if math.isinf(x):
        return INF_TOKEN
    return int(x) if float(x).is_integer() else x


def instance_from_dict(data: dict) -> Instance:
    try:
        hz = data["horizons"]
        horizons = Horizons(*(_num(hz[k]) for k in ("T_S", "dt_S", "T_P", "dt_P")))
        states = tuple(
            State(s["name"], _num(s.get("capacity", INF_TOKEN)), _num(s.get("initial", 0)),
                  _num(s.get("storage_cost", 0)), bool(s.get("is_product", False)))
            for s in data["states"])
        units = tuple(
            Unit(u["name"], _num(u["s_max"]), _num(u["s_init"]), _num(u.get("s_0", 0)),
                 _num(u["tau"]), _num(u["c_maint"]), _num(u["c_fail"]),
                 bool(u.get("c_fail_is_default", False)))
            for u in data["units"])
        tasks = []
        for t in data["tasks"]:
            uts = {}
            for j, ut in t["units"].items():
                modes = {k: ModeData(_num(m["p"]), _num(m["d"]), _num(m["sigma"]))
                         for k, m in ut["modes"].items()}
                uts[j] = UnitTask(_num(ut.get("v_min", 0)), _num(ut["v_max"]), modes)
            tasks.append(Task(t["name"], {s: _num(r) for s, r in t.get("consumes", {}).items()},
                              {s: _num(r) for s, r in t.get("produces", {}).items()}, uts))
        demand = {sc: {s: tuple(_num(v) for v in rows) for s, rows in table.items()}
                  for sc, table in data.get("demand", {}).items()}
        idle = data.get("idle", {})
        inst = Instance(str(data["name"]), states, units, tuple(tasks), horizons, demand,
                        _num(idle.get("mean", 0.0)), _num(idle.get("sigma", 0.05)),
                        tuple(data.get("provenance", ())))
    except KeyError as exc:
        raise InstanceError(f"missing key {exc.args[0]!r}") from None
    except (TypeError, AttributeError) as exc:
        raise InstanceError(f"malformed instance: {exc}") from None
    return inst


def instance_to_dict(inst: Instance) -> dict:
    hz = inst.horizons
    out = {
        "name": inst.name,
        "provenance": list(inst.provenance),
        "horizons": {"T_S": _out(hz.T_S), "dt_S": _out(hz.dt_S),
                     "T_P": _out(hz.T_P), "dt_P": _out(hz.dt_P)},
        "idle": {"mean": inst.idle_mean, "sigma": inst.idle_sigma},
        "states": [{"name": s.name, "capacity": _out(s.capacity), "initial": _out(s.initial),
                    "storage_cost": _out(s.storage_cost), "is_product": s.is_product}
                   for s in inst.states],
        "units": [],
        "tasks": [],
        "demand": {sc: {s: [_out(v) for v in rows] for s, rows in table.items()}
                   for sc, table in inst.demand.items()},
    }
    for u in inst.units:
        d = {"name": u.name, "s_max": _out(u.s_max), "s_init": _out(u.s_init), "s_0": _out(u.s_0),
             "tau": _out(u.tau), "c_maint": _out(u.c_maint), "c_fail": _out(u.c_fail)}
        if u.c_fail_is_default:
            d["c_fail_is_default"] = True
        out["units"].append(d)
    for t in inst.tasks:
        out["tasks"].append({
            "name": t.name,
            "consumes": {s: _out(r) for s, r in t.consumes.items()},
            "produces": {s: _out(r) for s, r in t.produces.items()},
            "units": {j: {"v_min": _out(ut.v_min), "v_max": _out(ut.v_max),
                          "modes": {k: {"p": _out(m.p), "d": _out(m.d), "sigma": _out(m.sigma)}
                                    for k, m in ut.modes.items()}}
                      for j, ut in t.units.items()},
        })
    return out


# -- validation ----------------------------------------------------------

def validation_errors(inst: Instance) -> list:
    """Every violated invariant, as human-readable strings."""
    errs = []
    hz = inst.horizons
    for key in ("T_S", "dt_S", "T_P", "dt_P"):
        if not getattr(hz, key) > 0:
            errs.append(f"horizons.{key} must be positive")
    if not errs:
        if abs(hz.T_S / hz.dt_S - round(hz.T_S / hz.dt_S)) > 1e-9:
            errs.append("horizons: dt_S must divide T_S")
        if abs(hz.T_P / hz.dt_P - round(hz.T_P / hz.dt_P)) > 1e-9:
            errs.append("horizons: dt_P must divide T_P")
        if hz.dt_P < hz.dt_S:
            errs.append("horizons: dt_P must be at least dt_S")

    names = [s.name for s in inst.states]
    if len(set(names)) != len(names):
        errs.append("states: duplicate names")
    for s in inst.states:
        if s.capacity < 0:
            errs.append(f"state {s.name}: capacity must be nonnegative")
        if s.storage_cost < 0:
            errs.append(f"state {s.name}: storage_cost must be nonnegative")
        if s.initial < 0 or s.initial > s.capacity:
            errs.append(f"state {s.name}: initial stock must lie in [0, capacity]")

    unames = [u.name for u in inst.units]
    if len(set(unames)) != len(unames):
        errs.append("units: duplicate names")
    for u in inst.units:
        if not (u.s_0 <= u.s_init <= u.s_max):
            errs.append(f"unit {u.name}: requires s_0 <= s_init <= s_max "
                        f"(got {u.s_0}, {u.s_init}, {u.s_max})")
        if u.tau < 1:
            errs.append(f"unit {u.name}: tau must be >= 1")
        for key in ("c_maint", "c_fail"):
            if getattr(u, key) < 0:
                errs.append(f"unit {u.name}: {key} must be nonnegative")

    tnames = [t.name for t in inst.tasks]
    if len(set(tnames)) != len(tnames):
        errs.append("tasks: duplicate names")
    for t in inst.tasks:
        if not t.units:
            errs.append(f"task {t.name}: must run on at least one unit")
        for label, fr in (("consumes", t.consumes), ("produces", t.produces)):
            for s, r in fr.items():
                if s not in names:
                    errs.append(f"task {t.name}: {label} unknown state {s!r}")
                if r < 0:
                    errs.append(f"task {t.name}: {label} fraction for {s!r} is negative")
            if fr and abs(sum(fr.values()) - 1.0) > 1e-9:
                errs.append(f"task {t.name}: {label} fractions must sum to 1")
            if not fr:
                errs.append(f"task {t.name}: {label} is empty")
        for j, ut in t.units.items():
            where = f"task {t.name} on {j}"
            if j not in unames:
                errs.append(f"{where}: unknown unit")
            if ut.v_min < 0 or ut.v_max < 0:
                errs.append(f"{where}: batch bounds must be nonnegative")
            if ut.v_min > ut.v_max:
                errs.append(f"{where}: v_min exceeds v_max")
            if not ut.modes:
                errs.append(f"{where}: no operating modes")
            for k, m in ut.modes.items():
                if m.p < 1:
                    errs.append(f"{where} mode {k}: processing time must be >= 1")
                if m.d < 0:
                    errs.append(f"{where} mode {k}: nominal degradation must be >= 0")
                if m.sigma < 0:
                    errs.append(f"{where} mode {k}: sigma must be >= 0")

    if inst.idle_sigma < 0:
        errs.append("idle: sigma must be nonnegative")
    if not errs:
        nrows = hz.n_periods
        for sc, table in inst.demand.items():
            for s, rows in table.items():
                if s not in names:
                    errs.append(f"demand {sc}: unknown state {s!r}")
                if len(rows) != nrows:
                    errs.append(f"demand {sc}/{s}: expected {nrows} rows, got {len(rows)}")
                if any(v < 0 or math.isnan(v) for v in rows):
                    errs.append(f"demand {sc}/{s}: values must be nonnegative")
    return errs


def validate(inst: Instance) -> Instance:
    errs = validation_errors(inst)
    if errs:
        raise InstanceError(errs)
    return inst


# -- file API ------------------------------------------------------------

def load_instance(path) -> Instance:
    """Read and validate an instance file.

    ``path`` may also be one of the bundled names ("toy", "p1", ...).
    """
    p = Path(path)
    if not p.exists() and str(path).lower() in BUILTIN_NAMES:
        return builtin_instance(str(path).lower())
    try:
        data = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{p}: not valid JSON ({exc})") from None
    return validate(instance_from_dict(data))


def save_instance(inst: Instance, path) -> None:
    validate(inst)
    text = json.dumps(instance_to_dict(inst), indent=1) + "\n"
    Path(path).write_text(text)


def builtin_instance(name: str) -> Instance:
    ref = resources.files("degrade_opt") / "instances" / f"{name}.json"
    data = json.loads(ref.read_text())
    return validate(instance_from_dict(data))


def builtin_instances() -> list:
    return [builtin_instance(n) for n in BUILTIN_NAMES]
