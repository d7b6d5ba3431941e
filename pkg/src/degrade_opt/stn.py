"""Degradation-aware state-task-network MILP.

The model couples a detailed discrete-time schedule (scheduling horizon)
with an aggregate plan (planning horizon).  Each unit carries a
degradation signal that grows with every task start, must stay below
``s_max`` and is reset by maintenance.

Two variants are built:

* ``deterministic`` - the signal grows by the worst-case increment
  ``d_max = d_bar (1 + eps)`` of the box uncertainty set;
* ``robust`` - the signal is an affine decision rule
  ``[s]_0 + sum_k [s]_k d_k`` in the uncertain increments and each
  semi-infinite health row is replaced by its LP dual over the box.

Any feasible deterministic solution lifts to a robust-feasible decision
rule (:func:`lift_deterministic_solution`), which
:func:`check_robust_feasibility` verifies vertex by vertex.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .degradation import Activity, Schedule
from .milp import BINARY, CONTINUOUS, INTEGER, MilpModel, MilpSolution, SolverConfig, solve
from .uncertainty import UncertaintySet, nominal_set


# -- configuration ------------------------------------------------------------------

@dataclass
class Carryover:
    """State handed from one rolling-horizon iteration to the next."""

    blocked: dict = field(default_factory=dict)  # unit -> steps still occupied
    arrivals: dict = field(default_factory=dict)  # (state, step) -> amount arriving


@dataclass
class StnBuildConfig:
    variant: str = "deterministic"
    uncertainty: UncertaintySet | None = None
    scenario: str = "avg"
    demand_offset: int = 0
    demand: dict | None = None  # product -> per-period values, overrides the scenario
    s_start: dict | None = None  # unit -> signal at the start of the horizon
    stocks: dict | None = None  # state -> initial stock
    carry: Carryover | None = None
    penalty: float | None = None
    planning: bool = True
    n_plan: int | None = None

    def __post_init__(self):
        if self.variant not in ("deterministic", "robust"):
            raise ValueError(f"unknown variant {self.variant!r}")


class StnModel(MilpModel):
    """MILP plus the index maps needed to read a solution back."""

    def __init__(self, instance, config: StnBuildConfig):
        super().__init__(f"stn_{instance.name}_{config.variant}")
        self.instance = instance
        self.config = config
        self.v = {}  # family -> {key: column}
        self.nS = instance.horizons.n_sched
        self.nP = 0
        self.P = {}  # triple -> steps
        self.R = {}  # unit -> maintenance steps
        self.penalty = 0.0
        self.s_start = {}
        self.dmax = {}
        self.cost_terms = {"maintenance": {}, "storage": {}, "slack": {}, "final_signal": {}}

    def var(self, family, key, kind=CONTINUOUS, lb=0.0, ub=math.inf):
        idx = self.add_var(f"{family}[{','.join(map(str, key))}]", kind, lb, ub, tag=family)
        self.v.setdefault(family, {})[key] = idx
        return idx

    def get(self, family, key):
        return self.v.get(family, {}).get(key)


# -- helpers -----------------------------------------------------------------------

def demand_vector(instance, config: StnBuildConfig, product: str, n_rows: int) -> list:
    if config.demand is not None:
        rows = list(config.demand.get(product, []))
        offset = 0
    else:
        rows = list(instance.demand[config.scenario].get(product, []))
        offset = config.demand_offset
    out = []
    for r in range(n_rows):
        idx = offset + r
        out.append(float(rows[idx]) if idx < len(rows) else 0.0)
    return out


def slack_penalty(instance, n_plan: int) -> float:
    """Per-unit slack penalty exceeding every maintenance and storage cost the model can incur."""
    nS = instance.horizons.n_sched
    maint = 0.0
    for u in instance.units:
        R = instance.steps(u.tau)
        maint += u.c_maint * (1 + math.ceil(nS / R) + n_plan)
    storage = sum(s.storage_cost for s in instance.states) * (n_plan + 1)
    return float(math.ceil(maint + storage + 1.0))


def _row(model, coefs, sense, rhs, name, tag):
    return model.add_constr(coefs, sense, rhs, name=name, tag=tag)


# -- builders ------------------------------------------------------------------------

def _build(instance, config: StnBuildConfig) -> StnModel:
    M = StnModel(instance, config)
    hz = instance.horizons
    nS = M.nS
    nP = (config.n_plan if config.n_plan is not None else hz.n_plan) if config.planning else 0
    M.nP = nP
    unc = config.uncertainty or nominal_set(instance)
    robust = config.variant == "robust"
    M.penalty = config.penalty if config.penalty is not None else slack_penalty(instance, nP)
    carry = config.carry or Carryover()
    triples = instance.triples()
    for key in triples:
        M.P[key] = instance.steps(instance.mode_data(*key).p)
        M.dmax[key] = unc.d_max(key)
    for u in instance.units:
        M.R[u.name] = instance.steps(u.tau)
        s0 = (config.s_start or {}).get(u.name, u.s_init)
        M.s_start[u.name] = float(s0)
    by_unit = {u.name: instance.triples(u.name) for u in instance.units}
    dt_S, dt_P = hz.dt_S, hz.dt_P
    products = instance.products
    stocks = config.stocks or {}

    # ---- scheduling variables
    for key in triples:
        for t in range(nS):
            M.var("w", key + (t,), BINARY)
    for key in triples:
        for t in range(nS):
            M.var("b", key + (t,))
    for u in instance.units:
        for t in range(nS):
            M.var("m", (u.name, t), BINARY)
    for st in instance.states:
        for t in range(nS):
            M.var("q", (st.name, t))
        for t in range(nS):
            M.var("phiq", (st.name, t))
        init = stocks.get(st.name, st.initial)
        if math.isinf(init):
            M.var("qsrc", (st.name,))
    if not robust:
        for u in instance.units:
            for t in range(nS):
                M.var("s", (u.name, t))
    else:
        for u in instance.units:
            for t in range(nS):
                M.var("s0c", (u.name, t), lb=-math.inf)
                for key in by_unit[u.name]:
                    M.var("skc", (u.name, t) + key, lb=-math.inf)
                for c in (1, 2, 3, 4):
                    for key in by_unit[u.name]:
                        M.var("du", (c, u.name, t) + key)
                        M.var("dl", (c, u.name, t) + key)

    # ---- interface variables
    for st in instance.states:
        M.var("qfin", (st.name,), ub=st.capacity)
        M.var("phid", (st.name,))
    for u in instance.units:
        M.var("spill", (u.name,), INTEGER, ub=max(M.R[u.name], max(
            (M.P[k] for k in by_unit[u.name]), default=0)))

    # ---- planning variables
    for l in range(nP):
        for key in triples:
            cap = math.floor(dt_P / (M.P[key] * dt_S) + 1e-9)
            M.var("n", key + (l,), INTEGER, ub=cap)
        for key in triples:
            M.var("a", key + (l,))
        for u in instance.units:
            M.var("mp", (u.name, l), BINARY)
        for u in instance.units:
            for k in instance.unit_modes(u.name):
                M.var("omega", (u.name, k, l), BINARY)
        for st in instance.states:
            M.var("qp", (st.name, l), ub=st.capacity)
        for p in products:
            M.var("phidp", (p, l))
        for u in instance.units:
            if not robust:
                M.var("sp", (u.name, l), ub=u.s_max)
            else:
                M.var("s0p", (u.name, l))
                for key in by_unit[u.name]:
                    M.var("skp", (u.name, l) + key)
                for c in (2, 3, 4):
                    for key in by_unit[u.name]:
                        M.var("dup", (c, u.name, l) + key)
                        M.var("dlp", (c, u.name, l) + key)

    w = M.v["w"]
    b = M.v["b"]
    m = M.v["m"]
    q = M.v["q"]

    # ---- scheduling: unit occupancy
    for u in instance.units:
        j = u.name
        R = M.R[j]
        busy = int(carry.blocked.get(j, 0))
        for t in range(nS):
            coefs = {}
            for key in by_unit[j]:
                for tp in range(max(0, t - M.P[key] + 1), t + 1):
                    coefs[w[key + (tp,)]] = 1.0
            for tp in range(max(0, t - R + 1), t + 1):
                coefs[m[(j, tp)]] = 1.0
            _row(M, coefs, "<=", 0.0 if t < busy else 1.0, f"occupy[{j},{t}]", "occupy")

    # ---- scheduling: batch bounds
    for key in triples:
        ut = instance.task(key[0]).units[key[1]]
        for t in range(nS):
            i_b, i_w = b[key + (t,)], w[key + (t,)]
            _row(M, {i_b: 1, i_w: -ut.v_max}, "<=", 0.0, f"bmax[{key},{t}]", "batch")
            _row(M, {i_b: 1, i_w: -ut.v_min}, ">=", 0.0, f"bmin[{key},{t}]", "batch")

    # ---- scheduling: material balances and storage slack
    consumers = {s.name: [] for s in instance.states}
    producers = {s.name: [] for s in instance.states}
    for key in triples:
        task = instance.task(key[0])
        for s, r in task.consumes.items():
            consumers[s].append((key, r))
        for s, r in task.produces.items():
            producers[s].append((key, r))
    for st in instance.states:
        s = st.name
        init = stocks.get(s, st.initial)
        for t in range(nS):
            coefs = {q[(s, t)]: 1.0}
            rhs = float(carry.arrivals.get((s, t), 0.0))
            if t > 0:
                coefs[q[(s, t - 1)]] = -1.0
            elif math.isinf(init):
                coefs[M.v["qsrc"][(s,)]] = -1.0
            else:
                rhs += float(init)
            for key, r in producers[s]:
                tp = t - M.P[key]
                if tp >= 0:
                    coefs[b[key + (tp,)]] = coefs.get(b[key + (tp,)], 0.0) - r
            for key, r in consumers[s]:
                coefs[b[key + (t,)]] = coefs.get(b[key + (t,)], 0.0) + r
            _row(M, coefs, "=", rhs, f"balance[{s},{t}]", "balance")
        for t in range(nS):
            iq, iphi = q[(s, t)], M.v["phiq"][(s, t)]
            _row(M, {iq: 1, iphi: -1}, ">=", 0.0, f"storelo[{s},{t}]", "storage")
            if math.isfinite(st.capacity):
                _row(M, {iq: 1, iphi: -1}, "<=", st.capacity, f"storehi[{s},{t}]", "storage")

    # ---- scheduling: health rows
    if not robust:
        _health_deterministic(M, instance, by_unit)
    else:
        _health_robust_schedule(M, instance, by_unit, unc)

    # ---- interface
    d_first = {p: demand_vector(instance, config, p, nP + 1) for p in products}
    for u in instance.units:
        j = u.name
        coefs = {M.v["spill"][(j,)]: 1.0}
        for key in by_unit[j]:
            P = M.P[key]
            for tp in range(max(0, nS - P + 1), nS):
                coefs[w[key + (tp,)]] = -float(P - (nS - tp))
        R = M.R[j]
        for tp in range(max(0, nS - R + 1), nS):
            coefs[m[(j, tp)]] = -float(R - (nS - tp))
        _row(M, coefs, "=", 0.0, f"spilldef[{j}]", "interface")
    for st in instance.states:
        s = st.name
        coefs = {M.v["qfin"][(s,)]: 1.0, M.v["phid"][(s,)]: -1.0, q[(s, nS - 1)]: -1.0}
        for key, r in producers[s]:
            tp = nS - M.P[key]
            if tp >= 0:
                coefs[b[key + (tp,)]] = coefs.get(b[key + (tp,)], 0.0) - r
        dem = d_first[s][0] if s in d_first else 0.0
        rhs = -dem + float(carry.arrivals.get((s, nS), 0.0))
        _row(M, coefs, "=", rhs, f"final[{s}]", "interface")

    # ---- planning horizon
    if nP:
        n = M.v["n"]
        a = M.v["a"]
        mp = M.v["mp"]
        qp = M.v["qp"]
        for l in range(nP):
            for u in instance.units:
                j = u.name
                coefs = {}
                for key in by_unit[j]:
                    coefs[n[key + (l,)]] = M.P[key] * dt_S
                coefs[mp[(j, l)]] = M.R[j] * dt_S
                if l == 0:
                    coefs[M.v["spill"][(j,)]] = dt_S
                    _row(M, coefs, "<=", dt_P, f"pcap0[{j}]", "interface")
                else:
                    _row(M, coefs, "<=", dt_P, f"pcap[{j},{l}]", "plan_capacity")
            for key in triples:
                ut = instance.task(key[0]).units[key[1]]
                ia, i_n = a[key + (l,)], n[key + (l,)]
                _row(M, {ia: 1, i_n: -ut.v_max}, "<=", 0.0, f"amax[{key},{l}]", "plan_batch")
                _row(M, {ia: 1, i_n: -ut.v_min}, ">=", 0.0, f"amin[{key},{l}]", "plan_batch")
            for st in instance.states:
                s = st.name
                coefs = {qp[(s, l)]: 1.0}
                if l == 0:
                    coefs[M.v["qfin"][(s,)]] = -1.0
                    for key, r in producers[s]:
                        for tp in range(max(0, nS - M.P[key] + 1), nS):
                            coefs[b[key + (tp,)]] = coefs.get(b[key + (tp,)], 0.0) - r
                else:
                    coefs[qp[(s, l - 1)]] = -1.0
                for key, r in producers[s]:
                    coefs[a[key + (l,)]] = coefs.get(a[key + (l,)], 0.0) - r
                for key, r in consumers[s]:
                    coefs[a[key + (l,)]] = coefs.get(a[key + (l,)], 0.0) + r
                dem = 0.0
                if s in d_first:
                    dem = d_first[s][l + 1]
                    coefs[M.v["phidp"][(s, l)]] = -1.0
                tag = "interface" if l == 0 else "plan_balance"
                _row(M, coefs, "=", -dem, f"pbal[{s},{l}]", tag)
            for key in triples:
                cap = math.floor(dt_P / (M.P[key] * dt_S) + 1e-9)
                _row(M, {n[key + (l,)]: 1, M.v["omega"][(key[1], key[2], l)]: -cap}, "<=", 0.0,
                     f"modeon[{key},{l}]", "plan_mode")
            for u in instance.units:
                coefs = {M.v["omega"][(u.name, k, l)]: 1.0 for k in instance.unit_modes(u.name)}
                _row(M, coefs, "=", 1.0, f"onemode[{u.name},{l}]", "plan_mode")
        if not robust:
            _health_deterministic_plan(M, instance, by_unit)
        else:
            _health_robust_plan(M, instance, by_unit, unc)

    _objective(M, instance, by_unit, unc)
    return M.seal()


def _health_deterministic(M, instance, by_unit):
    w, m, s = M.v["w"], M.v["m"], M.v["s"]
    for u in instance.units:
        j = u.name
        drop = u.s_max - u.s_0
        for t in range(M.nS):
            i_s, i_m = s[(j, t)], m[(j, t)]
            inc = {w[key + (t,)]: -M.dmax[key] for key in by_unit[j]}
            prev_const = 0.0
            if t > 0:
                inc[s[(j, t - 1)]] = -1.0
            else:
                prev_const = M.s_start[j]
            _row(M, {i_s: 1, i_m: -u.s_0}, ">=", 0.0, f"h1[{j},{t}]", "health")
            _row(M, {i_s: 1, i_m: drop}, "<=", u.s_max, f"h2[{j},{t}]", "health")
            c3 = dict(inc)
            c3[i_s] = 1.0
            c3[i_m] = drop
            _row(M, c3, ">=", prev_const, f"h3[{j},{t}]", "health")
            c4 = dict(inc)
            c4[i_s] = 1.0
            _row(M, c4, "<=", prev_const, f"h4[{j},{t}]", "health")


def _health_deterministic_plan(M, instance, by_unit):
    n, mp, sp, s = M.v["n"], M.v["mp"], M.v["sp"], M.v["s"]
    for u in instance.units:
        j = u.name
        drop = u.s_max - u.s_0
        for l in range(M.nP):
            inc = {n[key + (l,)]: -M.dmax[key] for key in by_unit[j]}
            inc[s[(j, M.nS - 1)] if l == 0 else sp[(j, l - 1)]] = -1.0
            c3 = dict(inc)
            c3[sp[(j, l)]] = 1.0
            c3[mp[(j, l)]] = drop
            _row(M, c3, ">=", 0.0, f"ph3[{j},{l}]", "plan_health")
            c4 = dict(inc)
            c4[sp[(j, l)]] = 1.0
            _row(M, c4, "<=", 0.0, f"ph4[{j},{l}]", "plan_health")


def _dual_block(M, fam_u, fam_l, c, j, t, keys, unc, coef_of, main_extra, rhs, name, tag):
    """Emit sum_k (hi_k u_k - lo_k l_k) + main_extra <= rhs and u_k - l_k >= coef_of(k)."""
    main = dict(main_extra)
    for key in keys:
        bnd = unc.bounds[key]
        iu = M.v[fam_u][(c, j, t) + key]
        il = M.v[fam_l][(c, j, t) + key]
        main[iu] = main.get(iu, 0.0) + bnd.upper
        main[il] = main.get(il, 0.0) - bnd.lower
    _row(M, main, "<=", rhs, f"{name}[{j},{t}]", tag)
    for key in keys:
        coefs, const = coef_of(key)
        row = {M.v[fam_u][(c, j, t) + key]: 1.0, M.v[fam_l][(c, j, t) + key]: -1.0}
        for idx, val in coefs.items():
            row[idx] = row.get(idx, 0.0) - val
        _row(M, row, ">=", const, f"{name}k[{j},{t},{key}]", tag)


def _health_robust_schedule(M, instance, by_unit, unc):
    w, m = M.v["w"], M.v["m"]
    s0c, skc = M.v["s0c"], M.v["skc"]
    for u in instance.units:
        j = u.name
        keys = by_unit[j]
        drop = u.s_max - u.s_0
        for t in range(M.nS):
            i0, i_m = s0c[(j, t)], m[(j, t)]

            def k_now(key, t=t):
                return skc[(j, t) + key]

            if t > 0:
                prev0 = {s0c[(j, t - 1)]: 1.0}
                prev_const = 0.0

                def k_prev(key, t=t):
                    return {skc[(j, t - 1) + key]: 1.0}
            else:
                prev0 = {}
                prev_const = M.s_start[j]

                def k_prev(key):
                    return {}

            # (1) m s0 <= s(d):  sum(hi u - lo l) <= [s]_0 - m s0 ;  u - l >= -[s]_k
            _dual_block(M, "du", "dl", 1, j, t, keys, unc,
                        lambda key: ({k_now(key): -1.0}, 0.0),
                        {i0: -1.0, i_m: u.s_0}, 0.0, "r1", "health")
            # (2) s(d) <= s_max + m (s0 - s_max)
            _dual_block(M, "du", "dl", 2, j, t, keys, unc,
                        lambda key: ({k_now(key): 1.0}, 0.0),
                        {i0: 1.0, i_m: drop}, u.s_max, "r2", "health")

            # (3) s(d) >= s_prev(d) + sum x d + m (s0 - s_max)
            def c3(key, t=t):
                coefs = dict(k_prev(key))
                coefs[k_now(key)] = coefs.get(k_now(key), 0.0) - 1.0
                coefs[w[key + (t,)]] = 1.0
                return coefs, 0.0

            main3 = {i0: -1.0, i_m: -drop}
            for idx, val in prev0.items():
                main3[idx] = main3.get(idx, 0.0) + val
            _dual_block(M, "du", "dl", 3, j, t, keys, unc, c3, main3, -prev_const, "r3", "health")

            # (4) s(d) <= s_prev(d) + sum x d
            def c4(key, t=t):
                coefs = {idx: -val for idx, val in k_prev(key).items()}
                coefs[k_now(key)] = coefs.get(k_now(key), 0.0) + 1.0
                coefs[w[key + (t,)]] = -1.0
                return coefs, 0.0

            main4 = {i0: 1.0}
            for idx, val in prev0.items():
                main4[idx] = main4.get(idx, 0.0) - val
            _dual_block(M, "du", "dl", 4, j, t, keys, unc, c4, main4, prev_const, "r4", "health")


def _health_robust_plan(M, instance, by_unit, unc):
    n, mp = M.v["n"], M.v["mp"]
    s0p, skp = M.v["s0p"], M.v["skp"]
    s0c, skc = M.v["s0c"], M.v["skc"]
    last = M.nS - 1
    for u in instance.units:
        j = u.name
        keys = by_unit[j]
        drop = u.s_max - u.s_0
        for l in range(M.nP):
            i0, i_m = s0p[(j, l)], mp[(j, l)]
            if l == 0:
                prev0 = s0c[(j, last)]

                def k_prev(key):
                    return skc[(j, last) + key]
            else:
                prev0 = s0p[(j, l - 1)]

                def k_prev(key, l=l):
                    return skp[(j, l - 1) + key]

            def k_now(key, l=l):
                return skp[(j, l) + key]

            _dual_block(M, "dup", "dlp", 2, j, l, keys, unc,
                        lambda key: ({k_now(key): 1.0}, 0.0),
                        {i0: 1.0}, u.s_max, "pr2", "plan_health")

            def c3(key, l=l):
                coefs = {k_prev(key): 1.0, k_now(key): -1.0, n[key + (l,)]: 1.0}
                return coefs, 0.0

            _dual_block(M, "dup", "dlp", 3, j, l, keys, unc, c3,
                        {i0: -1.0, prev0: 1.0, i_m: -drop}, 0.0, "pr3", "plan_health")

            def c4(key, l=l):
                coefs = {k_prev(key): -1.0, k_now(key): 1.0, n[key + (l,)]: -1.0}
                return coefs, 0.0

            _dual_block(M, "dup", "dlp", 4, j, l, keys, unc, c4,
                        {i0: 1.0, prev0: -1.0}, 0.0, "pr4", "plan_health")


def _objective(M, instance, by_unit, unc):
    obj = {}
    const = 0.0
    robust = M.config.variant == "robust"
    for u in instance.units:
        j = u.name
        terms = {}
        for t in range(M.nS):
            terms[M.v["m"][(j, t)]] = u.c_maint
        for l in range(M.nP):
            terms[M.v["mp"][(j, l)]] = u.c_maint
        M.cost_terms["maintenance"][j] = terms
        scale = u.c_maint / u.s_max
        fin = {}
        if not robust:
            idx = M.v["sp"][(j, M.nP - 1)] if M.nP else M.v["s"][(j, M.nS - 1)]
            fin[idx] = scale
        else:
            if M.nP:
                fin[M.v["s0p"][(j, M.nP - 1)]] = scale
                for key in by_unit[j]:
                    fin[M.v["skp"][(j, M.nP - 1) + key]] = scale * unc.bounds[key].nominal
            else:
                fin[M.v["s0c"][(j, M.nS - 1)]] = scale
                for key in by_unit[j]:
                    fin[M.v["skc"][(j, M.nS - 1) + key]] = scale * unc.bounds[key].nominal
        M.cost_terms["final_signal"][j] = fin
    for st in instance.states:
        if st.storage_cost:
            terms = {M.v["qfin"][(st.name,)]: st.storage_cost}
            for l in range(M.nP):
                terms[M.v["qp"][(st.name, l)]] = st.storage_cost
            M.cost_terms["storage"][st.name] = terms
    slack = {}
    for fam in ("phid", "phiq", "phidp"):
        for idx in M.v.get(fam, {}).values():
            slack[idx] = M.penalty
    M.cost_terms["slack"]["all"] = slack
    for group in M.cost_terms.values():
        for terms in group.values():
            for idx, c in terms.items():
                obj[idx] = obj.get(idx, 0.0) + c
    M.set_objective(obj, const)


def build_deterministic(instance, config: StnBuildConfig | None = None) -> StnModel:
    """Worst-case deterministic model: increments fixed at the upper box bound."""
    config = config or StnBuildConfig()
    if config.variant != "deterministic":
        raise ValueError("build_deterministic needs variant='deterministic'")
    return _build(instance, config)


def build_robust(instance, config: StnBuildConfig) -> StnModel:
    """Robust counterpart with affine decision rules and dualised health rows."""
    if config.variant != "robust":
        raise ValueError("build_robust needs variant='robust'")
    return _build(instance, config)


def build(instance, config: StnBuildConfig) -> StnModel:
    return _build(instance, config)


# -- solutions --------------------------------------------------------------------

@dataclass
class StnResult:
    model: StnModel
    solution: MilpSolution

    @property
    def ok(self) -> bool:
        return self.solution.status in ("optimal", "feasible-gap") and self.solution.has_values

    def value(self, family, key) -> float:
        return float(self.solution.values[self.model.v[family][key]])

    def values(self, family) -> dict:
        x = self.solution.values
        return {k: float(x[i]) for k, i in self.model.v.get(family, {}).items()}


def solve_stn(instance, config: StnBuildConfig, solver: SolverConfig | None = None) -> StnResult:
    model = build(instance, config)
    return StnResult(model, solve(model, solver))


def objective_breakdown(model: StnModel, values) -> dict:
    x = np.asarray(values, float)
    out = {}
    for group, parts in model.cost_terms.items():
        out[group] = float(sum(c * x[i] for terms in parts.values() for i, c in terms.items()))
    out["slack_amount"] = out["slack"] / model.penalty if model.penalty else 0.0
    out["total"] = out["maintenance"] + out["storage"] + out["slack"] + out["final_signal"]
    return out


def extract_schedule(result: StnResult, tol: float = 0.5) -> Schedule:
    """Activities started within the scheduling horizon (spill-over kept at full length)."""
    M = result.model
    x = result.solution.values
    acts = {u.name: [] for u in M.instance.units}
    for key, idx in M.v["w"].items():
        if x[idx] > tol:
            task, unit, mode, t = key
            acts[unit].append(Activity(t, M.P[(task, unit, mode)], task, mode))
    for (unit, t), idx in M.v["m"].items():
        if x[idx] > tol:
            acts[unit].append(Activity(t, M.R[unit]))
    for u in acts:
        acts[u].sort(key=lambda a: a.start)
    return Schedule(M.instance.horizons.dt_S, M.nS, acts)


def batch_sizes(result: StnResult, tol: float = 0.5) -> dict:
    M = result.model
    x = result.solution.values
    out = {}
    for key, idx in M.v["w"].items():
        if x[idx] > tol:
            out[key] = float(x[M.v["b"][key]])
    return out


def maintenance_count(result: StnResult, include_planning: bool = True) -> int:
    x = result.solution.values
    total = sum(round(x[i]) for i in result.model.v["m"].values())
    if include_planning:
        total += sum(round(x[i]) for i in result.model.v.get("mp", {}).values())
    return int(total)


# -- decision-rule lifting and robust check ------------------------------------------

@dataclass
class DecisionRuleCoeffs:
    """Affine decision rule ``s_t(d) = c0[t] + sum_k ck[t][k] d_k`` per unit (scheduling horizon)."""

    c0: dict  # unit -> array over t
    ck: dict  # unit -> {triple: array over t}


def _unit_xm(result: StnResult, unit: str):
    M = result.model
    x = result.solution.values
    keys = M.instance.triples(unit)
    X = {key: np.array([round(x[M.v["w"][key + (t,)]]) for t in range(M.nS)], float) for key in keys}
    mvec = np.array([round(x[M.v["m"][(unit, t)]]) for t in range(M.nS)], float)
    return keys, X, mvec


def lift_deterministic_solution(instance, det_solution: StnResult) -> DecisionRuleCoeffs:
    """Decision-rule coefficients from the maintenance times of a deterministic solution.

    Before the first maintenance the constant term is the starting signal,
    afterwards the reset value; the coefficient of each uncertain
    increment counts its task starts since the most recent maintenance.
    """
    M = det_solution.model
    c0, ck = {}, {}
    for u in instance.units:
        j = u.name
        keys, X, mvec = _unit_xm(det_solution, j)
        base = np.empty(M.nS)
        counts = {k: np.zeros(M.nS) for k in keys}
        cur0 = M.s_start[j]
        run = {k: 0.0 for k in keys}
        for t in range(M.nS):
            if mvec[t] > 0.5:
                cur0 = u.s_0
                run = {k: 0.0 for k in keys}
            for k in keys:
                run[k] += X[k][t]
                counts[k][t] = run[k]
            base[t] = cur0
        c0[j] = base
        ck[j] = counts
    return DecisionRuleCoeffs(c0, ck)


@dataclass
class RobustReport:
    feasible: bool
    violations: list
    max_violation: float


def check_robust_feasibility(instance, coeffs: DecisionRuleCoeffs, det_solution: StnResult,
                             uncertainty: UncertaintySet, tol: float = 1e-6) -> RobustReport:
    """Evaluate the four health rows at their worst box vertex.

    Each row is affine in the uncertain increments, so its maximum over the
    box is attained coordinate-wise at the upper bound when the coefficient
    is positive and at the lower bound otherwise.
    """
    M = det_solution.model
    viol = []
    worst = 0.0

    def vertex_max(const, lin):
        val = const
        for key, g in lin.items():
            bnd = uncertainty.bounds[key]
            val += g * (bnd.upper if g > 0 else bnd.lower)
        return val

    for u in instance.units:
        j = u.name
        keys, X, mvec = _unit_xm(det_solution, j)
        c0 = coeffs.c0[j]
        ck = coeffs.ck[j]
        for t in range(M.nS):
            mt = mvec[t]
            p0 = c0[t - 1] if t > 0 else M.s_start[j]
            pk = {k: (ck[k][t - 1] if t > 0 else 0.0) for k in keys}
            now = {k: ck[k][t] for k in keys}
            rows = {
                # m s0 - s(d) <= 0
                "c1": (mt * u.s_0 - c0[t], {k: -now[k] for k in keys}),
                # s(d) - s_max - m (s0 - s_max) <= 0
                "c2": (c0[t] - u.s_max - mt * (u.s_0 - u.s_max), dict(now)),
                # s_prev(d) + x d + m (s0 - s_max) - s(d) <= 0
                "c3": (p0 + mt * (u.s_0 - u.s_max) - c0[t],
                       {k: pk[k] + X[k][t] - now[k] for k in keys}),
                # s(d) - s_prev(d) - x d <= 0
                "c4": (c0[t] - p0, {k: now[k] - pk[k] - X[k][t] for k in keys}),
            }
            for name, (const, lin) in rows.items():
                val = vertex_max(const, lin)
                if val > tol:
                    viol.append((name, j, t, float(val)))
                    worst = max(worst, float(val))
    return RobustReport(not viol, viol, worst)


# -- reporting ----------------------------------------------------------------------

def model_summary(model: MilpModel) -> list:
    rows = []
    for fam, d in sorted(model.family_counts().items()):
        rows.append({"family": fam or "-", "variables": d["variables"], "discrete": d["discrete"],
                     "constraints": d["constraints"]})
    c = model.counts()
    rows.append({"family": "TOTAL", "variables": c["variables"], "discrete": c["discrete"],
                 "constraints": c["constraints"]})
    return rows


def write_model_summary(model: MilpModel, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["family", "variables", "discrete", "constraints"])
        w.writeheader()
        w.writerows(model_summary(model))
