"""Solver-agnostic MILP container, CPLEX-LP text export and solver backends.

Models are built incrementally (``add_var`` / ``add_constr``), written as
CPLEX-LP text and handed to an external solver through a file.  Two
backends ship with the package:

* ``highs`` - the HiGHS library (``highspy``) reading the LP file;
* ``cbc``   - a CBC executable run as a subprocess, located through
  ``SolverConfig.executable``, the ``DEGRADE_OPT_SOLVER`` environment
  variable, ``PATH`` or the binary bundled with PuLP.

Every solution can be re-checked against the model with
:func:`check_solution`, independently of the solver.
"""
from __future__ import annotations

import math
import os
import re
import shutil
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse

CONTINUOUS, BINARY, INTEGER = "C", "B", "I"
SOLVER_ENV = "DEGRADE_OPT_SOLVER"

_NAME_BAD = re.compile(r"[^A-Za-z0-9_]")


class SolverError(RuntimeError):
    """Backend missing, crashed or produced unreadable output."""


def clean_name(text: str) -> str:
    s = _NAME_BAD.sub("_", str(text))
    if not s or not (s[0].isalpha() or s[0] == "_"):
        s = "v" + s
    return s


class MilpModel:
    """A mixed-integer linear program ``min c'x + c0`` with named columns and rows."""

    def __init__(self, name: str = "model"):
        self.name = name
        self.var_names: list[str] = []
        self.var_kinds: list[str] = []
        self.var_lb: list[float] = []
        self.var_ub: list[float] = []
        self.var_tags: list[str] = []
        self.row_names: list[str] = []
        self.row_coefs: list[dict] = []
        self.row_sense: list[str] = []
        self.row_rhs: list[float] = []
        self.row_tags: list[str] = []
        self.objective: dict = {}
        self.obj_constant = 0.0
        self._var_index: dict = {}
        self._row_seen: set = set()
        self.sealed = False

    # -- construction ------------------------------------------------------
    def _unique(self, base: str, seen) -> str:
        name = clean_name(base)
        if name in seen:
            n = 1
            while f"{name}_{n}" in seen:
                n += 1
            name = f"{name}_{n}"
        return name

    def add_var(self, name: str, kind: str = CONTINUOUS, lb: float = 0.0,
                ub: float = math.inf, tag: str = "") -> int:
        if self.sealed:
            raise RuntimeError("model is sealed")
        if kind not in (CONTINUOUS, BINARY, INTEGER):
            raise ValueError(f"unknown variable kind {kind!r}")
        if kind == BINARY:
            lb, ub = max(lb, 0.0), min(ub, 1.0)
        if math.isnan(lb) or math.isnan(ub):
            raise ValueError(f"NaN bound on {name}")
        name = self._unique(name, self._var_index)
        idx = len(self.var_names)
        self._var_index[name] = idx
        self.var_names.append(name)
        self.var_kinds.append(kind)
        self.var_lb.append(float(lb))
        self.var_ub.append(float(ub))
        self.var_tags.append(tag)
        return idx

    def add_constr(self, coefs, sense: str, rhs: float, name: str = "", tag: str = "") -> int:
        """Add ``sum coefs[i] x_i  (sense)  rhs`` with sense in ``<=``, ``>=``, ``=``."""
        if self.sealed:
            raise RuntimeError("model is sealed")
        if sense not in ("<=", ">=", "="):
            raise ValueError(f"unknown sense {sense!r}")
        row = {}
        items = coefs.items() if isinstance(coefs, dict) else coefs
        for i, c in items:
            if c == 0:
                continue
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient in row {name}")
            row[i] = row.get(i, 0.0) + float(c)
        if not math.isfinite(rhs):
            raise ValueError(f"non-finite rhs in row {name}")
        rname = self._unique(name or f"r{len(self.row_names)}", self._row_seen)
        self._row_seen.add(rname)
        self.row_names.append(rname)
        self.row_coefs.append(row)
        self.row_sense.append(sense)
        self.row_rhs.append(float(rhs))
        self.row_tags.append(tag)
        return len(self.row_names) - 1

    def set_objective(self, coefs, constant: float = 0.0) -> None:
        obj = {}
        items = coefs.items() if isinstance(coefs, dict) else coefs
        for i, c in items:
            obj[i] = obj.get(i, 0.0) + float(c)
        self.objective = obj
        self.obj_constant = float(constant)

    def seal(self) -> "MilpModel":
        self.sealed = True
        return self

    # -- queries -----------------------------------------------------------
    @property
    def n_vars(self) -> int:
        return len(self.var_names)

    @property
    def n_rows(self) -> int:
        return len(self.row_names)

    def index(self, name: str) -> int:
        return self._var_index[name]

    def counts(self) -> dict:
        kinds = self.var_kinds
        n_disc = sum(k != CONTINUOUS for k in kinds)
        return {"variables": len(kinds), "discrete": n_disc,
                "continuous": len(kinds) - n_disc, "constraints": self.n_rows}

    def family_counts(self) -> dict:
        """Variable and row counts per tag."""
        fam = {}
        for t, k in zip(self.var_tags, self.var_kinds):
            d = fam.setdefault(t, {"variables": 0, "discrete": 0, "constraints": 0})
            d["variables"] += 1
            d["discrete"] += k != CONTINUOUS
        for t in self.row_tags:
            d = fam.setdefault(t, {"variables": 0, "discrete": 0, "constraints": 0})
            d["constraints"] += 1
        return fam

    def matrix(self):
        """Constraint matrix as CSR plus sense and rhs arrays."""
        rows, cols, vals = [], [], []
        for r, coefs in enumerate(self.row_coefs):
            for c, v in coefs.items():
                rows.append(r)
                cols.append(c)
                vals.append(v)
        A = sparse.csr_matrix((vals, (rows, cols)), shape=(self.n_rows, self.n_vars))
        return A, np.array(self.row_sense), np.array(self.row_rhs)

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for i, v in self.objective.items():
            c[i] += v
        return c

    def evaluate_objective(self, x) -> float:
        return float(self.objective_vector() @ np.asarray(x, float) + self.obj_constant)


# -- LP text -----------------------------------------------------------------

def _num(x: float) -> str:
    if float(x).is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(float(x))


def _terms(coefs: dict, names, per_line: int = 8) -> str:
    parts = []
    for i, c in coefs.items():
        sign = "-" if c < 0 else "+"
        mag = abs(c)
        body = names[i] if mag == 1 else f"{_num(mag)} {names[i]}"
        parts.append(f"{sign} {body}")
    if not parts:
        return "0 " + names[0] if names else ""
    if parts[0].startswith("+ "):
        parts[0] = parts[0][2:]
    lines = [" ".join(parts[n:n + per_line]) for n in range(0, len(parts), per_line)]
    return "\n   ".join(lines)


def export_lp(model: MilpModel) -> str:
    """CPLEX-LP text; column order in Bounds/Generals/Binaries follows declaration."""
    names = model.var_names
    for lb, ub, n in zip(model.var_lb, model.var_ub, names):
        if math.isnan(lb) or math.isnan(ub):
            raise ValueError(f"NaN bound on {n}")
    out = [f"\\ Problem name: {clean_name(model.name)}", "", "Minimize"]
    obj = dict(sorted(model.objective.items()))
    out.append(" obj: " + _terms(obj, names) if obj or names else " obj:")
    out.append("Subject To")
    ops = {"<=": "<=", ">=": ">=", "=": "="}
    for rname, coefs, sense, rhs in zip(model.row_names, model.row_coefs,
                                         model.row_sense, model.row_rhs):
        if not names:
            continue
        out.append(f" {rname}: {_terms(coefs, names)} {ops[sense]} {_num(rhs)}")
    out.append("Bounds")
    for n, kind, lb, ub in zip(names, model.var_kinds, model.var_lb, model.var_ub):
        if kind == BINARY and lb == 0 and ub == 1:
            continue
        if lb == ub:
            out.append(f" {n} = {_num(lb)}")
        elif math.isinf(lb) and math.isinf(ub):
            out.append(f" {n} free")
        elif lb == 0 and math.isinf(ub):
            continue
        else:
            lo = "-inf" if math.isinf(lb) else _num(lb)
            hi = "+inf" if math.isinf(ub) else _num(ub)
            out.append(f" {lo} <= {n} <= {hi}")
    gens = [n for n, k in zip(names, model.var_kinds) if k == INTEGER]
    bins = [n for n, k in zip(names, model.var_kinds) if k == BINARY]
    out.append("Generals")
    out.extend(" " + n for n in gens)
    out.append("Binaries")
    out.extend(" " + n for n in bins)
    out.append("End")
    return "\n".join(out) + "\n"


_SECTION = {
    "minimize": "obj", "minimum": "obj", "min": "obj",
    "subject to": "rows", "such that": "rows", "st": "rows", "s.t.": "rows",
    "bounds": "bounds", "bound": "bounds",
    "generals": "gen", "general": "gen", "integers": "gen",
    "binaries": "bin", "binary": "bin",
    "end": "end",
}


def _parse_expr(text: str):
    coefs = []
    text = text.strip()
    pos = 0
    for m in re.finditer(r"([+-])?\s*(\d[0-9.]*(?:[eE][+-]?\d+)?)?\s*([A-Za-z_][A-Za-z0-9_]*)", text):
        if text[pos:m.start()].strip():
            raise ValueError(f"cannot parse LP expression near {text[pos:m.start()]!r}")
        sign = -1.0 if m.group(1) == "-" else 1.0
        c = float(m.group(2)) if m.group(2) else 1.0
        coefs.append((m.group(3), sign * c))
        pos = m.end()
    if text[pos:].strip():
        raise ValueError(f"cannot parse LP expression near {text[pos:]!r}")
    return coefs


def read_lp(text: str) -> MilpModel:
    """Parse the LP subset produced by :func:`export_lp` back into a model."""
    model = MilpModel()
    m = re.match(r"\\ Problem name: (\S+)", text)
    if m:
        model.name = m.group(1)
    # join continuation lines: a statement starts with a single leading space
    section, stmts = None, []
    for raw in text.splitlines():
        line = raw.rstrip()
        if not line or line.startswith("\\"):
            continue
        key = line.strip().lower()
        if not raw.startswith(" ") and key in _SECTION:
            section = _SECTION[key]
            stmts.append((section, None))
            continue
        if raw.startswith("   ") and stmts and stmts[-1][1] is not None:
            sec, body = stmts[-1]
            stmts[-1] = (sec, body + " " + line.strip())
        else:
            stmts.append((section, line.strip()))
    obj_terms, rows, bounds, gens, bins = [], [], [], [], []
    for section, body in stmts:
        if body is None:
            continue
        if section == "obj":
            body = body.split(":", 1)[1] if ":" in body else body
            obj_terms = _parse_expr(body) if body.strip() else []
        elif section == "rows":
            rname, expr = body.split(":", 1)
            mm = re.match(r"(.*?)(<=|>=|=)\s*(\S+)$", expr)
            if not mm:
                raise ValueError(f"cannot parse row {body!r}")
            rows.append((rname.strip(), _parse_expr(mm.group(1)), mm.group(2), float(mm.group(3))))
        elif section == "bounds":
            bounds.append(body)
        elif section == "gen":
            gens.extend(body.split())
        elif section == "bin":
            bins.extend(body.split())
    order = []
    seen = set()

    def note(n):
        if n not in seen:
            seen.add(n)
            order.append(n)

    bmap = {}
    for b in bounds:
        parts = b.split()
        if len(parts) == 2 and parts[1] == "free":
            bmap[parts[0]] = (-math.inf, math.inf)
            note(parts[0])
        elif len(parts) == 3 and parts[1] == "=":
            v = float(parts[2])
            bmap[parts[0]] = (v, v)
            note(parts[0])
        elif len(parts) == 5:
            bmap[parts[2]] = (float(parts[0]), float(parts[4]))
            note(parts[2])
        else:
            raise ValueError(f"cannot parse bound {b!r}")
    for n in gens + bins:
        note(n)
    for n, _ in obj_terms:
        note(n)
    for _, terms, _, _ in rows:
        for n, _ in terms:
            note(n)
    kinds = {n: INTEGER for n in gens}
    kinds.update({n: BINARY for n in bins})
    for n in order:
        lb, ub = bmap.get(n, (0.0, math.inf))
        model.add_var(n, kinds.get(n, CONTINUOUS), lb, ub)
    idx = model._var_index
    model.set_objective([(idx[n], c) for n, c in obj_terms])
    for rname, terms, sense, rhs in rows:
        model.add_constr([(idx[n], c) for n, c in terms], sense, rhs, name=rname)
    return model


# -- solutions ----------------------------------------------------------------

@dataclass
class SolverConfig:
    backend: str = "highs"
    executable: str | None = None
    time_limit: float = 60.0
    mip_gap: float = 1e-4
    threads: int = 1
    seed: int = 0
    keep_dir: str | None = None

    def __post_init__(self):
        if not self.time_limit > 0:
            raise ValueError("time_limit must be positive")
        if self.mip_gap < 0:
            raise ValueError("mip_gap must be nonnegative")


@dataclass
class MilpSolution:
    status: str  # optimal | feasible-gap | infeasible | time-limit | error
    objective: float | None = None
    gap: float | None = None
    values: np.ndarray | None = None
    wall_time: float = 0.0
    backend: str = ""
    message: str = ""
    names: list = field(default_factory=list, repr=False)

    @property
    def has_values(self) -> bool:
        return self.values is not None

    def value(self, name: str) -> float:
        return float(self.values[self.names.index(name)])


def _relative_gap(obj, bound):
    if obj is None or bound is None or not math.isfinite(bound):
        return None
    denom = max(abs(obj), 1e-10)
    return max(0.0, abs(obj - bound) / denom)


def find_cbc(executable: str | None = None) -> str:
    cands = [executable, os.environ.get(SOLVER_ENV)]
    for c in cands:
        if c and c.lower() not in ("highs", "cbc"):
            if Path(c).is_file() or shutil.which(c):
                return shutil.which(c) or c
            raise SolverError(f"solver executable not found: {c}")
    found = shutil.which("cbc")
    if found:
        return found
    try:
        import importlib.util
        spec = importlib.util.find_spec("pulp")
    except (ImportError, ValueError):
        spec = None
    if spec and spec.origin:
        for arch in ("i64", "arm64"):
            p = Path(spec.origin).parent / "solverdir" / "cbc" / "linux" / arch / "cbc"
            if p.is_file() and os.access(p, os.X_OK):
                return str(p)
    raise SolverError("no CBC executable found; set DEGRADE_OPT_SOLVER or install pulp")


def resolve_backend(config: SolverConfig) -> str:
    env = os.environ.get(SOLVER_ENV, "")
    if config.executable:
        return "cbc"
    if env.lower() in ("highs", "cbc"):
        return env.lower()
    if env:
        return "cbc"
    return config.backend


def _solve_highs(lp_path: Path, model: MilpModel, config: SolverConfig) -> MilpSolution:
    try:
        import highspy
    except ImportError as exc:  # pragma: no cover - declared dependency
        raise SolverError(f"highspy not importable: {exc}") from None
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.setOptionValue("time_limit", float(config.time_limit))
    h.setOptionValue("mip_rel_gap", float(config.mip_gap))
    h.setOptionValue("mip_abs_gap", 1e-9 if config.mip_gap == 0 else 1e-6)
    h.setOptionValue("threads", int(config.threads))
    h.setOptionValue("random_seed", int(config.seed))
    status = h.readModel(str(lp_path))
    if status == highspy.HighsStatus.kError:
        raise SolverError("HiGHS rejected the LP file")
    h.run()
    ms = h.getModelStatus()
    info = h.getInfo()
    MS = highspy.HighsModelStatus
    has_sol = info.primal_solution_status == 2  # kSolutionStatusFeasible
    obj = info.objective_function_value if has_sol else None
    bound = info.mip_dual_bound if model.n_vars else obj
    gap = info.mip_gap if has_sol else None
    if gap is not None and (not math.isfinite(gap) or gap > 1e20):
        gap = _relative_gap(obj, bound)
    if not any(k != CONTINUOUS for k in model.var_kinds) and has_sol:
        gap = 0.0
    values = None
    if has_sol:
        sol = np.asarray(h.getSolution().col_value, float)
        lp = h.getLp()
        names = list(lp.col_names_)
        values = np.zeros(model.n_vars)
        for n, v in zip(names, sol):
            if n in model._var_index:
                values[model._var_index[n]] = v
    if ms == MS.kOptimal:
        st = "optimal"
    elif ms in (MS.kInfeasible, MS.kUnboundedOrInfeasible):
        st = "infeasible"
    elif ms == MS.kTimeLimit:
        st = "time-limit" if not has_sol else "feasible-gap"
    elif has_sol:
        st = "feasible-gap"
    else:
        st = "error"
    return MilpSolution(st, obj, gap, values, backend="highs",
                        message=h.modelStatusToString(ms))


_CBC_STATUS = re.compile(r"^(\w[\w ]*?)\s*-\s*objective value\s+(\S+)", re.I)


def _solve_cbc(lp_path: Path, model: MilpModel, config: SolverConfig) -> MilpSolution:
    exe = find_cbc(config.executable)
    sol_path = lp_path.with_suffix(".sol")
    cmd = [exe, str(lp_path), "sec", str(config.time_limit), "ratio", str(config.mip_gap),
           "threads", str(config.threads), "randomSeed", str(config.seed + 1),
           "randomCbcSeed", str(config.seed + 1), "printingOptions", "all",
           "solve", "solution", str(sol_path)]
    try:
        proc = subprocess.run(cmd, capture_output=True, text=True,
                              timeout=config.time_limit * 1.1 + 30)
    except subprocess.TimeoutExpired:
        return MilpSolution("time-limit", backend="cbc", message="process timeout")
    except OSError as exc:
        raise SolverError(f"cannot run CBC: {exc}") from None
    log = proc.stdout + proc.stderr
    if proc.returncode != 0 or not sol_path.exists():
        raise SolverError(f"CBC failed (exit {proc.returncode}): {log[-2000:]}")
    lines = sol_path.read_text().splitlines()
    head = lines[0] if lines else ""
    m = _CBC_STATUS.match(head.strip())
    word = head.strip().lower()
    if "infeasible" in word:
        return MilpSolution("infeasible", backend="cbc", message=head)
    values = np.zeros(model.n_vars)
    for line in lines[1:]:
        parts = line.split()
        if parts and parts[0] == "**":
            parts = parts[1:]
        if len(parts) >= 3 and parts[1] in model._var_index:
            values[model._var_index[parts[1]]] = float(parts[2])
    obj = float(m.group(2)) if m else None
    gap = None
    mg = re.search(r"Gap:\s+(\S+)", log)
    if mg:
        try:
            gap = float(mg.group(1))
        except ValueError:
            gap = None
    mb = re.search(r"Lower bound:\s+(\S+)", log)
    if gap is None and mb:
        gap = _relative_gap(obj, float(mb.group(1)))
    if word.startswith("optimal"):
        st, gap = "optimal", (gap if gap is not None else 0.0)
        if gap > config.mip_gap:
            gap = config.mip_gap
    elif "stopped on time" in word or "stopped on iterations" in word:
        if "no integer solution" in word or obj is None:
            return MilpSolution("time-limit", backend="cbc", message=head)
        st = "feasible-gap"
    else:
        return MilpSolution("error", backend="cbc", message=head or log[-500:])
    return MilpSolution(st, obj, gap, values, backend="cbc", message=head)


def solve(model: MilpModel, config: SolverConfig | None = None) -> MilpSolution:
    """Write the model as LP text, run the configured backend, read the answer back."""
    config = config or SolverConfig()
    backend = resolve_backend(config)
    text = export_lp(model)
    t0 = time.perf_counter()
    with tempfile.TemporaryDirectory(dir=config.keep_dir) as tmp:
        lp_path = Path(tmp) / "model.lp"
        lp_path.write_text(text)
        if backend == "highs":
            sol = _solve_highs(lp_path, model, config)
        elif backend == "cbc":
            sol = _solve_cbc(lp_path, model, config)
        else:
            raise SolverError(f"unknown backend {backend!r}")
        if config.keep_dir:
            shutil.copy(lp_path, Path(config.keep_dir) / f"{clean_name(model.name)}.lp")
    sol.wall_time = time.perf_counter() - t0
    sol.names = model.var_names
    if sol.objective is not None:
        sol.objective += model.obj_constant
        if sol.values is not None:
            sol.objective = model.evaluate_objective(sol.values)
    if sol.status == "optimal" and sol.gap is not None and sol.gap > config.mip_gap + 1e-12:
        sol.status = "feasible-gap"
    return sol


def self_test(config: SolverConfig | None = None) -> bool:
    """Solve a two-variable knapsack; True when the backend answers correctly."""
    m = MilpModel("selftest")
    a = m.add_var("a", BINARY)
    b = m.add_var("b", BINARY)
    m.add_constr({a: 1, b: 1}, "<=", 1)
    m.set_objective({a: -3, b: -2})
    sol = solve(m, config)
    return sol.status == "optimal" and abs(sol.objective + 3) < 1e-6


# -- independent feasibility check ---------------------------------------------

@dataclass
class Violation:
    kind: str  # bound | integrality | row
    name: str
    amount: float


def check_solution(model: MilpModel, values, tol: float = 1e-6) -> list:
    """List every bound, integrality and row violation larger than ``tol``."""
    x = np.asarray(values, float)
    out = []
    lb = np.array(model.var_lb)
    ub = np.array(model.var_ub)
    for i in np.flatnonzero(x < lb - tol):
        out.append(Violation("bound", model.var_names[i], float(lb[i] - x[i])))
    for i in np.flatnonzero(x > ub + tol):
        out.append(Violation("bound", model.var_names[i], float(x[i] - ub[i])))
    disc = np.array([k != CONTINUOUS for k in model.var_kinds], bool)
    if disc.size:
        frac = np.abs(x - np.round(x))
        for i in np.flatnonzero(disc & (frac > tol)):
            out.append(Violation("integrality", model.var_names[i], float(frac[i])))
    if model.n_rows:
        A, sense, rhs = model.matrix()
        act = A @ x
        viol = np.where(sense == "<=", act - rhs,
                        np.where(sense == ">=", rhs - act, np.abs(act - rhs)))
        for r in np.flatnonzero(viol > tol):
            out.append(Violation("row", model.row_names[r], float(viol[r])))
    return out
