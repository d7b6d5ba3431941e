"""Command-line interface: ``degrade-opt <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 solver or backend failure,
3 validation failure.  ``--config FILE`` reads a JSON object whose keys
are option names (dashes or underscores); its values take precedence over
the command line.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .bayesopt import EvalConfig, random_search, tune_alpha
from .degradation import Activity, DegradationModel, Schedule, failure_probability, sample_path
from .estimators import (EstimatorModels, bound_metrics, demand_covariates, estimate_pf_frequency,
                         estimate_pf_markov, fit_models)
from .horizon import (TrainingDataset, default_demand_box, extract_mode_sequences, gantt_svg,
                      generate_training_data, roll, write_labels_csv)
from .instance import BUILTIN_NAMES, InstanceError, builtin_instance, load_instance, validation_errors
from .milp import SolverConfig, SolverError
from .stn import (StnBuildConfig, extract_schedule, maintenance_count, objective_breakdown, solve_stn,
                  write_model_summary)
from .uncertainty import build_set, check_alpha

EXIT_OK, EXIT_USAGE, EXIT_SOLVER, EXIT_VALIDATION = 0, 1, 2, 3

log = logging.getLogger("degrade_opt")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass
class RunReport:
    command: str
    config: dict
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    def add(self, path) -> Path:
        p = Path(path)
        self.outputs.append(str(p))
        return p

    def write(self, out_dir: Path) -> Path:
        path = out_dir / "report.json"
        doc = {"command": self.command, "config": self.config, "timings": self.timings,
               "outputs": self.outputs, "summary": self.summary}
        path.write_text(json.dumps(doc, indent=1, default=_jsonable) + "\n")
        return path


def _jsonable(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, float) and not math.isfinite(x):
        return str(x)
    return str(x)


# -- argument parsing ---------------------------------------------------------------

def _common(p, solver=True, instance=True):
    if instance:
        p.add_argument("--instance", default="toy",
                       help="bundled name (%s) or path to an instance file (default: %%(default)s)"
                       % ", ".join(BUILTIN_NAMES))
    p.add_argument("--seed", type=int, default=0, help="root random seed (default: %(default)s)")
    p.add_argument("--jobs", type=int, default=1, help="maximum worker count (default: %(default)s)")
    p.add_argument("--out", default=".", help="output directory (default: %(default)s)")
    p.add_argument("--config", help="JSON file with option values; overrides the command line")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    if solver:
        g = p.add_argument_group("solver")
        g.add_argument("--solver", default="highs",
                       help="backend name (highs, cbc) or path to a CBC executable (default: %(default)s)")
        g.add_argument("--time-limit", type=float, default=60.0,
                       help="seconds per MILP solve (default: %(default)s)")
        g.add_argument("--mip-gap", type=float, default=1e-4,
                       help="relative optimality gap target (default: %(default)s)")
        g.add_argument("--threads", type=int, default=1, help="solver threads (default: %(default)s)")


def _model_opts(p, alpha=True):
    if alpha:
        p.add_argument("--alpha", type=float, default=0.5,
                       help="uncertainty-set parameter in [0.001, 0.5] (default: %(default)s)")
    p.add_argument("--scenario", default="avg", help="demand scenario (default: %(default)s)")
    p.add_argument("--variant", choices=("deterministic", "robust"), default="deterministic",
                   help="model variant (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="degrade-opt",
                     description="Degradation-aware scheduling, failure probabilities and alpha tuning.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    p = sub.add_parser("solve", help="build and solve one model; write schedule CSV and Gantt SVG")
    _common(p)
    _model_opts(p)
    p.add_argument("--no-planning", action="store_true", help="drop the planning horizon")
    p.add_argument("--n-plan", type=int, help="number of planning periods (default: from the instance)")
    p.add_argument("--write-lp", action="store_true", help="also write the model as LP text")

    p = sub.add_parser("roll", help="rolling-horizon solve over several periods")
    _common(p)
    _model_opts(p)
    p.add_argument("--periods", type=int, default=12, help="number of iterations (default: %(default)s)")
    p.add_argument("--n-plan", type=int, help="planning periods per iteration (default: from the instance)")
    p.add_argument("--no-planning", action="store_true", help="roll scheduling-only models")
    p.add_argument("--simulate-degradation", action="store_true",
                   help="carry a simulated signal between iterations instead of the planned worst case")

    p = sub.add_parser("simulate", help="signal paths and failure probabilities of a schedule")
    _common(p, solver=False)
    p.add_argument("--activities", required=True,
                   help="activities CSV written by solve or roll (unit,start,steps,task,mode)")
    p.add_argument("--unit", action="append", help="unit to simulate (repeatable; default: all)")
    p.add_argument("--paths", type=int, default=10000, help="Monte-Carlo sample count (default: %(default)s)")
    p.add_argument("--method", choices=("mc", "bridge", "analytic"), default="mc",
                   help="failure-probability method (default: %(default)s)")
    p.add_argument("--kind", choices=("wiener", "gamma"), default="wiener",
                   help="increment distribution (default: %(default)s)")
    p.add_argument("--sample-paths", type=int, default=1,
                   help="number of individual paths written per unit (default: %(default)s)")

    p = sub.add_parser("gen-data", help="scheduling-only training data at Latin-hypercube demands")
    _common(p)
    p.add_argument("--alpha", type=float, default=0.5, help="uncertainty-set parameter (default: %(default)s)")
    p.add_argument("--samples", type=int, default=200, help="number of demand samples (default: %(default)s)")
    p.add_argument("--box", action="append", metavar="PRODUCT=LO:HI",
                   help="demand range of a product (repeatable; default: range over all scenarios)")

    p = sub.add_parser("fit", help="fit frequency and transition models to training data")
    _common(p, solver=False)
    p.add_argument("--data", required=True, help="training CSV written by gen-data")
    p.add_argument("--strength", type=float, default=1.0, help="L2 regularisation strength (default: %(default)s)")

    p = sub.add_parser("estimate", help="failure-probability bounds from fitted models")
    _common(p, solver=False)
    p.add_argument("--models", required=True, help="model file written by fit")
    p.add_argument("--alpha", type=float, action="append",
                   help="uncertainty-set parameter (repeatable; default: 0.5)")
    p.add_argument("--scenario", default="avg", help="demand scenario (default: %(default)s)")
    p.add_argument("--periods", type=int, default=12, help="evaluation horizon in periods (default: %(default)s)")
    p.add_argument("--samples", type=int, default=100, help="sequence draws N (default: %(default)s)")
    p.add_argument("--paths", type=int, default=1000, help="Monte-Carlo paths per draw (default: %(default)s)")
    p.add_argument("--approach", choices=("freq", "mc", "both"), default="both",
                   help="frequency, Markov chain or both (default: %(default)s)")
    p.add_argument("--observed", help="CSV with columns alpha,unit,p_f to score the bounds against")

    p = sub.add_parser("tune", help="choose alpha by Bayesian optimisation or random search")
    _common(p)
    p.add_argument("--scenario", default="avg", help="demand scenario (default: %(default)s)")
    p.add_argument("--method", choices=("bo", "random"), default="bo", help="optimiser (default: %(default)s)")
    p.add_argument("--budget", type=int, default=20, help="number of evaluations (default: %(default)s)")
    p.add_argument("--n-init", type=int, default=4,
                   help="initial points, one per equal slice of the alpha range (default: %(default)s)")
    p.add_argument("--periods", type=int, default=12, help="evaluation horizon in periods (default: %(default)s)")
    p.add_argument("--n-plan", type=int, help="planning periods per iteration (default: from the instance)")
    p.add_argument("--no-planning", action="store_true", help="score alpha with scheduling-only rolls")
    p.add_argument("--paths", type=int, default=2000, help="Monte-Carlo paths per unit (default: %(default)s)")

    p = sub.add_parser("instances", help="list, show or validate instances")
    _common(p, solver=False, instance=False)
    p.add_argument("--list", action="store_true", help="print the bundled instance names")
    p.add_argument("--validate", nargs="+", metavar="FILE", help="validate instance files")
    p.add_argument("--show", metavar="NAME", help="print a summary of an instance")
    return parser


def _apply_config(args, parser):
    if not getattr(args, "config", None):
        return args
    try:
        doc = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise UsageError(f"config: cannot read {args.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise InstanceError([f"config: not valid JSON ({exc})"]) from None
    if not isinstance(doc, dict):
        raise InstanceError(["config: top level must be an object"])
    for key, val in doc.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or dest in ("command", "config"):
            raise UsageError(f"config: unknown option {key!r} for '{args.command}'")
        setattr(args, dest, val)
    return args


def _solver(args) -> SolverConfig:
    backend, exe = args.solver, None
    if backend not in ("highs", "cbc"):
        backend, exe = "cbc", backend
    if args.time_limit <= 0:
        raise InstanceError(["time-limit: must be positive"])
    return SolverConfig(backend=backend, executable=exe, time_limit=args.time_limit,
                        mip_gap=args.mip_gap, threads=args.threads, seed=args.seed)


def _instance(args):
    return load_instance(args.instance)


def _alpha(value, key="alpha"):
    try:
        return check_alpha(value)
    except ValueError as exc:
        raise InstanceError([f"{key}: {exc}"]) from None


def _scenario(inst, name):
    if name not in inst.scenarios:
        raise InstanceError([f"scenario: unknown scenario {name!r} (have {', '.join(inst.scenarios)})"])
    return name


def write_activities_csv(schedule: Schedule, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "start", "steps", "task", "mode"])
        for u in schedule.activities:
            for a in schedule.unit_activities(u):
                w.writerow([u, a.start, a.steps, a.task or "maint", a.mode or ""])


def read_activities_csv(path, instance) -> Schedule:
    acts = {u.name: [] for u in instance.units}
    end = 0
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            u = row["unit"]
            if u not in acts:
                raise InstanceError([f"activities: unknown unit {u!r}"])
            start, steps = int(row["start"]), int(row["steps"])
            task = None if row["task"] == "maint" else row["task"]
            acts[u].append(Activity(start, steps, task, row["mode"] or None))
            end = max(end, start + steps)
    return Schedule(instance.horizons.dt_S, end, acts)


# -- commands ------------------------------------------------------------------------------

def cmd_solve(args, out, report):
    inst = _instance(args)
    alpha = _alpha(args.alpha)
    cfg = StnBuildConfig(variant=args.variant, uncertainty=build_set(inst, alpha),
                         scenario=_scenario(inst, args.scenario), planning=not args.no_planning,
                         n_plan=args.n_plan)
    sc = _solver(args)
    if args.write_lp:
        sc.keep_dir = str(out)
    res = solve_stn(inst, cfg, sc)
    write_model_summary(res.model, report.add(out / "model_summary.csv"))
    sol = res.solution
    report.summary.update(status=sol.status, objective=sol.objective, gap=sol.gap,
                          wall_time=sol.wall_time, **res.model.counts())
    if not res.ok:
        print(f"solver status: {sol.status} {sol.message}".rstrip(), file=sys.stderr)
        return EXIT_SOLVER
    sched = extract_schedule(res)
    write_labels_csv(sched, report.add(out / "schedule.csv"))
    write_activities_csv(sched, report.add(out / "activities.csv"))
    report.add(out / "gantt.svg").write_text(gantt_svg(sched, f"{inst.name} alpha={alpha:g}"))
    parts = objective_breakdown(res.model, sol.values)
    report.summary.update(maintenance=maintenance_count(res), breakdown=parts)
    print(f"status {sol.status}  objective {sol.objective:.6g}  gap {sol.gap or 0:.3g}  "
          f"maintenance {maintenance_count(res)}")
    return EXIT_OK


def cmd_roll(args, out, report):
    inst = _instance(args)
    alpha = _alpha(args.alpha)
    res = roll(inst, _scenario(inst, args.scenario), alpha, args.periods, _solver(args), args.seed,
               variant=args.variant, simulate_degradation=args.simulate_degradation,
               n_plan=args.n_plan, planning=not args.no_planning)
    write_labels_csv(res.schedule, report.add(out / "roll_schedule.csv"))
    write_activities_csv(res.schedule, report.add(out / "roll_activities.csv"))
    res.to_svg(report.add(out / "roll_gantt.svg"))
    with open(report.add(out / "roll_iterations.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "status", "objective", "gap", "wall_time", "maintenance",
                    "demand_slack", "storage_slack"])
        for it in res.iterations:
            w.writerow([it.index, it.status, "" if it.objective is None else repr(it.objective),
                        "" if it.gap is None else repr(it.gap), f"{it.wall_time:.3f}", it.maintenance,
                        repr(sum(it.demand_slack.values())), repr(it.storage_slack)])
    report.summary.update(status=res.status, cost=res.cost, slack=res.slack_log)
    print(f"roll {res.status}: {len(res.iterations)} iterations, total cost {res.total_cost:.6g}")
    return EXIT_OK if res.status == "ok" else EXIT_SOLVER


def cmd_simulate(args, out, report):
    inst = _instance(args)
    sched = read_activities_csv(args.activities, inst)
    extract_mode_sequences(sched)  # rejects overlapping activities
    model = DegradationModel.from_instance(inst, args.kind)
    units = args.unit or [u.name for u in inst.units]
    rows = []
    ss = np.random.SeedSequence(args.seed)
    for u, child in zip(units, ss.spawn(len(units))):
        if u not in model.health:
            raise InstanceError([f"unit: unknown unit {u!r}"])
        s_est, s_paths = child.generate_state(2)
        est = failure_probability(model, sched, u, args.method, args.paths, int(s_est))
        rows.append((u, est.p_f, est.stderr, est.n))
        for k in range(args.sample_paths):
            path = sample_path(model, sched, u, seed=[int(s_paths), k])
            path.to_csv(report.add(out / f"path_{u}_{k}.csv".replace(" ", "_")))
    with open(report.add(out / "failure_probability.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["unit", "p_f", "stderr", "n", "method"])
        for u, p, se, n in rows:
            w.writerow([u, repr(p), repr(se), n, args.method])
            print(f"{u}: p_f = {p:.4f} +- {se:.4f}")
    report.summary["p_f"] = {u: p for u, p, _, _ in rows}
    return EXIT_OK


def _parse_box(inst, specs):
    if not specs:
        return default_demand_box(inst)
    box = {}
    for spec in specs:
        try:
            name, rng = spec.split("=", 1)
            lo, hi = (float(v) for v in rng.split(":"))
        except ValueError:
            raise InstanceError([f"box: cannot parse {spec!r}, expected PRODUCT=LO:HI"]) from None
        if name not in inst.products or lo > hi or lo < 0:
            raise InstanceError([f"box: invalid range {spec!r}"])
        box[name] = (lo, hi)
    for p in inst.products:
        box.setdefault(p, default_demand_box(inst)[p])
    return box


def cmd_gen_data(args, out, report):
    inst = _instance(args)
    if args.samples < 2:
        raise InstanceError(["samples: need at least 2"])
    ds = generate_training_data(inst, args.samples, _parse_box(inst, args.box), _alpha(args.alpha),
                                _solver(args), args.seed, jobs=args.jobs)
    ds.to_csv(report.add(out / "training.csv"))
    report.summary["rows"] = len(ds)
    print(f"{len(ds)} training rows")
    return EXIT_OK if len(ds) else EXIT_SOLVER


def cmd_fit(args, out, report):
    inst = _instance(args)
    ds = TrainingDataset.from_csv(args.data, inst)
    if len(ds) == 0:
        raise InstanceError(["data: empty dataset"])
    models = fit_models(ds, args.strength)
    models.save(report.add(out / "models.json"))
    report.summary["models"] = len(models.freq) + len(models.trans)
    print(f"fitted {len(models.freq)} frequency and {len(models.trans)} transition models")
    return EXIT_OK


def _read_observed(path):
    obs = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            obs.setdefault(row["unit"], []).append((float(row["alpha"]), float(row["p_f"])))
    return obs


def cmd_estimate(args, out, report):
    inst = _instance(args)
    models = EstimatorModels.load(args.models)
    scen = _scenario(inst, args.scenario)
    alphas = [_alpha(a) for a in (args.alpha or [0.5])]
    psi = demand_covariates(inst, scen, args.periods, models.products)
    approaches = ("freq", "mc") if args.approach == "both" else (args.approach,)
    bounds = {}
    for a in alphas:
        unc = build_set(inst, a)
        for ap in approaches:
            fn = estimate_pf_frequency if ap == "freq" else estimate_pf_markov
            res = fn(inst, models, psi, unc, args.samples, args.seed, n_paths=args.paths)
            for u, b in res.items():
                bounds[(ap, a, u)] = b.p_bar
    with open(report.add(out / "bounds.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["bound", "alpha", "unit", "p_bar"])
        for (ap, a, u), v in bounds.items():
            w.writerow([ap, repr(a), u, repr(v)])
    if args.observed:
        obs = _read_observed(args.observed)
        with open(report.add(out / "metrics.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["instance", "bound", "unit", "rms_all", "p_out", "rms_out"])
            for ap in approaches:
                for u, pts in obs.items():
                    pts = [(a, p) for a, p in pts if (ap, a, u) in bounds]
                    if not pts:
                        continue
                    m = bound_metrics(pts, lambda a, ap=ap, u=u: bounds[(ap, a, u)])
                    w.writerow([inst.name, ap, u, repr(m.rms_all), repr(m.p_out), repr(m.rms_out)])
    for (ap, a, u), v in bounds.items():
        print(f"{ap:4s} alpha={a:<6g} {u}: {v:.4f}")
    return EXIT_OK


def cmd_tune(args, out, report):
    inst = _instance(args)
    scen = _scenario(inst, args.scenario)
    if not args.budget >= 1 or (args.method == "bo" and not args.budget >= args.n_init >= 2):
        raise InstanceError(["budget: need budget >= n-init >= 2 for bo, budget >= 1 for random"])
    ec = EvalConfig(n_periods=args.periods, planning=not args.no_planning, n_plan=args.n_plan,
                    n_paths=args.paths, solver=_solver(args))
    if args.method == "bo":
        trace = tune_alpha(inst, scen, args.budget, args.n_init, args.seed, ec)
    else:
        trace = random_search(inst, scen, args.budget, args.seed, ec)
    trace.to_csv(report.add(out / "trace.csv"))
    report.summary.update(best_alpha=trace.best_alpha, best=trace.best[-1])
    print(f"best alpha {trace.best_alpha:.4g}  cost {trace.best[-1]:.6g}")
    return EXIT_OK


def cmd_instances(args, out, report):
    if args.validate:
        bad = 0
        for path in args.validate:
            try:
                inst = load_instance(path)
                print(f"{path}: ok ({inst.name})")
            except InstanceError as exc:
                bad += 1
                for prob in exc.problems:
                    print(f"{path}: {prob}", file=sys.stderr)
        return EXIT_VALIDATION if bad else EXIT_OK
    if args.show:
        inst = load_instance(args.show)
        errs = validation_errors(inst)
        print(f"{inst.name}: {len(inst.units)} units, {len(inst.tasks)} tasks, "
              f"{len(inst.states)} states, {len(inst.triples())} (task, unit, mode) triples")
        print(f"  horizons: {inst.horizons}")
        print(f"  products: {', '.join(inst.products)}; scenarios: {', '.join(inst.scenarios)}")
        return EXIT_VALIDATION if errs else EXIT_OK
    for n in BUILTIN_NAMES:
        print(n)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "roll": cmd_roll, "simulate": cmd_simulate, "gen-data": cmd_gen_data,
            "fit": cmd_fit, "estimate": cmd_estimate, "tune": cmd_tune, "instances": cmd_instances}


def run(argv=None) -> tuple:
    """Parse ``argv``, execute the command and return ``(exit_code, RunReport | None)``."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0), None
    if not args.command:
        parser.print_help(sys.stderr)
        return EXIT_USAGE, None
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    report = None
    try:
        args = _apply_config(args, parser)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report = RunReport(args.command, {k: v for k, v in vars(args).items() if k != "command"})
        t0 = time.perf_counter()
        code = COMMANDS[args.command](args, out, report)
        report.timings["total_s"] = time.perf_counter() - t0
        if args.command != "instances" or code != EXIT_OK:
            report.write(out)
        return code, report
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE, report
    except InstanceError as exc:
        for prob in exc.problems:
            print(f"invalid: {prob}", file=sys.stderr)
        return EXIT_VALIDATION, report
    except SolverError as exc:
        print(f"solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER, report
    except FileNotFoundError as exc:
        print(f"error: {exc.filename}: file not found", file=sys.stderr)
        return EXIT_USAGE, report


def main(argv=None) -> int:
    code, _ = run(argv)
    return code


if __name__ == "__main__":
    sys.exit(main())
