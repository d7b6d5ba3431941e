"""Data-driven upper estimates of unit failure probabilities.

Operating-mode statistics from scheduling solutions are modelled with
multinomial logistic regression on demand covariates ``psi``:

* the number of occurrences of each symbol per period (frequency approach);
* the successor of each symbol (Markov-chain approach).

Random symbol sequences drawn from either model get maintenance inserted
as late as the worst-case budget allows and the largest simulated failure
probability over the draws is the estimate.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special

from .degradation import IDLE, DegradationModel, InfeasibleInsertion, failure_probability, insert_maintenance

log = logging.getLogger(__name__)


class ExtrapolationWarning(UserWarning):
    """Covariates lie outside the range seen during fitting."""


# -- multinomial logistic regression ------------------------------------------------

@dataclass
class LogRegModel:
    classes: np.ndarray
    coef: np.ndarray  # (n_classes, n_features) on standardised covariates
    intercept: np.ndarray  # (n_classes,)
    mean: np.ndarray
    scale: np.ndarray
    strength: float = 1.0
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None
    n_iter: int = 0

    @property
    def n_features(self) -> int:
        return len(self.mean)

    def predict_proba(self, psi) -> np.ndarray:
        X = np.atleast_2d(np.asarray(psi, float))
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} covariates, got {X.shape[1]}")
        if self.lo is not None and (np.any(X < self.lo - 1e-9) or np.any(X > self.hi + 1e-9)):
            warnings.warn("covariates outside the training range", ExtrapolationWarning, stacklevel=2)
        Z = (X - self.mean) / self.scale
        logits = Z @ self.coef.T + self.intercept
        P = special.softmax(logits, axis=1)
        return P[0] if np.ndim(psi) == 1 else P

    def most_probable(self, psi):
        return self.classes[np.argmax(self.predict_proba(np.atleast_2d(psi)), axis=1)]

    def to_dict(self) -> dict:
        return {
            "classes": [int(c) for c in self.classes.tolist()],
            "coef": self.coef.tolist(), "intercept": self.intercept.tolist(),
            "mean": self.mean.tolist(), "scale": self.scale.tolist(), "strength": self.strength,
            "lo": None if self.lo is None else self.lo.tolist(),
            "hi": None if self.hi is None else self.hi.tolist(),
        }

    @classmethod
    def from_dict(cls, d) -> "LogRegModel":
        arr = lambda v: None if v is None else np.asarray(v, float)  # noqa: E731
        return cls(np.asarray([int(c) for c in d["classes"]], dtype=object), np.asarray(d["coef"], float).reshape(
            len(d["classes"]), len(d["mean"])), np.asarray(d["intercept"], float), arr(d["mean"]),
            arr(d["scale"]), d.get("strength", 1.0), arr(d.get("lo")), arr(d.get("hi")))


def _nll(theta, Z, Y, w, strength, k, d):
    W = theta.reshape(k, d + 1)
    logits = Z @ W[:, 1:].T + W[:, 0]
    lse = special.logsumexp(logits, axis=1)
    ll = np.sum(w * (np.sum(Y * logits, axis=1) - lse))
    P = np.exp(logits - lse[:, None])
    G = ((P - Y) * w[:, None]).T  # (k, n)
    grad = np.empty((k, d + 1))
    grad[:, 0] = G.sum(axis=1)
    grad[:, 1:] = G @ Z + strength * W[:, 1:]
    return -ll + 0.5 * strength * np.sum(W[:, 1:] ** 2), grad.ravel()


def fit_logreg(X, y, weights=None, strength: float = 1.0, tol: float = 1e-6,
               max_iter: int = 10_000) -> LogRegModel:
    """L2-regularised maximum likelihood; the intercept is not penalised.

    ``strength`` multiplies ``||beta||^2 / 2`` on standardised covariates.
    """
    X = np.atleast_2d(np.asarray(X, float))
    y = np.asarray(y, dtype=object)
    if len(y) == 0:
        raise ValueError("empty dataset")
    w = np.ones(len(y)) if weights is None else np.asarray(weights, float)
    keep = w > 0
    X, y, w = X[keep], y[keep], w[keep]
    if len(y) == 0:
        raise ValueError("empty dataset")
    classes = _unique(y)
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale < 1e-12] = 1.0
    lo, hi = X.min(axis=0), X.max(axis=0)
    k, d = len(classes), X.shape[1]
    if k == 1:
        return LogRegModel(np.asarray(classes, dtype=object), np.zeros((1, d)), np.zeros(1), mean,
                           scale, strength, lo, hi)
    Z = (X - mean) / scale
    index = {c: i for i, c in enumerate(classes)}
    Y = np.zeros((len(y), k))
    Y[np.arange(len(y)), [index[c] for c in y]] = 1.0
    res = optimize.minimize(_nll, np.zeros(k * (d + 1)), args=(Z, Y, w, strength, k, d), jac=True,
                            method="L-BFGS-B", options={"gtol": tol, "maxiter": max_iter})
    W = res.x.reshape(k, d + 1)
    return LogRegModel(np.asarray(classes, dtype=object), W[:, 1:].copy(), W[:, 0].copy(), mean,
                       scale, strength, lo, hi, int(res.nit))


def _unique(y) -> list:
    seen = []
    for v in y:
        if v not in seen:
            seen.append(v)
    try:
        return sorted(seen)
    except TypeError:
        return seen


def log_loss(model: LogRegModel, X, y, weights=None) -> float:
    P = model.predict_proba(np.atleast_2d(X))
    index = {c: i for i, c in enumerate(model.classes.tolist())}
    p = np.array([P[r, index[c]] for r, c in enumerate(y)])
    w = np.ones(len(y)) if weights is None else np.asarray(weights, float)
    return float(-np.sum(w * np.log(np.clip(p, 1e-300, None))) / np.sum(w))


# -- fitted estimator models ----------------------------------------------------------

@dataclass
class EstimatorModels:
    """Frequency and transition models for every unit of an instance."""

    products: list
    symbols: dict  # unit -> list of symbols (``(task, mode)`` pairs, then "idle")
    freq: dict = field(default_factory=dict)  # (unit, symbol index) -> LogRegModel
    trans: dict = field(default_factory=dict)  # (unit, symbol index) -> LogRegModel | None

    def save(self, path) -> None:
        doc = {
            "products": self.products,
            "symbols": {u: [s if isinstance(s, str) else list(s) for s in syms]
                        for u, syms in self.symbols.items()},
            "freq": [{"unit": u, "symbol": i, "model": m.to_dict()} for (u, i), m in self.freq.items()],
            "trans": [{"unit": u, "symbol": i, "model": None if m is None else m.to_dict()}
                      for (u, i), m in self.trans.items()],
        }
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=1)

    @classmethod
    def load(cls, path) -> "EstimatorModels":
        with open(path) as fh:
            doc = json.load(fh)
        symbols = {u: [s if isinstance(s, str) else tuple(s) for s in syms]
                   for u, syms in doc["symbols"].items()}
        freq = {(e["unit"], e["symbol"]): LogRegModel.from_dict(e["model"]) for e in doc["freq"]}
        trans = {(e["unit"], e["symbol"]): None if e["model"] is None else LogRegModel.from_dict(e["model"])
                 for e in doc["trans"]}
        return cls(doc["products"], symbols, freq, trans)


def fit_models(dataset, strength: float = 1.0) -> EstimatorModels:
    """Fit one frequency model per (unit, symbol) and one successor model per (unit, symbol)."""
    if len(dataset) == 0:
        raise ValueError("empty dataset")
    out = EstimatorModels(list(dataset.products), dict(dataset.symbols))
    X = dataset.psi
    for u, syms in dataset.symbols.items():
        F = dataset.freq[u]
        T = dataset.trans[u]
        for i in range(len(syms)):
            out.freq[(u, i)] = fit_logreg(X, [int(v) for v in F[:, i]], strength=strength)
            rows, ys, ws = [], [], []
            for r in range(len(X)):
                for k in range(len(syms)):
                    if T[r, i, k] > 0:
                        rows.append(X[r])
                        ys.append(k)
                        ws.append(T[r, i, k])
            out.trans[(u, i)] = fit_logreg(np.array(rows), ys, ws, strength) if rows else None
    return out


def fit_frequency(dataset, unit: str, symbol, strength: float = 1.0) -> LogRegModel:
    i = dataset.symbols[unit].index(symbol)
    return fit_logreg(dataset.psi, [int(v) for v in dataset.freq[unit][:, i]], strength=strength)


def predict_freq_dist(model: LogRegModel, psi) -> dict:
    """Distribution over occurrence counts ``{count: probability}``."""
    p = model.predict_proba(np.asarray(psi, float).reshape(-1))
    return {int(c): float(v) for c, v in zip(model.classes.tolist(), p)}


@dataclass
class TransitionMatrix:
    symbols: list
    P: np.ndarray

    def __post_init__(self):
        if np.any(self.P < -1e-12) or np.any(np.abs(self.P.sum(axis=1) - 1) > 1e-9):
            raise ValueError("transition matrix must be row-stochastic")


def predict_transition_matrix(models: EstimatorModels, unit: str, psi) -> TransitionMatrix:
    """Row ``i`` holds successor probabilities of symbol ``i``; rows without data are uniform."""
    syms = models.symbols[unit]
    n = len(syms)
    P = np.zeros((n, n))
    psi = np.asarray(psi, float).reshape(-1)
    for i in range(n):
        m = models.trans.get((unit, i))
        if m is None:
            P[i] = 1.0 / n
            continue
        p = m.predict_proba(psi)
        for c, v in zip(m.classes.tolist(), p):
            P[i, int(c)] = v
    return TransitionMatrix(list(syms), P)


# -- estimators ---------------------------------------------------------------------

@dataclass
class PfBound:
    unit: str
    p_bar: float
    samples: np.ndarray  # per-draw failure probabilities (nan for skipped draws)
    skipped: int

    def prefix_max(self) -> np.ndarray:
        return np.fmax.accumulate(np.nan_to_num(self.samples, nan=-np.inf))


def _rng_pair(seed):
    ss = np.random.SeedSequence(seed)
    a, b = ss.spawn(2)
    return np.random.default_rng(a), b


def _evaluate(instance, unit, tokens, uncertainty, dmodel, method, n_paths, seed, s_init):
    raw = [None if t == IDLE else t for t in tokens]
    try:
        sched = insert_maintenance(instance, unit, raw, uncertainty, s_init=s_init)
    except InfeasibleInsertion as exc:
        log.warning("draw skipped: %s", exc)
        return math.nan
    return failure_probability(dmodel, sched, unit, method, n_paths, seed, s_init).p_f


def demand_covariates(instance, scenario: str, n_periods: int, products=None, offset: int = 0):
    """Per-period demand rows of a scenario, zero beyond the table."""
    table = instance.demand[scenario]
    products = products or instance.products
    return np.array([[table[p][r] if r < len(table[p]) else 0.0 for p in products]
                     for r in range(offset, offset + n_periods)], float)


def _psi_rows(psi_sequence) -> np.ndarray:
    return np.atleast_2d(np.asarray(psi_sequence, float))


def estimate_pf_frequency(instance, models: EstimatorModels, psi_sequence, uncertainty, N: int = 100,
                          seed=0, *, method: str = "mc", n_paths: int = 1000,
                          dmodel: DegradationModel | None = None, units=None) -> dict:
    """Frequency approach: per period draw symbol counts, shuffle, insert maintenance, simulate.

    Returns ``{unit: PfBound}`` with ``p_bar`` the maximum over ``N`` draws.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    dmodel = dmodel or DegradationModel.from_instance(instance)
    rows = _psi_rows(psi_sequence)
    out = {}
    for u in units or list(models.symbols):
        syms = models.symbols[u]
        rng, sim_ss = _rng_pair([seed, _stable(u), 1])
        sim_seeds = sim_ss.generate_state(N)
        vals = np.full(N, math.nan)
        dists = []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExtrapolationWarning)
            for psi in rows:
                per = []
                for i in range(len(syms)):
                    m = models.freq[(u, i)]
                    per.append((np.array([int(c) for c in m.classes]), m.predict_proba(psi)))
                dists.append(per)
        for n in range(N):
            tokens = []
            for per in dists:
                bag = []
                for i, (cls, p) in enumerate(per):
                    bag += [syms[i]] * int(rng.choice(cls, p=p))
                order = rng.permutation(len(bag))
                tokens += [bag[k] for k in order]
            vals[n] = _evaluate(instance, u, tokens, uncertainty, dmodel, method, n_paths,
                                int(sim_seeds[n]), None)
        out[u] = _bound(u, vals)
    return out


def estimate_pf_markov(instance, models: EstimatorModels, psi_sequence, uncertainty, N: int = 100,
                       seed=0, *, method: str = "mc", n_paths: int = 1000,
                       dmodel: DegradationModel | None = None, units=None,
                       start: str = IDLE) -> dict:
    """Markov-chain approach: draw symbols from the successor model until each period is full."""
    if N < 1:
        raise ValueError("N must be >= 1")
    dmodel = dmodel or DegradationModel.from_instance(instance)
    rows = _psi_rows(psi_sequence)
    nS = instance.horizons.n_sched
    out = {}
    for u in units or list(models.symbols):
        syms = models.symbols[u]
        length = [1 if s == IDLE else instance.steps(instance.mode_data(s[0], u, s[1]).p) for s in syms]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ExtrapolationWarning)
            mats = [predict_transition_matrix(models, u, psi).P for psi in rows]
        cum = [np.cumsum(P, axis=1) for P in mats]
        rng, sim_ss = _rng_pair([seed, _stable(u), 2])
        sim_seeds = sim_ss.generate_state(N)
        vals = np.full(N, math.nan)
        s0 = syms.index(start) if start in syms else len(syms) - 1
        for n in range(N):
            state = s0
            tokens = []
            for C in cum:
                used = 0
                while used < nS:
                    r = rng.random()
                    state = int(min(np.searchsorted(C[state], r, side="right"), len(syms) - 1))
                    tokens.append(syms[state])
                    used += length[state]
            vals[n] = _evaluate(instance, u, tokens, uncertainty, dmodel, method, n_paths,
                                int(sim_seeds[n]), None)
        out[u] = _bound(u, vals)
    return out


def _bound(unit, vals) -> PfBound:
    skipped = int(np.isnan(vals).sum())
    p = float(np.nanmax(vals)) if skipped < len(vals) else math.nan
    return PfBound(unit, p, vals, skipped)


def _stable(text: str) -> int:
    return zlib.crc32(text.encode())


# -- bound quality ----------------------------------------------------------------------

@dataclass(frozen=True)
class BoundMetrics:
    rms_all: float
    p_out: float  # percent
    rms_out: float


def bound_metrics(observed, bound_curve) -> BoundMetrics:
    """Deviation of observed failure probabilities from a bound.

    ``observed`` is a sequence of ``(alpha, p)`` pairs and ``bound_curve``
    either a mapping or a callable giving the bound at ``alpha``.
    """
    obs = list(observed)
    if not obs:
        raise ValueError("no observations")
    f = bound_curve if callable(bound_curve) else bound_curve.__getitem__
    diff = np.array([p - f(a) for a, p in obs], float)
    out = diff > 0
    rms_all = math.sqrt(float(np.mean(diff ** 2)))
    frac = float(out.mean())
    rms_out = math.sqrt(float(np.sum(diff[out] ** 2)) / out.sum()) if out.any() else 0.0
    return BoundMetrics(rms_all, 100.0 * frac, rms_out)
