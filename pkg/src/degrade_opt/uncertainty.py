"""Box uncertainty sets over degradation increments.

A single conservatism level ``alpha`` is mapped to a relative half-width
``eps`` per (task, unit, mode) through the increment quantile function::

    eps = 1 - F^{-1}(alpha) / d_bar

so that ``P(D <= d_bar (1 - eps)) = alpha``.  For Wiener increments
``F^{-1}(alpha) = d_bar + sigma * Phi^{-1}(alpha)``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

from scipy import stats

ALPHA_MIN = 0.001
ALPHA_MAX = 0.5


@dataclass(frozen=True)
class Bounds:
    nominal: float
    eps: float
    lower: float
    upper: float
    clamped: bool = False


@dataclass(frozen=True)
class UncertaintySet:
    alpha: float
    bounds: dict  # (task, unit, mode) -> Bounds

    def d_max(self, key) -> float:
        return self.bounds[key].upper

    def d_min(self, key) -> float:
        return self.bounds[key].lower

    def eps(self, key) -> float:
        return self.bounds[key].eps

    @property
    def any_clamped(self) -> bool:
        return any(b.clamped for b in self.bounds.values())


def check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not ALPHA_MIN <= alpha <= ALPHA_MAX:
        raise ValueError(f"alpha must lie in [{ALPHA_MIN}, {ALPHA_MAX}], got {alpha}")
    return alpha


def wiener_quantile(alpha: float, d: float, sigma: float) -> float:
    return d + sigma * stats.norm.ppf(alpha)


def gamma_quantile(alpha: float, shape: float, rate: float) -> float:
    return stats.gamma.ppf(alpha, shape, scale=1.0 / rate)


def epsilon_from_alpha(alpha: float, d: float, sigma: float = 0.0, kind: str = "wiener",
                       shape: float | None = None, rate: float | None = None) -> float:
    """Relative half-width of the box for one uncertain increment.

    ``kind="gamma"`` uses the gamma quantile with the given shape and rate
    (its mean ``shape/rate`` should equal ``d``).  A zero nominal value
    gives ``eps = 0`` with a ``RuntimeWarning``.
    """
    alpha = check_alpha(alpha)
    if d < 0:
        raise ValueError("nominal increment must be nonnegative")
    if d == 0:
        warnings.warn("zero nominal increment: eps set to 0", RuntimeWarning, stacklevel=2)
        return 0.0
    if kind == "wiener":
        q = wiener_quantile(alpha, d, sigma)
    elif kind == "gamma":
        if shape is None or rate is None or shape <= 0 or rate <= 0:
            raise ValueError("gamma quantile needs positive shape and rate")
        q = gamma_quantile(alpha, shape, rate)
    else:
        raise ValueError(f"unknown increment distribution {kind!r}")
    return max(0.0, 1.0 - q / d)


def build_set(instance, alpha: float) -> UncertaintySet:
    """Box set for every (task, unit, mode) of an instance.

    Lower bounds that would be negative are clamped to zero and flagged.
    """
    alpha = check_alpha(alpha)
    bounds = {}
    for key in instance.triples():
        md = instance.mode_data(*key)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            eps = epsilon_from_alpha(alpha, md.d, md.sigma)
        lo = md.d * (1 - eps)
        clamped = lo < 0
        bounds[key] = Bounds(md.d, eps, max(lo, 0.0), md.d * (1 + eps), clamped)
    return UncertaintySet(alpha, bounds)


def nominal_set(instance) -> UncertaintySet:
    return build_set(instance, ALPHA_MAX)
