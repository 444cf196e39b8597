"""Mittag-Leffler function E_{alpha,beta}(x) and its derivatives on the real line.

Three evaluation tiers are tried in order until one reports an error estimate
inside the requested tolerance:

* ``taylor``: the defining power series, with a truncation bound from the
  monotone term ratio and a rounding estimate from the sum of magnitudes.
* ``asymptotic``: the algebraic expansion for large negative arguments,
  truncated at its smallest term; its estimate also counts the exponential
  terms the expansion omits when 1/2 < alpha < 1.
* ``integral``: the real-line Laplace-inversion integral, valid for negative
  arguments with 0 < alpha < 1 and beta < 1 + alpha.
"""
import logging
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from . import config
from .errors import InvalidParameter, NonConvergence

logger = logging.getLogger(__name__)

EPS = float(np.finfo(float).eps)
TAYLOR_BLOCK = 256
LOG_DOUBLE_MAX = 700.0


class Method(str, Enum):
    TAYLOR = 'taylor'
    ASYMPTOTIC = 'asymptotic'
    INTEGRAL = 'integral'


@dataclass(frozen=True)
class MLQuery:
    alpha: float
    beta: float
    x: float
    deriv_order: int = 0
    tol: float | None = None

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise InvalidParameter(f"alpha must be in (0, 1], got {self.alpha}")
        if not self.beta > 0 or not math.isfinite(self.beta):
            raise InvalidParameter(f"beta must be > 0, got {self.beta}")
        if not math.isfinite(self.x):
            raise InvalidParameter(f"x must be finite, got {self.x}")
        j = self.deriv_order
        if isinstance(j, bool) or not isinstance(j, (int, np.integer)):
            raise InvalidParameter(f"deriv_order must be an integer, got {j!r}")
        if not 0 <= j <= config.MAX_DERIV_ORDER:
            raise InvalidParameter(f"deriv_order must be in [0, {config.MAX_DERIV_ORDER}], got {j}")
        if self.tol is not None and not (self.tol > 0 and math.isfinite(self.tol)):
            raise InvalidParameter(f"tol must be > 0, got {self.tol}")

    def target(self, method):
        if self.tol is not None:
            return self.tol
        return config.ASYMPTOTIC_TOL if method is Method.ASYMPTOTIC else config.DEFAULT_TOL


@dataclass(frozen=True)
class MLResult:
    value: float
    est_error: float
    method_used: Method


def ml(query):
    """Value of E_{alpha,beta}(x)."""
    if query.deriv_order != 0:
        raise InvalidParameter("ml evaluates the function itself; use ml_deriv for derivatives")
    return _evaluate(query)


def ml_deriv(query):
    """Value of d^j/dx^j E_{alpha,beta}(x) with j = query.deriv_order."""
    return _evaluate(query)


def mittag_leffler(alpha, beta, x, deriv_order=0, tol=None):
    return _evaluate(MLQuery(float(alpha), float(beta), float(x), int(deriv_order), tol)).value


def ml_values(alpha, beta, xs, deriv_order=0, tol=None):
    """Evaluate over an array of arguments; returns (values, error estimates)."""
    xs = np.asarray(xs, dtype=float)
    values = np.empty(xs.shape)
    errors = np.empty(xs.shape)
    for index, x in np.ndenumerate(xs):
        result = _evaluate(MLQuery(float(alpha), float(beta), float(x), int(deriv_order), tol))
        values[index] = result.value
        errors[index] = result.est_error
    return values, errors


@lru_cache(maxsize=65536)
def _evaluate(query):
    a, b, x, j = query.alpha, query.beta, query.x, int(query.deriv_order)

    if a == 1 and b == 1:
        if x > LOG_DOUBLE_MAX:
            raise NonConvergence(f"exp({x}) exceeds double range")
        value = math.exp(x)
        return MLResult(value, 4 * EPS * value, Method.TAYLOR)

    if j == 1 and b == 1:
        inner_tol = None if query.tol is None else query.tol * a
        inner = _evaluate(MLQuery(a, a, x, 0, inner_tol))
        return MLResult(inner.value / a, inner.est_error / a, inner.method_used)

    tiers = []
    if a == 1 or x >= -config.X_SWITCH:
        tiers.append((Method.TAYLOR, _taylor))
    if x < 0 and a < 1:
        if x < -config.X_SWITCH:
            tiers.append((Method.ASYMPTOTIC, _asymptotic))
        if b < 1 + a:
            tiers.append((Method.INTEGRAL, _integral))

    failures = []
    for method, tier in tiers:
        target = query.target(method)
        try:
            value, err = tier(a, b, x, j, target)
        except NonConvergence as exc:
            failures.append(f"{method.value}: {exc}")
            continue
        scale = max(1.0, abs(value)) if x > 0 else 1.0
        if err <= target * scale:
            return MLResult(value, err, method)
        logger.debug("E_(%g,%g)^(%d)(%g): %s estimate %.3g above %.3g", a, b, j, x, method.value, err, target * scale)
        failures.append(f"{method.value}: error estimate {err:.3g}")

    raise NonConvergence(
        f"no evaluation tier reached tolerance for E_({a},{b})^({j})({x}); "
        + ('; '.join(failures) or 'no tier applies')
    )


def _taylor(a, b, x, j, tol):
    if x == 0.0:
        value = math.exp(math.lgamma(j + 1) - special.gammaln(a * j + b))
        return value, EPS * value

    log_x = math.log(abs(x))
    total = 0.0
    magnitude = 0.0
    start = 0
    while start < config.TAYLOR_MAX_TERMS:
        n = np.arange(start, start + TAYLOR_BLOCK, dtype=float)
        log_mag = special.gammaln(n + j + 1) - special.gammaln(n + 1) - special.gammaln(a * (n + j) + b) + n * log_x
        if log_mag.max() > LOG_DOUBLE_MAX:
            raise NonConvergence("Taylor terms exceed double range")
        mags = np.exp(log_mag)
        if x < 0:
            total += float(np.sum(np.where(n % 2 == 1, -mags, mags)))
        else:
            total += float(np.sum(mags))
        magnitude += float(np.sum(mags))

        # term ratios decrease monotonically in n, so once below one the tail is geometric
        ratio = math.exp(log_mag[-1] - log_mag[-2])
        if ratio < 1:
            tail = mags[-1] * ratio / (1 - ratio)
            scale = max(1.0, abs(total)) if x > 0 else 1.0
            if tail <= 0.25 * tol * scale:
                return total, tail + 4 * EPS * magnitude
        start += TAYLOR_BLOCK
    raise NonConvergence(f"Taylor series did not settle within {config.TAYLOR_MAX_TERMS} terms")


def _asymptotic(a, b, x, j, tol):
    y = -x
    n = np.arange(1, config.ASYMPTOTIC_MAX_TERMS + 1, dtype=float)
    z = b - a * n
    poles = (z <= 0) & np.isclose(z, np.round(z), rtol=0.0, atol=1e-13)

    with np.errstate(invalid='ignore', divide='ignore'):
        log_mag = special.gammaln(n + j) - special.gammaln(n) - (n + j) * math.log(y) - special.gammaln(z)
    # Gamma(z) has the sign of sin(pi z) for z < 1 by reflection
    gamma_sign = np.where(z > 0, 1.0, np.sign(np.sin(np.pi * z)))
    sign = -np.where(n % 2 == 1, -1.0, 1.0) * gamma_sign

    live = np.flatnonzero(~poles)
    if live.size == 0:
        return 0.0, 0.0
    lm = log_mag[live]
    rises = np.flatnonzero(np.diff(lm) > 0)
    stop = live[rises[0]] if rises.size else live[-1]
    if lm[0] > LOG_DOUBLE_MAX:
        raise NonConvergence("asymptotic terms exceed double range")

    used = live[live < stop]
    terms = sign[used] * np.exp(log_mag[used])
    value = float(np.sum(terms))
    smallest = math.exp(min(log_mag[stop], LOG_DOUBLE_MAX))
    return value, smallest + _pole_magnitude(a, b, y, j) + 4 * EPS * float(np.sum(np.abs(terms)))


def _pole_magnitude(a, b, y, j):
    """Size of the exponential terms the algebraic expansion leaves out, and of their j-th derivatives.

    The terms are (1/a) z^((1-b)/a) exp(z) with z = y^(1/a) exp(+-i pi/a). For
    1/2 < a < 1 they can exceed the smallest algebraic term; they only decay
    once a > 2/3.
    """
    if not 0.5 < a < 1:
        return 0.0
    root = y ** (1 / a)
    log_size = root * math.cos(math.pi / a) + (1 - b) / a * math.log(y) - math.log(a) + math.log(2)
    if j:
        # each derivative in x brings down at most the exponent's slope plus the power's
        log_size += j * math.log(root / (a * y) + (j + abs(1 - b) / a) / y)
    return math.exp(min(log_size, LOG_DOUBLE_MAX))


def _integral(a, b, x, j, tol):
    s1 = math.sin(math.pi * (1 - b))
    s2 = math.sin(math.pi * (1 - b + a))
    rotation = complex(math.cos(math.pi * a), math.sin(math.pi * a))
    residue = (s1 - rotation * s2) / (2j * math.sin(math.pi * a))
    residue *= math.factorial(j) * (-1) ** j
    power = (1 - b) / a
    norm = 1.0 / (a * math.pi)

    def integrand(chi):
        pole = chi * rotation
        rational = 2.0 * (residue / (x - pole) ** (j + 1)).real
        return norm * chi ** power * math.exp(-chi ** (1 / a)) * rational

    upper = config.INTEGRAL_CUTOFF ** a
    # the denominator is smallest at chi = -x cos(a pi) when a > 1/2
    candidates = (abs(x) * abs(math.cos(math.pi * a)), abs(x)) if a > 0.5 else (abs(x),)
    points = sorted({p for p in candidates if 0 < p < upper})
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        value, err = integrate.quad(
            integrand, 0.0, upper, points=points or None,
            epsabs=0.25 * tol, epsrel=0.0, limit=config.INTEGRAL_LIMIT,
        )
    if not math.isfinite(value):
        raise NonConvergence("integral representation produced a non-finite value")
    return value, err
