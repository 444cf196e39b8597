"""The stable time change T(t) of order nu, the inverse of a nu-stable subordinator.

T(t) has Laplace transform E_{nu,1}(-z t^nu). It is sampled exactly through
Kanter's representation of the positive stable law,

    T(t) = t^nu (W / A(theta))^(1 - nu),   theta ~ U(0, pi),  W ~ Exp(1),

and expectations E[g(T(t))] are computed deterministically as the
two-dimensional integral over (theta, W) of that same map.
"""
import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from .errors import InvalidParameter, NonConvergence

logger = logging.getLogger(__name__)

HALF = 0.5
QUARTER = 0.25
ITERATED_DEPTH = {HALF: 1, QUARTER: 2}


@dataclass(frozen=True)
class SubordinatorSpec:
    nu: float
    t: float

    def __post_init__(self):
        if not 0 < self.nu <= 1:
            raise InvalidParameter(f"nu must be in (0, 1], got {self.nu}")
        if not (self.t >= 0 and math.isfinite(self.t)):
            raise InvalidParameter(f"t must be >= 0, got {self.t}")


def iterated_depth(nu):
    """Number of folded Brownian layers whose composition has the law of T at this nu."""
    for known, depth in ITERATED_DEPTH.items():
        if math.isclose(nu, known, rel_tol=0, abs_tol=1e-12):
            return depth
    raise InvalidParameter(f"iterated Brownian representation needs nu in {{1/2, 1/4}}, got {nu}")


def density_half(s, t):
    """Folded Gaussian density of T(t) at nu = 1/2 (the law of |B(t)| with variance 2t)."""
    if not t > 0:
        raise InvalidParameter(f"t must be > 0, got {t}")
    s = np.asarray(s, dtype=float)
    return np.where(s >= 0, 2.0 / math.sqrt(4 * math.pi * t) * np.exp(-s * s / (4 * t)), 0.0)


def density_quarter(s, t, tol=1e-12):
    """Density of T(t) at nu = 1/4: the half-order density composed with itself."""
    if not t > 0:
        raise InvalidParameter(f"t must be > 0, got {t}")
    scale = 2 * math.sqrt(t)

    def single(point):
        if point < 0:
            return 0.0
        # omega = 2 sqrt(t) y turns the outer folded Gaussian into exp(-y^2)
        value, err = integrate.quad(
            lambda y: math.exp(-y * y) * float(density_half(point, scale * y)) if y > 0 else 0.0,
            0.0, np.inf, epsabs=tol, epsrel=0.0, limit=200,
        )
        return 2 / math.sqrt(math.pi) * value

    s = np.asarray(s, dtype=float)
    return np.vectorize(single, otypes=[float])(s)


def time_change_density(spec, s):
    depth = iterated_depth(spec.nu)
    if depth == 1:
        return density_half(s, spec.t)
    return density_quarter(s, spec.t)


def moment(spec, m):
    """E[T(t)^m] = t^(nu m) Gamma(m + 1) / Gamma(nu m + 1)."""
    if not m >= 0:
        raise InvalidParameter(f"m must be >= 0, got {m}")
    if spec.t == 0:
        return 1.0 if m == 0 else 0.0
    return math.exp(spec.nu * m * math.log(spec.t) + special.gammaln(m + 1) - special.gammaln(spec.nu * m + 1))


def log_kanter(nu, theta):
    """(1 - nu) log A(theta) for Kanter's function A."""
    theta = np.asarray(theta, dtype=float)
    sin_nu = np.sin(nu * theta)
    return np.log(sin_nu) - np.log(np.sin(theta)) + (1 - nu) * (np.log(np.sin((1 - nu) * theta)) - np.log(sin_nu))


def sample_stable(nu, rng, size=None):
    """Positive nu-stable variable with Laplace transform exp(-z^nu)."""
    if nu == 1:
        return 1.0 if size is None else np.ones(size)
    theta = math.pi * (1.0 - rng.random(size))
    w = -np.log1p(-rng.random(size))
    log_s = (log_kanter(nu, theta) - (1 - nu) * np.log(w)) / nu
    return float(np.exp(log_s)) if size is None else np.exp(log_s)


def sample_inverse_stable(spec, rng):
    """One exact draw of T(t) from two uniforms (theta first, then the exponential)."""
    nu, t = spec.nu, spec.t
    if nu == 1 or t == 0:
        return t
    theta = math.pi * (1.0 - rng.random())
    w = -math.log1p(-rng.random())
    log_time = nu * math.log(t) + (1 - nu) * math.log(w) - float(log_kanter(nu, theta))
    return math.exp(log_time)


def sample_iterated_bm(depth, t, rng):
    """Compose `depth` folded Brownian motions, each with variance 2 x (current time)."""
    if isinstance(depth, bool) or not isinstance(depth, (int, np.integer)) or depth < 1:
        raise InvalidParameter(f"depth must be an integer >= 1, got {depth!r}")
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidParameter(f"t must be >= 0, got {t}")
    level = t
    for _ in range(depth):
        level = math.sqrt(2 * level) * abs(rng.standard_normal())
    return level


def time_change_expectation(g, spec, tol=1e-10):
    """E[g(T(t))] for a (vector-valued) g, with its absolute error estimate.

    Returns (value, error). The outer integral runs over theta, the inner over
    the exponential variable; every integrand is g evaluated at a real time, so
    a nonnegative g gives a nonnegative result.
    """
    nu, t = spec.nu, spec.t
    if nu == 1 or t == 0:
        value = np.asarray(g(t), dtype=float)
        return value, np.zeros_like(value)

    log_t_nu = nu * math.log(t)
    inner_errors = [0.0]

    def inner(theta):
        scale = math.exp(log_t_nu - float(log_kanter(nu, theta)))
        value, err = integrate.quad_vec(
            lambda w: math.exp(-w) * np.asarray(g(scale * w ** (1 - nu)), dtype=float),
            0.0, np.inf, epsabs=0.25 * tol, epsrel=0.0, norm='max',
        )
        inner_errors[0] = max(inner_errors[0], float(np.max(err)))
        return value

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        value, err = integrate.quad_vec(inner, 0.0, math.pi, epsabs=0.25 * tol * math.pi, epsrel=0.0, norm='max')
    value = np.asarray(value) / math.pi
    error = (float(np.max(err)) / math.pi) + inner_errors[0]
    if not np.all(np.isfinite(value)):
        raise NonConvergence("time-change quadrature produced non-finite values")
    logger.debug("time-change expectation at nu=%g t=%g: error %.3g", nu, t, error)
    return value, np.full(value.shape, error)
