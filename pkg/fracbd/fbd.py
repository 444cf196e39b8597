"""State probabilities and moments of the fractional linear birth-death process.

N_nu(t) is the classical process N run on the clock T(t) of the stable time
change. Two routes compute each state probability:

* the Mittag-Leffler series (closed-form sums of E_{nu,1} at negative
  arguments), used when its finite-difference amplification leaves room for
  the requested tolerance;
* the time-change route, E[p_k(T(t))] of the classical closed form,
  integrated over the two inputs of the exact stable sampler.

Extinction uses its positive-weight series (or, when lambda = mu, the
exponential-weight integral) and takes the time-change route only when the
series would need more than MAX_SERIES_TERMS terms.
"""
import logging
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import integrate, special

from . import config
from .classical import Regime, check_state, check_time, classical_pmf_table, classical_tail, classify, rate_gap, yule_pmf
from .errors import InvalidParameter, NonConvergence
from .mlf import EPS, MLQuery, ml, ml_deriv, ml_values, mittag_leffler
from .subordinator import SubordinatorSpec, time_change_expectation

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class TruncatedPmf:
    """Probabilities p_0..p_kmax with an upper bound on the mass beyond kmax."""

    probs: np.ndarray
    tail_bound: float
    series_tol: float
    errors: np.ndarray = field(default=None)
    methods: tuple = ()

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=float)
        if probs.ndim != 1 or probs.size == 0:
            raise InvalidParameter("probs must be a non-empty vector")
        if np.any(probs < 0) or np.any(probs > 1):
            raise InvalidParameter("probabilities must lie in [0, 1]")
        object.__setattr__(self, 'probs', probs)
        if self.errors is None:
            object.__setattr__(self, 'errors', np.zeros_like(probs))

    @property
    def kmax(self):
        return self.probs.size - 1

    def total(self):
        return float(np.sum(self.probs)) + self.tail_bound

    def __getitem__(self, k):
        return float(self.probs[k])

    def __len__(self):
        return self.probs.size


def resolve(tol):
    if tol is None:
        return config.DEFAULT_TOL
    if not (tol > 0 and math.isfinite(tol)):
        raise InvalidParameter(f"tol must be > 0, got {tol}")
    return float(tol)


def _clock(params, t):
    return t ** params.nu


@lru_cache(maxsize=8)
def _laguerre(n):
    nodes, weights = special.roots_laguerre(n)
    # far nodes carry weights below double range; drop whatever did not come out finite
    keep = np.isfinite(nodes) & np.isfinite(weights)
    return nodes[keep], weights[keep]


def _laguerre_sum(g, c, n):
    nodes, weights = _laguerre(n)
    return float(np.dot(weights, [g(c * w) for w in nodes]))


def _exponential_average(g, c, tol):
    """Integral of exp(-w) g(c w) over [0, inf) for a g bounded by 2 in magnitude.

    g varies on the unit scale of its own argument. While c is small enough that
    the weight sets the scale, Gauss-Laguerre doubling is used; otherwise (or when
    doubling stalls) adaptive quadrature runs in log(c w).
    """
    if c <= config.LAGUERRE_MAX_SCALE:
        n = config.LAGUERRE_START
        previous = _laguerre_sum(g, c, n)
        while n < config.LAGUERRE_CAP:
            n *= 2
            current = _laguerre_sum(g, c, n)
            change = abs(current - previous)
            if change < 0.25 * tol:
                return current, change
            logger.debug("Gauss-Laguerre with %d nodes moved by %.3g", n, change)
            previous = current
        logger.debug("Gauss-Laguerre stalled at %d nodes; switching to adaptive quadrature", n)
    return _log_scale_average(g, c, tol)


def _log_scale_average(g, c, tol):
    """(1 / c) int exp(-u / c) g(u) du over [0, inf), integrated in v = log u.

    With |g| <= 2 each cut-off end holds at most tol / 16.
    """
    edge = tol / 32
    low = math.log(edge * c)
    high = math.log(c) + math.log(math.log(1.0 / edge))
    points = sorted(p for p in {0.0, math.log(c)} if low < p < high)

    def integrand(v):
        u = math.exp(v)
        return math.exp(-u / c) * g(u) * u / c

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        value, err = integrate.quad(integrand, low, high, points=points or None, epsabs=0.125 * tol, epsrel=0.0, limit=500)
    err += 0.125 * tol
    if err > 0.5 * tol:
        raise NonConvergence(f"exponential-weight integral did not reach {tol:g} (estimate {err:.3g})")
    return value, err


# Extinction

def extinction(params, t, tol=None):
    """p_0^nu(t), the probability the population is extinct at time t."""
    return _extinction(params, check_time(t), resolve(tol))[0]


def extinction_with_error(params, t, tol=None):
    """(p_0^nu(t), absolute error estimate)."""
    return _extinction(params, check_time(t), resolve(tol))


def _extinction(params, t, tol):
    if t == 0:
        return 0.0, 0.0
    tag = classify(params)
    if tag.balanced:
        return _balanced_extinction(params, t, tol)
    if params.mu == 0:
        return 0.0, 0.0

    nu = params.nu
    if tag.regime is Regime.BIRTH_DOMINANT:
        rho = params.mu / params.lam
        c = (params.lam - params.mu) * _clock(params, t)
    else:
        rho = params.lam / params.mu
        c = (params.mu - params.lam) * _clock(params, t)
    spread = c / math.gamma(1 + nu)

    # E_nu(-y) <= 1 / (1 + y / Gamma(1 + nu)) bounds every omitted term
    def tail(m):
        if tag.regime is Regime.BIRTH_DOMINANT:
            return rho ** (m + 1) / (1 + spread * (m + 1))
        return rho ** m / (1 + spread * (m + 1))

    terms = 1
    while tail(terms) > 0.5 * tol:
        terms += max(1, terms // 4)
        if terms > config.MAX_SERIES_TERMS:
            logger.info("Extinction series needs more than %d terms; using the time-change route", config.MAX_SERIES_TERMS)
            return _time_change_extinction(params, t, tol)

    m = np.arange(1, terms + 1, dtype=float)
    try:
        values, errors = ml_values(nu, 1.0, -m * c, tol=0.5 * tol)
    except NonConvergence as exc:
        logger.info("Extinction series lost its Mittag-Leffler terms (%s); using the time-change route", exc)
        return _time_change_extinction(params, t, tol)
    if tag.regime is Regime.BIRTH_DOMINANT:
        weights = (1 - rho) * rho ** m
        value = rho - float(np.dot(weights, values))
    else:
        weights = (1 - rho) * rho ** (m - 1)
        value = 1 - float(np.dot(weights, values))
    err = tail(terms) + float(np.dot(weights, errors))
    logger.debug("extinction series: %d terms, error %.3g", terms, err)
    return value, err


def _balanced_extinction(params, t, tol):
    c = params.lam * _clock(params, t)
    integral, err = _exponential_average(lambda u: mittag_leffler(params.nu, 1.0, -u, tol=0.25 * tol), c, tol)
    return 1.0 - integral, err + 0.25 * tol


def _time_change_extinction(params, t, tol):
    probs, _, err = _time_change_table(params, t, 0, tol)
    return float(probs[0]), err


# State probabilities

def pmf(params, t, k, tol=None):
    """p_k^nu(t) = Pr{N_nu(t) = k | N_nu(0) = 1}."""
    t = check_time(t)
    k = check_state(k)
    tol = resolve(tol)
    if k == 0:
        return _extinction(params, t, tol)[0]
    if t == 0:
        return 1.0 if k == 1 else 0.0

    if classify(params).balanced:
        try:
            value, _ = _balanced_pmf(params, t, k, tol)
            return min(max(value, 0.0), 1.0)
        except NonConvergence as exc:
            logger.info("Balanced derivative route unavailable for k=%d (%s); using the time-change route", k, exc)
    else:
        series = _series_pmf(params, t, k, tol)
        if series is not None:
            return min(max(series[0], 0.0), 1.0)

    probs, _, _ = _time_change_table(params, t, k, tol)
    return float(probs[k])


def _series_pmf(params, t, k, tol):
    """Ratio-form series; returns (value, error) or None when too ill-conditioned for tol."""
    tag = classify(params)
    clock = _clock(params, t)
    if tag.regime is Regime.BIRTH_DOMINANT:
        rho = params.mu / params.lam
        c = (params.lam - params.mu) * clock
        log_prefactor = 2 * math.log1p(-rho)
        log_amplification = (k - 1) * (math.log(2) - math.log1p(-rho))
    else:
        rho = params.lam / params.mu
        c = (params.mu - params.lam) * clock
        log_prefactor = (k - 1) * math.log(rho) + 2 * math.log1p(-rho)
        log_amplification = (k - 1) * (math.log(2 * rho) - math.log1p(-rho))

    ml_tol = 0.25 * tol * math.exp(-log_amplification)
    if ml_tol < config.SERIES_TOL_FLOOR:
        logger.debug("series for k=%d amplifies errors by %.3g; not used", k, math.exp(log_amplification))
        return None

    spread = c / math.gamma(1 + params.nu)

    def log_weight(l):
        if l == 0:
            return log_prefactor
        return log_prefactor + special.gammaln(l + k + 1) - special.gammaln(l + 1) - special.gammaln(k + 1) + l * math.log(rho)

    # C(l + k, l) rho^l has a decreasing ratio rho (l + 1 + k) / (l + 1)
    last = 0
    tail = 0.0
    if rho > 0:
        while True:
            ratio = rho * (last + 1 + k) / (last + 1)
            if ratio < 1:
                bound = math.exp(log_weight(last + 1)) / (1 - ratio) / (1 + spread * (last + 2))
                if bound <= 0.5 * tol:
                    tail = bound
                    break
            last += 1
            if last > config.MAX_SERIES_TERMS:
                logger.debug("series for k=%d needs more than %d terms; not used", k, config.MAX_SERIES_TERMS)
                return None

    n = np.arange(1, last + k + 1, dtype=float)
    try:
        values, errors = ml_values(params.nu, 1.0, -n * c, tol=ml_tol)
    except NonConvergence as exc:
        logger.debug("series for k=%d lost its Mittag-Leffler terms: %s", k, exc)
        return None
    signs = np.where(np.arange(k) % 2 == 1, -1.0, 1.0) * special.comb(k - 1, np.arange(k))
    differences = sliding_window_view(values, k)[: last + 1] @ signs
    weights = np.exp([log_weight(l) for l in range(last + 1)])
    value = float(np.dot(weights, differences))
    rounding = EPS * float(np.dot(weights, sliding_window_view(np.abs(values), k)[: last + 1] @ np.abs(signs)))
    err = tail + math.exp(log_amplification) * float(np.max(errors)) + 4 * rounding
    return value, err


def _scaled_derivative(nu, x, j, tol):
    """h_j(x) = x^j E^(j)_{nu,1}(x) / j!, evaluated to absolute accuracy tol."""
    if x == 0:
        return 1.0 if j == 0 else 0.0
    log_scale = j * math.log(abs(x)) - math.lgamma(j + 1)
    target = min(1.0, max(tol * math.exp(-log_scale), 1e-300))
    derivative = ml_deriv(MLQuery(nu, 1.0, x, j, target)).value
    return (-1) ** j * math.exp(log_scale) * derivative


def _balanced_pmf(params, t, k, tol):
    """Derivative route for lambda = mu: (-1)^(k-1) E_w[h_k(-c w) + h_(k-1)(-c w)]."""
    if k > config.MAX_BALANCED_ORDER:
        raise NonConvergence(f"derivative route is limited to k <= {config.MAX_BALANCED_ORDER}")
    nu = params.nu
    c = params.lam * _clock(params, t)
    sign = -1.0 if k % 2 == 0 else 1.0

    # each h_j(-u) is bounded by one through complete monotonicity
    def integrand(u):
        return sign * (_scaled_derivative(nu, -u, k, 0.125 * tol) + _scaled_derivative(nu, -u, k - 1, 0.125 * tol))

    value, err = _exponential_average(integrand, c, tol)
    return value, err + 0.25 * tol


def _time_change_table(params, t, kmax, tol):
    """E[p_k(T(t))] for k = 0..kmax, the mixed tail mass and the quadrature error."""
    spec = SubordinatorSpec(params.nu, t)
    values, errors = time_change_expectation(lambda s: classical_pmf_table(params, s, kmax), spec, 0.5 * tol)
    values = np.clip(values, 0.0, 1.0)
    return values[: kmax + 1], float(values[kmax + 1]), float(np.max(errors))


def pmf_vector(params, t, kmax, tol=None):
    """TruncatedPmf with entries 0..kmax and a bound on the mass beyond kmax."""
    t = check_time(t)
    kmax = check_state(kmax, 'kmax')
    tol = resolve(tol)
    if t == 0:
        probs = np.zeros(kmax + 1)
        if kmax >= 1:
            probs[1] = 1.0
        return TruncatedPmf(probs, 0.0 if kmax >= 1 else 1.0, tol, methods=('exact',) * (kmax + 1))

    probs = np.zeros(kmax + 1)
    errors = np.zeros(kmax + 1)
    methods = ['series'] * (kmax + 1)
    probs[0], errors[0] = _extinction(params, t, tol)

    pending = list(range(1, kmax + 1))
    if not classify(params).balanced:
        unresolved = []
        for k in pending:
            series = _series_pmf(params, t, k, tol)
            if series is None:
                # the table is computed anyway; every later entry takes it too
                unresolved = list(range(k, kmax + 1))
                break
            probs[k], errors[k] = series
        pending = unresolved

    if params.nu == 1:
        tail_bound = classical_tail(params, t, kmax)
    if pending or params.nu < 1:
        logger.info("Step 1: time-change quadrature for %d of %d entries", len(pending), kmax)
        mixed, tail, mixed_err = _time_change_table(params, t, kmax, tol)
        for k in pending:
            probs[k], errors[k], methods[k] = mixed[k], mixed_err, 'time_change'
        if params.nu < 1:
            tail_bound = tail + mixed_err

    clipped = np.clip(probs, 0.0, 1.0)
    errors = errors + np.abs(clipped - probs)
    return TruncatedPmf(clipped, min(1.0, tail_bound), tol, errors, tuple(methods))


# Pure birth

def pure_birth_pmf(l, k, rate, nu, t, tol=None):
    """Pr{M_nu(t) = k + l | M_nu(0) = l + 1} for the fractional pure-birth process."""
    l = check_state(l, 'l')
    k = check_state(k, 'k', minimum=1)
    if not (rate > 0 and math.isfinite(rate)):
        raise InvalidParameter(f"rate must be > 0, got {rate}")
    if not 0 < nu <= 1:
        raise InvalidParameter(f"nu must be in (0, 1], got {nu}")
    t = check_time(t)
    tol = resolve(tol)
    if t == 0:
        return 1.0 if k == 1 else 0.0

    log_binomial = special.gammaln(k + l) - special.gammaln(k) - special.gammaln(l + 1)
    amplification = math.exp(log_binomial + (k - 1) * math.log(2))
    ml_tol = 0.25 * tol / amplification
    if ml_tol >= config.SERIES_TOL_FLOOR:
        r = np.arange(k, dtype=float)
        try:
            values, _ = ml_values(nu, 1.0, -(r + 1 + l) * rate * t ** nu, tol=ml_tol)
        except NonConvergence as exc:
            logger.debug("pure-birth series for l=%d k=%d unavailable: %s", l, k, exc)
        else:
            signs = np.where(r % 2 == 1, -1.0, 1.0) * special.comb(k - 1, r)
            value = math.exp(log_binomial) * float(np.dot(signs, values))
            return min(max(value, 0.0), 1.0)

    value, _ = time_change_expectation(
        lambda s: np.atleast_1d(yule_pmf(l, k, rate, s)), SubordinatorSpec(nu, t), 0.5 * tol,
    )
    return float(value[0])


def pmf_large_k(params, t, k, tol=None):
    """Large-k approximation: geometric number of extra progenitors feeding a pure-birth process."""
    if classify(params).regime is not Regime.BIRTH_DOMINANT:
        raise InvalidParameter("the large-k approximation needs lambda > mu")
    t = check_time(t)
    k = check_state(k, 'k', minimum=1)
    tol = resolve(tol)
    rho = params.mu / params.lam
    gap = params.lam - params.mu
    levels = 1 if rho == 0 else int(math.ceil(math.log(0.25 * tol) / math.log(rho))) + 1
    geometric = (1 - rho) * rho ** np.arange(levels)

    def mixture(s):
        births = np.array([float(yule_pmf(l, k, gap, s)) for l in range(levels)])
        return np.atleast_1d((1 - rho) * np.dot(geometric, births))

    value, _ = time_change_expectation(mixture, SubordinatorSpec(params.nu, t), 0.5 * tol)
    return float(value[0])


# Moments and closed-form identities

@dataclass(frozen=True)
class MomentEstimate:
    """Mean, variance and second factorial moment at one time, each with an absolute error estimate."""

    mean: float
    mean_error: float
    variance: float
    variance_error: float
    second_factorial: float
    second_factorial_error: float


def _mean(params, t, tol):
    d = rate_gap(params)
    if d == 0:
        return 1.0, 0.0
    result = ml(MLQuery(params.nu, 1.0, d * _clock(params, t), 0, tol))
    return result.value, result.est_error


def mean(params, t, tol=None):
    """E N_nu(t) = E_{nu,1}((lambda - mu) t^nu); exactly one when lambda = mu."""
    return _mean(params, check_time(t), tol)[0]


def _growth_quotient(nu, y, tol):
    """(E_nu(2y) - E_nu(y)) / y and its error, with the removable singularity at y = 0 filled in."""
    if y == 0:
        value = 1 / math.gamma(nu + 1)
        return value, EPS * value
    if abs(y) <= 0.5:
        m = np.arange(1, 2000, dtype=float)
        log_terms = m * math.log(2) + np.log1p(-np.exp2(-m)) + (m - 1) * math.log(abs(y)) - special.gammaln(nu * m + 1)
        terms = np.exp(log_terms) * np.where((y < 0) & (m % 2 == 0), -1.0, 1.0)
        return float(np.sum(terms)), 4 * EPS * float(np.sum(np.abs(terms)))
    doubled = ml(MLQuery(nu, 1.0, 2 * y, 0, tol))
    single = ml(MLQuery(nu, 1.0, y, 0, tol))
    return (doubled.value - single.value) / y, (doubled.est_error + single.est_error) / abs(y)


def _second_factorial_moment(params, t, tol):
    clock = _clock(params, t)
    quotient, err = _growth_quotient(params.nu, rate_gap(params) * clock, tol)
    scale = 2 * params.lam * clock
    return scale * quotient, scale * err


def second_factorial_moment(params, t, tol=None):
    """E[N(N - 1)] = (2 lambda / (lambda - mu)) [E_nu(2 (lambda - mu) t^nu) - E_nu((lambda - mu) t^nu)]."""
    return _second_factorial_moment(params, check_time(t), tol)[0]


def second_factorial_moment_convolution(params, t, tol=1e-8):
    """The same moment from its convolution form, integrated numerically."""
    t = check_time(t)
    if t == 0:
        return 0.0
    nu, d = params.nu, rate_gap(params)

    def integrand(s):
        return s ** (nu - 1) * mittag_leffler(nu, nu, 2 * d * s ** nu) * mittag_leffler(nu, 1.0, d * (t - s) ** nu)

    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        value, err = integrate.quad(integrand, 0.0, t, epsabs=tol, epsrel=0.0, limit=200)
    if err > 10 * tol:
        raise NonConvergence(f"convolution integral error {err:.3g} above {tol:g}")
    return 2 * params.lam * value


def variance(params, t, tol=None):
    """Var N_nu(t) = mu_2 + m - m^2."""
    return moments(params, t, tol).variance


def moments(params, t, tol=None):
    """MomentEstimate at time t; the variance error propagates both inputs to first order."""
    t = check_time(t)
    m, m_err = _mean(params, t, tol)
    mu2, mu2_err = _second_factorial_moment(params, t, tol)
    return MomentEstimate(
        mean=m, mean_error=m_err,
        variance=mu2 + m - m * m, variance_error=mu2_err + abs(1 - 2 * m) * m_err,
        second_factorial=mu2, second_factorial_error=mu2_err,
    )


def first_death_mass(params, t, tol=None):
    """(mu / (lambda + mu)) [1 - E_nu(-(lambda + mu) t^nu)]: chance the first event is a death by time t."""
    t = check_time(t)
    total = params.lam + params.mu
    return params.mu / total * (1 - mittag_leffler(params.nu, 1.0, -total * _clock(params, t), tol=tol))


def extinction_limit(params):
    """Long-time limit of p_0^nu(t)."""
    if classify(params).regime is Regime.BIRTH_DOMINANT:
        return params.mu / params.lam
    return 1.0
