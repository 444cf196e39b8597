"""Closed forms for the classical (nu = 1) linear birth-death process.

The population starts from one individual. Every regime shares one geometric
core: with d = lambda - mu and e1(s) = (1 - exp(-d s)) / d,

    p0 = mu e1 / (1 + mu e1),  beta = lambda e1 / (1 + mu e1),
    p_k = (1 - p0)(1 - beta) beta^(k - 1)   for k >= 1,

which stays finite as d -> 0 and for large s in either direction.
"""
import logging
import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import special

from . import config
from .errors import InvalidParameter

logger = logging.getLogger(__name__)


class Regime(str, Enum):
    BIRTH_DOMINANT = 'birth_dominant'
    DEATH_DOMINANT = 'death_dominant'
    BALANCED = 'balanced'


@dataclass(frozen=True)
class ModelParams:
    lam: float
    mu: float
    nu: float = 1.0

    def __post_init__(self):
        if not (self.lam > 0 and math.isfinite(self.lam)):
            raise InvalidParameter(f"lambda must be > 0, got {self.lam}")
        if not (self.mu >= 0 and math.isfinite(self.mu)):
            raise InvalidParameter(f"mu must be >= 0, got {self.mu}")
        if not 0 < self.nu <= 1:
            raise InvalidParameter(f"nu must be in (0, 1], got {self.nu}")

    def with_nu(self, nu):
        return replace(self, nu=nu)


@dataclass(frozen=True)
class RegimeTag:
    regime: Regime
    classification_tol: float

    @property
    def balanced(self):
        return self.regime is Regime.BALANCED


def classify(params):
    """Regime of the rates; balanced when |lambda - mu| <= classification_tol max(lambda, mu)."""
    band = config.CLASSIFICATION_TOL * max(params.lam, params.mu)
    gap = params.lam - params.mu
    if abs(gap) <= band:
        regime = Regime.BALANCED
    elif gap > 0:
        regime = Regime.BIRTH_DOMINANT
    else:
        regime = Regime.DEATH_DOMINANT
    return RegimeTag(regime, config.CLASSIFICATION_TOL)


def rate_gap(params):
    """lambda - mu, snapped to exactly zero inside the classification band."""
    return 0.0 if classify(params).balanced else params.lam - params.mu


def check_time(t, name='t'):
    t = float(t)
    if not (t >= 0 and math.isfinite(t)):
        raise InvalidParameter(f"{name} must be >= 0, got {t}")
    return t


def check_state(k, name='k', minimum=0):
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)) or k < minimum:
        raise InvalidParameter(f"{name} must be an integer >= {minimum}, got {k!r}")
    return int(k)


def _expm1_over(d, s):
    """(exp(d s) - 1) / d, equal to s at d = 0."""
    ds = d * s
    if abs(ds) < config.NEAR_BALANCED_SWITCH:
        return s * (1 + ds / 2 + ds * ds / 6)
    return math.expm1(ds) / d


def geometric_form(params, s):
    """Return (p0, 1 - p0, beta, 1 - beta) at times s (array-valued)."""
    s = np.asarray(s, dtype=float)
    lam, mu = params.lam, params.mu
    d = rate_gap(params)
    with np.errstate(divide='ignore', invalid='ignore', over='ignore'):
        ds = d * s
        series = s * (1 - ds / 2 + ds * ds / 6)
        inv_e1 = np.where(np.abs(ds) < config.NEAR_BALANCED_SWITCH, 1 / series, d / -np.expm1(-ds))
        p0 = mu / (inv_e1 + mu)
        survival = 1 / (1 + mu / inv_e1)
        beta = lam / (inv_e1 + mu)
        if d >= 0:
            complement = np.exp(-ds) / (1 + mu / inv_e1)
        else:
            complement = (inv_e1 - d) / (inv_e1 + mu)
    start = s == 0
    p0 = np.where(start, 0.0, p0)
    survival = np.where(start, 1.0, survival)
    beta = np.where(start, 0.0, beta)
    complement = np.where(start, 1.0, complement)
    return p0, survival, beta, complement


def classical_pmf_table(params, s, kmax):
    """Rows p_0..p_kmax followed by the tail mass Pr{N(s) > kmax}; shape s.shape + (kmax + 2,)."""
    kmax = check_state(kmax, 'kmax')
    p0, survival, beta, complement = (v[..., None] for v in geometric_form(params, s))
    powers = np.power(beta, np.arange(kmax + 1, dtype=float))
    table = np.empty(np.shape(p0)[:-1] + (kmax + 2,))
    table[..., :1] = p0
    table[..., 1:kmax + 1] = survival * complement * powers[..., :kmax]
    table[..., kmax + 1:] = survival * powers[..., kmax:]
    return table


def classical_pmf(params, t, k):
    t = check_time(t)
    k = check_state(k)
    p0, survival, beta, complement = (float(v) for v in geometric_form(params, t))
    if k == 0:
        return p0
    return survival * complement * beta ** (k - 1)


def classical_extinction(params, t):
    return classical_pmf(params, t, 0)


def classical_tail(params, t, k):
    """Pr{N(t) > k}."""
    t = check_time(t)
    k = check_state(k)
    _, survival, beta, _ = (float(v) for v in geometric_form(params, t))
    return survival * beta ** k


def classical_mean(params, t):
    t = check_time(t)
    return math.exp(rate_gap(params) * t)


def classical_variance(params, t):
    t = check_time(t)
    d = rate_gap(params)
    return (params.lam + params.mu) * math.exp(d * t) * _expm1_over(d, t)


def riccati_residual(params, s, h=1e-5):
    """Residual of p0' = mu - (lambda + mu) p0 + lambda p0^2 with a central difference."""
    s = check_time(s, 's')
    if s < h:
        raise InvalidParameter(f"s must be >= h = {h}, got {s}")
    slope = (classical_extinction(params, s + h) - classical_extinction(params, s - h)) / (2 * h)
    p0 = classical_extinction(params, s)
    return slope - (params.mu - (params.lam + params.mu) * p0 + params.lam * p0 * p0)


def yule_pmf(l, k, rate, s):
    """Pr{M(s) = k + l | M(0) = l + 1} for a pure-birth process with per-capita rate `rate`."""
    l = check_state(l, 'l')
    k = check_state(k, 'k', minimum=1)
    s = np.asarray(s, dtype=float)
    with np.errstate(divide='ignore'):
        log_survive = -(l + 1) * rate * s
        log_born = (k - 1) * np.log(-np.expm1(-rate * s)) if k > 1 else 0.0
    return special.comb(k + l - 1, k - 1) * np.exp(log_survive + log_born)


def gillespie_sample(params, t, rng):
    """Population at time t of one exact jump-chain trajectory started from one individual."""
    t = check_time(t)
    birth_share = params.lam / (params.lam + params.mu)
    population = 1
    clock = 0.0
    while population > 0:
        rate = population * (params.lam + params.mu)
        clock += -math.log1p(-rng.random()) / rate
        if clock > t:
            break
        population += 1 if rng.random() < birth_share else -1
    return population
