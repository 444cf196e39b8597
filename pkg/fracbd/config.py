"""Tolerances, switch points and budgets shared by every module.

Values can be tuned in one place; the only environment override is
FBD_DEFAULT_TOL, read through python-dotenv so a local .env file works the
same way as an exported variable.
"""
import logging
import math
import os
from dataclasses import dataclass

from dotenv import load_dotenv

from .errors import InvalidParameter

logger = logging.getLogger(__name__)

# Mittag-Leffler evaluation
DEFAULT_TOL = 1e-10
ASYMPTOTIC_TOL = 1e-8
MAX_DERIV_ORDER = 64
X_SWITCH = 10.0
TAYLOR_MAX_TERMS = 20000
ASYMPTOTIC_MAX_TERMS = 400
INTEGRAL_CUTOFF = 120.0
INTEGRAL_LIMIT = 500

# Model parameters
CLASSIFICATION_TOL = 1e-12
NEAR_BALANCED_SWITCH = 1e-6

# Fractional state probabilities
LAGUERRE_START = 64
LAGUERRE_CAP = 128
# largest c = lambda t^nu for which the Laguerre weight sets the integrand scale
LAGUERRE_MAX_SCALE = 1.5
MAX_BALANCED_ORDER = 30
MAX_SERIES_TERMS = 10_000
SERIES_TOL_FLOOR = 1e-13

# Oracles
UNSTABLE_EPS = 1e-4
HALF_ORDER_ORACLE_TOL = 1e-7
QUARTER_ORDER_ORACLE_TOL = 1e-6

# Monte Carlo
KMAX_REPORT = 1024

TOL_ENV_VAR = 'FBD_DEFAULT_TOL'


@dataclass(frozen=True)
class Settings:
    default_tol: float | None = None


def parse_tol(raw, source):
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise InvalidParameter(f"{source} must be a positive number, got {raw!r}")
    if not math.isfinite(value) or value <= 0:
        raise InvalidParameter(f"{source} must be a positive number, got {raw!r}")
    return value


def load_settings(environ=None):
    """Read the environment override, loading a .env file first when using os.environ."""
    if environ is None:
        load_dotenv()
        environ = os.environ
    raw = environ.get(TOL_ENV_VAR)
    if raw is None or raw.strip() == '':
        return Settings()
    tol = parse_tol(raw, TOL_ENV_VAR)
    logger.debug("Using %s=%g from environment", TOL_ENV_VAR, tol)
    return Settings(default_tol=tol)


def resolve_tol(flag_value, settings):
    """Flag beats environment beats the built-in tiered default (None)."""
    if flag_value is not None:
        return parse_tol(flag_value, '--tol')
    return settings.default_tol
