"""Independent oracles for the fractional state probabilities.

* solve_caputo_system integrates the truncated forward equations
  d^nu p / dt^nu = A p with the L1 discretization of the Caputo derivative
  on a graded time mesh.
* subordination_quadrature integrates a classical closed form against the
  density of the time change, available at nu = 1/2 and nu = 1/4.

Neither path shares code with the Mittag-Leffler series in fbd.
"""
import logging
import math
import warnings
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np
from scipy import integrate, linalg, special

from . import config
from .classical import check_state, check_time, classical_pmf
from .errors import InvalidParameter, QuadratureFailure, UnstableStep
from .fbd import TruncatedPmf
from .subordinator import iterated_depth

logger = logging.getLogger(__name__)

EXTINCTION = 'extinction'


class Scheme(str, Enum):
    L1_CAPUTO = 'L1_caputo'


class Mesh(str, Enum):
    GRADED = 'graded'
    UNIFORM = 'uniform'


@dataclass(frozen=True)
class OracleConfig:
    kmax: int
    dt: float
    t_end: float
    scheme: Scheme = Scheme.L1_CAPUTO
    mesh: Mesh = Mesh.GRADED

    def __post_init__(self):
        check_state(self.kmax, 'kmax', minimum=2)
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise InvalidParameter(f"dt must be > 0, got {self.dt}")
        check_time(self.t_end, 't_end')
        if self.t_end > 0 and self.dt > self.t_end:
            raise InvalidParameter(f"dt must be <= t_end, got dt={self.dt} t_end={self.t_end}")
        try:
            object.__setattr__(self, 'scheme', Scheme(self.scheme))
        except ValueError:
            raise InvalidParameter(f"unknown scheme {self.scheme!r}")
        try:
            object.__setattr__(self, 'mesh', Mesh(self.mesh))
        except ValueError:
            raise InvalidParameter(f"unknown mesh {self.mesh!r}")

    @property
    def steps(self):
        return 0 if self.t_end == 0 else max(1, int(round(self.t_end / self.dt)))

    def grading(self, nu):
        """Mesh exponent r in t_n = t_end (n / N)^r; dt fixes N = t_end / dt."""
        return 1.0 if self.mesh is Mesh.UNIFORM else (2 - nu) / nu


@dataclass(frozen=True, eq=False)
class CaputoSolution:
    """Raw probability vectors on the time grid; indexing yields reporting-ready TruncatedPmf."""

    times: np.ndarray
    raw: np.ndarray
    config: OracleConfig

    @property
    def leakage(self):
        return 1.0 - self.raw.sum(axis=1)

    def __len__(self):
        return self.times.size

    def __getitem__(self, index):
        leak = float(self.leakage[index])
        return TruncatedPmf(np.clip(self.raw[index], 0.0, 1.0), max(leak, 0.0), self.config.dt)

    def final(self):
        return self[-1]

    def mean(self, index=-1):
        return float(np.dot(np.arange(self.raw.shape[1]), self.raw[index]))


def generator_bands(params, kmax):
    """Banded storage of (c I - A) without the c shift: rows upper, diagonal, lower."""
    states = np.arange(kmax + 1, dtype=float)
    bands = np.zeros((3, kmax + 1))
    bands[0, 1:] = -params.mu * states[1:]
    bands[1] = (params.lam + params.mu) * states
    bands[2, :-1] = -params.lam * states[:-1]
    return bands


def solve_caputo_system(params, oracle_config):
    """Integrate from p(0) = e_1 over [0, t_end] with the implicit L1 scheme.

    On the graded mesh t_n = t_end (n / N)^r, r = (2 - nu) / nu, the start-up
    singularity of the solution no longer caps the order at one.
    """
    kmax = oracle_config.kmax
    steps = oracle_config.steps
    nu = params.nu

    raw = np.zeros((steps + 1, kmax + 1))
    raw[0, 1] = 1.0
    if steps == 0:
        return CaputoSolution(np.zeros(1), raw, oracle_config)

    grading = oracle_config.grading(nu)
    times = oracle_config.t_end * (np.arange(steps + 1) / steps) ** grading
    widths = np.diff(times)
    stiffness = kmax * (params.lam + params.mu) * widths.max() ** nu
    logger.debug("L1 scheme: %d steps, grading %g, stiffness kmax (lambda + mu) dt^nu = %.3g", steps, grading, stiffness)

    base = generator_bands(params, kmax)
    bands = base.copy()
    norm = 1.0 / special.gamma(2 - nu)
    increments = np.zeros((steps, kmax + 1))

    for n in range(1, steps + 1):
        # a_j = [(t_n - t_(j-1))^(1-nu) - (t_n - t_j)^(1-nu)] / (Gamma(2 - nu) tau_j), j = 1..n
        powers = (times[n] - times[: n + 1]) ** (1 - nu)
        powers[n] = 0.0
        weights = norm * (powers[:-1] - powers[1:]) / widths[:n]
        current = weights[-1]
        history = weights[:-1] @ increments[: n - 1] if n > 1 else 0.0
        bands[1] = base[1] + current
        raw[n] = linalg.solve_banded((1, 1), bands, current * raw[n - 1] - history)
        low, high = raw[n].min(), raw[n].max()
        if low < -config.UNSTABLE_EPS or high > 1 + config.UNSTABLE_EPS:
            raise UnstableStep(
                f"probability left [0, 1] at step {n} (t={times[n]:g}): range [{low:.3g}, {high:.3g}]; "
                "reduce dt or raise kmax"
            )
        increments[n - 1] = raw[n] - raw[n - 1]
    logger.debug("L1 scheme finished; leakage at t_end %.3g", 1.0 - raw[-1].sum())
    return CaputoSolution(times, raw, oracle_config)


def refinement_order(params, oracle_config, reference, k=0):
    """Observed order from halving dt, measured on p_k(t_end) against a reference value."""
    coarse = solve_caputo_system(params, oracle_config).raw[-1, k]
    finer = replace(oracle_config, dt=oracle_config.dt / 2)
    fine = solve_caputo_system(params, finer).raw[-1, k]
    return math.log2(abs(coarse - reference) / abs(fine - reference))


def _state_index(k):
    if k == EXTINCTION:
        return 0
    return check_state(k)


def _folded_gaussian_average(g, time, tol):
    """E[g(|B|)] with Var B = 2 time, written as (2 / sqrt(pi)) int exp(-x^2) g(2 sqrt(time) x) dx."""
    if time == 0:
        return g(0.0), 0.0
    scale = 2 * math.sqrt(time)
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', integrate.IntegrationWarning)
        value, err = integrate.quad(
            lambda x: math.exp(-x * x) * g(scale * x), 0.0, np.inf, epsabs=tol, epsrel=0.0, limit=200,
        )
    factor = 2 / math.sqrt(math.pi)
    return factor * value, factor * err


def subordination_quadrature(params, t, k, nu):
    """Integral of the classical p_k(s) against the time-change density at time t.

    k is a state index or 'extinction'; nu must be 1/2 or 1/4.
    """
    index = _state_index(k)
    t = check_time(t)
    depth = iterated_depth(nu)

    def classical(s):
        return classical_pmf(params, s, index)

    if depth == 1:
        target = config.HALF_ORDER_ORACLE_TOL
        value, err = _folded_gaussian_average(classical, t, 0.1 * target)
    else:
        target = config.QUARTER_ORDER_ORACLE_TOL
        inner_errors = [0.0]

        def half_order(omega):
            inner, inner_err = _folded_gaussian_average(classical, omega, 0.01 * target)
            inner_errors[0] = max(inner_errors[0], inner_err)
            return inner

        value, err = _folded_gaussian_average(half_order, t, 0.1 * target)
        err += inner_errors[0]

    if not err <= target:
        raise QuadratureFailure(f"subordination quadrature error {err:.3g} exceeds {target:g} at nu={nu}")
    logger.debug("subordination quadrature nu=%g k=%s t=%g: %.12g (error %.3g)", nu, k, t, value, err)
    return value
