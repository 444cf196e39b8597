"""Exact Monte Carlo for N_nu(t): draw the time change, then run the classical jump chain.

Sample i always uses its own counter-based stream (Philox keyed by the seed,
counter block i), so results do not depend on how samples are split across
workers.
"""
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from . import config
from .classical import check_time, gillespie_sample
from .errors import InvalidParameter
from .subordinator import SubordinatorSpec, iterated_depth, sample_inverse_stable, sample_iterated_bm

logger = logging.getLogger(__name__)

INVERSE_STABLE = 'inverse_stable'
ITERATED_BM = 'iterated_bm'
TIME_CHANGES = (INVERSE_STABLE, ITERATED_BM)
CHUNK_SIZE = 20000
STREAM_SHIFT = 128


@dataclass(frozen=True)
class McConfig:
    n_samples: int
    seed: int
    worker_count: int = 1
    kmax_report: int = config.KMAX_REPORT
    time_change: str = INVERSE_STABLE

    def __post_init__(self):
        for name in ('n_samples', 'worker_count'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise InvalidParameter(f"{name} must be an integer >= 1, got {value!r}")
        if isinstance(self.seed, bool) or not isinstance(self.seed, (int, np.integer)) or not 0 <= self.seed < 2 ** 128:
            raise InvalidParameter(f"seed must be an integer in [0, 2^128), got {self.seed!r}")
        if not isinstance(self.kmax_report, (int, np.integer)) or self.kmax_report < 0:
            raise InvalidParameter(f"kmax_report must be an integer >= 0, got {self.kmax_report!r}")
        if self.time_change not in TIME_CHANGES:
            raise InvalidParameter(f"time_change must be one of {TIME_CHANGES}, got {self.time_change!r}")


@dataclass(frozen=True, eq=False)
class McSummary:
    counts: np.ndarray
    overflow: int
    n_samples: int
    seed: int
    sample_mean: float
    sample_variance: float

    @property
    def kmax_report(self):
        return self.counts.size - 1

    @property
    def frequencies(self):
        return self.counts / self.n_samples

    @property
    def std_err(self):
        p = self.frequencies
        return np.sqrt(p * (1 - p) / self.n_samples)

    @property
    def mean_std_err(self):
        return math.sqrt(self.sample_variance / self.n_samples)

    def to_frame(self):
        return pd.DataFrame({
            'k': np.arange(self.counts.size),
            'count': self.counts,
            'frequency': self.frequencies,
            'std_err': self.std_err,
        })


@dataclass(frozen=True)
class ChiSquareResult:
    statistic: float
    dof: int
    p_value: float


def sample_stream(seed, index):
    """Independent generator for sample `index` under `seed`."""
    return np.random.Generator(np.random.Philox(key=seed, counter=index << STREAM_SHIFT))


def draw_population(params, t, rng, time_change=INVERSE_STABLE):
    if params.nu == 1 or t == 0:
        clock = t
    elif time_change == ITERATED_BM:
        clock = sample_iterated_bm(iterated_depth(params.nu), t, rng)
    else:
        clock = sample_inverse_stable(SubordinatorSpec(params.nu, t), rng)
    return gillespie_sample(params, clock, rng)


def _simulate_block(params, t, seed, start, stop, time_change):
    return np.fromiter(
        (draw_population(params, t, sample_stream(seed, i), time_change) for i in range(start, stop)),
        dtype=np.int64, count=stop - start,
    )


def simulate(params, t, mc_config):
    """Histogram of N_nu(t) over n_samples exact draws."""
    t = check_time(t)
    if mc_config.time_change == ITERATED_BM and params.nu != 1:
        iterated_depth(params.nu)

    n = mc_config.n_samples
    bounds = [(start, min(start + CHUNK_SIZE, n)) for start in range(0, n, CHUNK_SIZE)]
    args = [(params, t, mc_config.seed, start, stop, mc_config.time_change) for start, stop in bounds]
    logger.info("Step 1: drawing %d samples in %d chunks on %d workers", n, len(bounds), mc_config.worker_count)
    if mc_config.worker_count == 1 or len(bounds) == 1:
        blocks = [_simulate_block(*a) for a in args]
    else:
        with ProcessPoolExecutor(max_workers=mc_config.worker_count) as executor:
            blocks = list(executor.map(_simulate_block, *zip(*args)))
    populations = np.concatenate(blocks)

    kmax = mc_config.kmax_report
    binned = np.bincount(np.minimum(populations, kmax + 1), minlength=kmax + 2)
    logger.info("Step 2: %d samples above kmax_report=%d", int(binned[kmax + 1]), kmax)
    return McSummary(
        counts=binned[: kmax + 1],
        overflow=int(binned[kmax + 1]),
        n_samples=n,
        seed=mc_config.seed,
        sample_mean=float(np.mean(populations)),
        sample_variance=float(np.var(populations, ddof=1)) if n > 1 else 0.0,
    )


def chi_square_test(summary, reference, min_expected=5.0):
    """Goodness of fit of the histogram against a TruncatedPmf; sparse bins and the tail are pooled."""
    kmax = min(summary.kmax_report, reference.kmax)
    n = summary.n_samples
    expected = n * reference.probs[: kmax + 1]
    observed = summary.counts[: kmax + 1].astype(float)
    keep = expected >= min_expected

    observed_bins = list(observed[keep])
    expected_bins = list(expected[keep])
    pooled_expected = n - float(np.sum(expected[keep]))
    if pooled_expected > 0:
        observed_bins.append(n - float(np.sum(observed[keep])))
        expected_bins.append(pooled_expected)

    observed_bins = np.asarray(observed_bins)
    expected_bins = np.asarray(expected_bins)
    statistic = float(np.sum((observed_bins - expected_bins) ** 2 / expected_bins))
    dof = max(observed_bins.size - 1, 1)
    return ChiSquareResult(statistic, dof, float(stats.chi2.sf(statistic, dof)))
