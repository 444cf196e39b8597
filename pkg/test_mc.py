import math

import numpy as np
import pytest

from fracbd import fbd, mc
from fracbd.classical import ModelParams
from fracbd.errors import InvalidParameter
from fracbd.mc import McConfig, chi_square_test, draw_population, sample_stream, simulate


def within_sigma(frequency, probability, n, sigmas=4):
    return abs(frequency - probability) <= sigmas * math.sqrt(probability * (1 - probability) / n)


def test_streams_are_reproducible_and_distinct():
    assert sample_stream(5, 3).random() == sample_stream(5, 3).random()
    assert sample_stream(5, 3).random() != sample_stream(5, 4).random()
    assert sample_stream(5, 3).random() != sample_stream(6, 3).random()


def test_results_do_not_depend_on_worker_count(monkeypatch):
    monkeypatch.setattr(mc, 'CHUNK_SIZE', 500)
    params = ModelParams(1.0, 1.0, 0.5)
    serial = simulate(params, 1.0, McConfig(2000, 42, worker_count=1, kmax_report=50))
    parallel = simulate(params, 1.0, McConfig(2000, 42, worker_count=3, kmax_report=50))
    np.testing.assert_array_equal(serial.counts, parallel.counts)
    assert serial.overflow == parallel.overflow
    assert serial.sample_mean == parallel.sample_mean


def test_draws_are_indexed_by_sample():
    params = ModelParams(2.0, 1.0, 0.6)
    summary = simulate(params, 1.0, McConfig(50, 9, kmax_report=10_000))
    direct = [draw_population(params, 1.0, sample_stream(9, i)) for i in range(50)]
    assert summary.sample_mean == pytest.approx(np.mean(direct), rel=1e-15)


def test_start_time_keeps_the_progenitor():
    summary = simulate(ModelParams(1.0, 1.0, 0.5), 0.0, McConfig(100, 1, kmax_report=3))
    assert summary.counts.tolist() == [0, 100, 0, 0]
    assert summary.overflow == 0


def test_overflow_counts_large_populations():
    summary = simulate(ModelParams(3.0, 0.0, 1.0), 2.0, McConfig(200, 3, kmax_report=2))
    assert summary.counts.sum() + summary.overflow == 200
    assert summary.overflow > 0


def test_extinction_frequency_matches_closed_form():
    params = ModelParams(1.0, 1.0, 0.5)
    n = 20000
    summary = simulate(params, 1.0, McConfig(n, 2024))
    assert within_sigma(summary.frequencies[0], fbd.extinction(params, 1.0), n)
    assert abs(summary.sample_mean - 1.0) <= 4 * summary.mean_std_err


def test_histogram_fits_state_probabilities():
    params = ModelParams(1.0, 2.0, 0.6)
    summary = simulate(params, 1.0, McConfig(20000, 11))
    fit = chi_square_test(summary, fbd.pmf_vector(params, 1.0, 30))
    assert fit.p_value >= 1e-3
    assert fit.dof >= 1


def test_iterated_brownian_time_change():
    params = ModelParams(1.0, 1.0, 0.5)
    n = 20000
    summary = simulate(params, 1.0, McConfig(n, 7, time_change='iterated_bm'))
    assert within_sigma(summary.frequencies[0], fbd.extinction(params, 1.0), n)


def test_iterated_brownian_needs_dyadic_order():
    with pytest.raises(InvalidParameter):
        simulate(ModelParams(1.0, 1.0, 0.3), 1.0, McConfig(10, 1, time_change='iterated_bm'))


@pytest.mark.parametrize('kwargs', [
    {'n_samples': 0, 'seed': 1},
    {'n_samples': 10, 'seed': -1},
    {'n_samples': 10, 'seed': 1, 'worker_count': 0},
    {'n_samples': True, 'seed': 1},
    {'n_samples': 10, 'seed': 1, 'kmax_report': -1},
    {'n_samples': 10, 'seed': 1, 'time_change': 'gamma'},
])
def test_invalid_config(kwargs):
    with pytest.raises(InvalidParameter):
        McConfig(**kwargs)


def test_summary_frame():
    summary = simulate(ModelParams(1.0, 0.5, 1.0), 0.5, McConfig(500, 4, kmax_report=5))
    frame = summary.to_frame()
    assert list(frame.columns) == ['k', 'count', 'frequency', 'std_err']
    assert len(frame) == 6
    assert frame['count'].sum() + summary.overflow == 500
    assert (frame['std_err'] >= 0).all()


@pytest.mark.slow
@pytest.mark.parametrize('lam,mu,nu', [(1.0, 1.0, 0.5), (2.0, 1.0, 0.7), (1.0, 2.0, 0.5)])
def test_million_sample_fit(lam, mu, nu):
    params = ModelParams(lam, mu, nu)
    n = 1_000_000
    summary = simulate(params, 1.0, McConfig(n, 1, worker_count=8))
    assert within_sigma(summary.frequencies[0], fbd.extinction(params, 1.0), n, sigmas=3)
    fit = chi_square_test(summary, fbd.pmf_vector(params, 1.0, 200))
    assert fit.p_value >= 1e-3
