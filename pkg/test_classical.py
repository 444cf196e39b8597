import math

import numpy as np
import pytest

from fracbd.classical import (
    ModelParams,
    Regime,
    classical_extinction,
    classical_mean,
    classical_pmf,
    classical_pmf_table,
    classical_tail,
    classical_variance,
    classify,
    gillespie_sample,
    riccati_residual,
    yule_pmf,
)
from fracbd.errors import InvalidParameter


def printed_extinction(lam, mu, t):
    x = math.exp(-(lam - mu) * t)
    return (mu - mu * x) / (lam - mu * x)


def printed_pmf(lam, mu, t, k):
    x = math.exp(-(lam - mu) * t)
    return (lam - mu) ** 2 * x * (lam * (1 - x)) ** (k - 1) / (lam - mu * x) ** (k + 1)


@pytest.mark.parametrize('lam,mu,regime', [
    (2.0, 1.0, Regime.BIRTH_DOMINANT),
    (1.0, 2.0, Regime.DEATH_DOMINANT),
    (1.0, 1.0 + 1e-15, Regime.BALANCED),
    (3.0, 3.0, Regime.BALANCED),
])
def test_classify(lam, mu, regime):
    tag = classify(ModelParams(lam, mu))
    assert tag.regime is regime
    assert tag.classification_tol == 1e-12


@pytest.mark.parametrize('lam,mu,nu', [(0.0, 1.0, 1.0), (-1.0, 1.0, 1.0), (1.0, -0.1, 1.0), (1.0, 1.0, 0.0), (1.0, 1.0, 1.5)])
def test_invalid_parameters(lam, mu, nu):
    with pytest.raises(InvalidParameter):
        ModelParams(lam, mu, nu)


def test_invalid_time_and_state():
    params = ModelParams(1.0, 0.5)
    with pytest.raises(InvalidParameter):
        classical_pmf(params, -1.0, 1)
    with pytest.raises(InvalidParameter):
        classical_pmf(params, 1.0, -1)


def test_extinction_example():
    value = classical_extinction(ModelParams(1.0, 0.5), 1.0)
    assert value == pytest.approx(printed_extinction(1.0, 0.5, 1.0), abs=1e-14)
    assert value == pytest.approx(0.28237, abs=1e-5)


def test_pmf_example():
    value = classical_pmf(ModelParams(1.0, 0.5), 1.0, 2)
    assert value == pytest.approx(printed_pmf(1.0, 0.5, 1.0, 2), abs=1e-14)
    assert value == pytest.approx(0.17640, abs=1e-5)


@pytest.mark.parametrize('lam,mu', [(2.0, 1.0), (1.0, 2.0), (0.3, 2.5)])
@pytest.mark.parametrize('t', [0.1, 1.0, 5.0])
@pytest.mark.parametrize('k', [1, 2, 7])
def test_geometric_core_matches_printed_forms(lam, mu, t, k):
    params = ModelParams(lam, mu)
    assert classical_pmf(params, t, k) == pytest.approx(printed_pmf(lam, mu, t, k), rel=1e-12, abs=1e-15)
    assert classical_extinction(params, t) == pytest.approx(printed_extinction(lam, mu, t), rel=1e-12, abs=1e-15)


def test_balanced_forms():
    params = ModelParams(1.0, 1.0)
    assert classical_extinction(params, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert classical_pmf(params, 1.0, 1) == pytest.approx(0.25, abs=1e-15)
    assert classical_pmf(params, 2.0, 3) == pytest.approx(2.0 ** 2 / 3.0 ** 4, abs=1e-15)


def test_near_balanced_is_continuous():
    near = ModelParams(1.0, 1.0 - 1e-9)
    exact = ModelParams(1.0, 1.0)
    for k in range(5):
        assert classical_pmf(near, 1.0, k) == pytest.approx(classical_pmf(exact, 1.0, k), abs=1e-8)


def test_start_state():
    params = ModelParams(2.0, 1.0)
    assert classical_pmf(params, 0.0, 1) == 1.0
    assert classical_pmf(params, 0.0, 0) == 0.0
    assert classical_pmf(params, 0.0, 3) == 0.0


def test_far_death_dominant_stays_finite():
    params = ModelParams(1.0, 3.0)
    assert classical_extinction(params, 1000.0) == pytest.approx(1.0, abs=1e-12)
    assert classical_pmf(params, 1000.0, 2) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize('lam,mu', [(1.0, 0.5), (1.0, 2.0), (1.0, 1.0)])
def test_table_rows_sum_to_one(lam, mu):
    s = np.array([0.0, 0.3, 1.0, 4.0])
    table = classical_pmf_table(ModelParams(lam, mu), s, 25)
    assert table.shape == (4, 27)
    np.testing.assert_allclose(table.sum(axis=1), 1.0, atol=1e-13)
    for row, time in zip(table, s):
        assert row[-1] == pytest.approx(classical_tail(ModelParams(lam, mu), time, 25), abs=1e-15)


def test_normalization_deficit():
    params = ModelParams(1.0, 0.5)
    total = classical_extinction(params, 1.0) + sum(classical_pmf(params, 1.0, k) for k in range(1, 201))
    assert 1 - total < 1e-12


def test_mean_and_variance():
    params = ModelParams(2.0, 1.0)
    assert classical_mean(params, 1.0) == pytest.approx(math.e, rel=1e-14)
    assert classical_variance(params, 1.0) == pytest.approx(3 * (math.e ** 2 - math.e), rel=1e-12)
    assert classical_variance(ModelParams(1.0, 1.0), 2.0) == pytest.approx(4.0, rel=1e-14)


@pytest.mark.parametrize('lam,mu', [(2.0, 1.0), (1.0, 2.0), (1.0, 1.0)])
def test_moments_match_weighted_sums(lam, mu):
    params = ModelParams(lam, mu)
    table = classical_pmf_table(params, 1.0, 400)[:-1]
    k = np.arange(401)
    mean = float(np.dot(k, table))
    second = float(np.dot(k * k, table))
    assert mean == pytest.approx(classical_mean(params, 1.0), abs=1e-8)
    assert second - mean ** 2 == pytest.approx(classical_variance(params, 1.0), abs=1e-8)


@pytest.mark.parametrize('lam,mu', [(1.0, 1.0), (2.0, 1.0), (1.0, 2.0)])
def test_riccati_identity(lam, mu):
    assert abs(riccati_residual(ModelParams(lam, mu), 1.0)) < 1e-6


def test_yule_pmf():
    assert float(yule_pmf(0, 2, 1.0, 1.0)) == pytest.approx(math.exp(-1) * (1 - math.exp(-1)), rel=1e-14)
    assert float(yule_pmf(0, 1, 1.0, 0.0)) == 1.0


def test_gillespie_against_closed_form():
    params = ModelParams(1.0, 0.5)
    rng = np.random.default_rng(42)
    n = 20000
    draws = np.array([gillespie_sample(params, 1.0, rng) for _ in range(n)])
    p0 = classical_extinction(params, 1.0)
    assert abs(np.mean(draws == 0) - p0) < 4 * math.sqrt(p0 * (1 - p0) / n)
    sd = math.sqrt(classical_variance(params, 1.0))
    assert abs(draws.mean() - classical_mean(params, 1.0)) < 4 * sd / math.sqrt(n)


@pytest.mark.parametrize('lam,mu,t', [(1.0, 1.0, 1.0), (2.0, 1.0, 0.5), (1.0, 2.0, 0.5)])
def test_gillespie_bins_match_closed_form(lam, mu, t):
    params = ModelParams(lam, mu)
    rng = np.random.default_rng(8)
    n = 20000
    draws = np.array([gillespie_sample(params, t, rng) for _ in range(n)])
    for k in range(6):
        p = classical_pmf(params, t, k)
        if n * p < 20:
            continue
        assert abs(np.mean(draws == k) - p) < 4 * math.sqrt(p * (1 - p) / n), k
