import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from selectcond.service.distributions import (
    INF,
    TruncatedGaussian,
    log_standard_mass,
    merge_intervals,
    std_normal_cdf,
    std_normal_logsf,
    truncated_cdf,
    truncated_logpdf,
    truncated_quantile,
    truncated_sample,
    truncated_sf,
)
from selectcond.service.errors import EmptyTruncationError


def test_merge_intervals_sorts_and_joins():
    merged = merge_intervals([(3, 4), (0, 1), (0.5, 2), (2, 2.5), (5, 5)])
    assert merged == [(0.0, 2.5), (3.0, 4.0)]


def test_merge_intervals_rejects_nan():
    with pytest.raises(ValueError):
        merge_intervals([(math.nan, 1.0)])


def test_empty_truncation():
    with pytest.raises(EmptyTruncationError):
        TruncatedGaussian(mu=0.0, sigma=1.0, truncation=((1.0, 1.0),))
    with pytest.raises(EmptyTruncationError):
        TruncatedGaussian(mu=0.0, sigma=1.0, truncation=())


def test_invalid_scale():
    with pytest.raises(ValueError):
        TruncatedGaussian(mu=0.0, sigma=0.0)


def test_deep_tail_mass_is_finite():
    # Φ(-40) 下溢为 0，log 形式仍然有限
    assert math.isfinite(std_normal_logsf(40.0))
    assert log_standard_mass(40.0, 41.0) == pytest.approx(float(stats.norm.logsf(40.0)), rel=1e-6)


def test_untruncated_matches_normal():
    tg = TruncatedGaussian(mu=1.0, sigma=2.0)
    for x in (-3.0, 0.0, 1.0, 4.5):
        assert truncated_cdf(x, tg) == pytest.approx(stats.norm.cdf(x, 1.0, 2.0), abs=1e-14)
        assert truncated_logpdf(x, tg) == pytest.approx(stats.norm.logpdf(x, 1.0, 2.0), abs=1e-12)


def test_cdf_matches_scipy_truncnorm():
    tg = TruncatedGaussian(mu=0.3, sigma=1.5, truncation=((-1.0, 2.0),))
    ref = stats.truncnorm((-1.0 - 0.3) / 1.5, (2.0 - 0.3) / 1.5, loc=0.3, scale=1.5)
    for x in np.linspace(-1.0, 2.0, 7):
        assert truncated_cdf(x, tg) == pytest.approx(ref.cdf(x), abs=1e-12)


def test_outside_support():
    tg = TruncatedGaussian(mu=0.0, sigma=1.0, truncation=((1.0, 2.0),))
    assert truncated_cdf(0.5, tg) == 0.0
    assert truncated_cdf(2.5, tg) == 1.0
    assert truncated_logpdf(3.0, tg) == -INF


def test_union_cdf_is_flat_in_gap():
    tg = TruncatedGaussian(mu=0.0, sigma=1.0, truncation=((-INF, -1.0), (1.0, INF)))
    assert truncated_cdf(-1.0, tg) == pytest.approx(0.5, abs=1e-14)
    assert truncated_cdf(0.0, tg) == pytest.approx(0.5, abs=1e-14)
    assert truncated_cdf(0.999, tg) == pytest.approx(0.5, abs=1e-14)


def test_upper_tail_precision_at_30_sigma():
    tg = TruncatedGaussian(mu=0.0, sigma=1.0, truncation=((30.0, INF),))
    # 截断到 [30, ∞) 后近似为速率 30 的指数分布
    assert truncated_sf(30.1, tg) == pytest.approx(math.exp(-30.0 * 0.1 - 0.5 * 0.01), rel=1e-2)
    assert truncated_sf(30.1, tg) == pytest.approx(stats.norm.sf(30.1) / stats.norm.sf(30.0), rel=1e-8)
    assert truncated_sf(31.5, tg) > 0.0


@given(
    mu=st.floats(-5, 5),
    sigma=st.floats(0.1, 5),
    lo=st.floats(-30, 30),
    width=st.floats(0.01, 20),
    q=st.floats(0.001, 0.999),
)
def test_quantile_cdf_round_trip(mu, sigma, lo, width, q):
    tg = TruncatedGaussian(mu=mu, sigma=sigma, truncation=((mu + lo * sigma, mu + (lo + width) * sigma),))
    x = truncated_quantile(q, tg)
    if q <= 0.5:
        assert truncated_cdf(x, tg) == pytest.approx(q, abs=1e-10)
    else:
        assert truncated_sf(x, tg) == pytest.approx(1.0 - q, abs=1e-10)


@given(q=st.floats(0.01, 0.99))
def test_round_trip_at_30_sigma(q):
    for truncation in (((30.0, INF),), ((-INF, -30.0),)):
        tg = TruncatedGaussian(mu=0.0, sigma=1.0, truncation=truncation)
        x = truncated_quantile(q, tg)
        assert truncated_cdf(x, tg) == pytest.approx(q, abs=1e-10)


@given(x=st.floats(-10, 10), y=st.floats(-10, 10))
def test_cdf_monotone(x, y):
    tg = TruncatedGaussian(mu=0.5, sigma=1.0, truncation=((-2.0, 0.0), (1.0, 4.0)))
    a, b = sorted((x, y))
    assert truncated_cdf(a, tg) <= truncated_cdf(b, tg) + 1e-15


def test_quantile_rejects_bounds():
    tg = TruncatedGaussian(mu=0.0, sigma=1.0)
    for q in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            truncated_quantile(q, tg)


def test_sample_within_support(rng):
    tg = TruncatedGaussian(mu=0.0, sigma=1.0, truncation=((-3.0, -1.0), (2.0, 2.5)))
    draws = truncated_sample(tg, rng, size=5000)
    assert all(tg.contains(x) for x in draws)


def test_sample_matches_cdf(rng):
    tg = TruncatedGaussian(mu=1.0, sigma=0.5, truncation=((1.2, 3.0),))
    draws = truncated_sample(tg, rng, size=20000)
    result = stats.kstest(draws, lambda x: np.array([truncated_cdf(v, tg) for v in np.atleast_1d(x)]))
    assert result.pvalue > 1e-3


def test_sample_deep_tail_uses_rejection(rng):
    tg = TruncatedGaussian(mu=0.0, sigma=1.0, truncation=((12.0, INF),))
    draws = truncated_sample(tg, rng, size=2000)
    assert np.all(draws >= 12.0)
    # 超出量近似速率 12 的指数分布
    assert np.mean(draws - 12.0) == pytest.approx(1.0 / 12.0, rel=0.1)


def test_scalar_sample(rng):
    tg = TruncatedGaussian(mu=0.0, sigma=1.0, truncation=((0.0, INF),))
    x = truncated_sample(tg, rng)
    assert isinstance(x, float) and x >= 0.0


@pytest.mark.parametrize("x", [-40.0, -8.0, -1.0, 0.0, 2.5, 9.0])
def test_std_normal_cdf_matches_scipy(x):
    assert std_normal_cdf(x) == pytest.approx(stats.norm.cdf(x), rel=1e-13, abs=1e-300)
