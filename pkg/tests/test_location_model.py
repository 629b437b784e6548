import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from selectcond.service.distributions import INF
from selectcond.service.errors import InconsistentDatumError
from selectcond.service.location_model import (
    Configuration,
    LocationFamily,
    conditional_cdf,
    conditional_density_constant,
    conditional_quantile,
    conditional_sf,
    decompose,
    get_family,
    is_configuration,
    location_pvalue,
    register_family,
    registered_families,
    sample_selected,
    selection_cutoff,
    selective_location_inference,
)
from selectcond.service.selective_model import (
    gaussian_truncation_model,
    selective_ci,
    selective_pvalue,
)

GAUSSIAN = get_family("gaussian")
LOGISTIC = get_family("logistic")
LAPLACE = get_family("laplace")
Y = [1.2, 0.8, 1.9, 1.4, 0.6]
SHIFTED = [v + 2.0 for v in Y]


def test_registry():
    assert {"gaussian", "laplace", "logistic"} <= set(registered_families())
    with pytest.raises(ValueError):
        get_family("cauchy-ish")


def test_register_rejects_unnormalized_density():
    bad = LocationFamily("half", lambda x: -0.5 * x * x, lambda x: -x, lambda rng, n: rng.standard_normal(n))
    with pytest.raises(ValueError):
        register_family(bad)
    assert "half" not in registered_families()


def test_gaussian_decomposition_is_mean():
    conf = decompose(Y, GAUSSIAN)
    assert conf.theta_hat == pytest.approx(np.mean(Y), abs=1e-12)
    assert np.sum(conf.a) == pytest.approx(0.0, abs=1e-12)


def test_laplace_decomposition_is_median():
    conf = decompose(Y, LAPLACE)
    assert conf.theta_hat == pytest.approx(np.median(Y), abs=1e-12)


def test_constant_sample():
    conf = decompose([2.0, 2.0, 2.0], LOGISTIC)
    assert conf.theta_hat == 2.0
    assert np.all(conf.a == 0.0)


def test_decompose_rejects_non_finite():
    with pytest.raises(ValueError):
        decompose([1.0, math.inf], GAUSSIAN)
    with pytest.raises(ValueError):
        Configuration(a=[], theta_hat=0.0)


def test_configuration_checks_score_equation():
    conf = decompose(Y, LOGISTIC)
    assert Configuration(a=conf.a, theta_hat=conf.theta_hat, family=LOGISTIC).theta_hat == conf.theta_hat
    with pytest.raises(ValueError):
        Configuration(a=conf.a + 0.3, theta_hat=conf.theta_hat, family=LOGISTIC)
    with pytest.raises(ValueError):
        Configuration(a=[0.0, 1.0, 2.5], theta_hat=0.0, family=GAUSSIAN)
    # 不给族时只做有限性检查
    assert Configuration(a=[0.0, 1.0, 2.5], theta_hat=0.0).n == 3


@given(
    y=st.lists(st.floats(-5, 5), min_size=2, max_size=8),
    shift=st.floats(-10, 10),
    name=st.sampled_from(["gaussian", "logistic"]),
)
def test_decomposition_is_translation_equivariant(y, shift, name):
    family = get_family(name)
    base = decompose(y, family)
    moved = decompose(np.asarray(y) + shift, family)
    assert moved.theta_hat == pytest.approx(base.theta_hat + shift, abs=1e-8)
    assert moved.a == pytest.approx(base.a, abs=1e-8)
    assert is_configuration(base, family)


def test_gaussian_conditional_law_is_normal():
    conf = decompose(Y, GAUSSIAN)
    se = 1.0 / math.sqrt(len(Y))
    for t in (0.5, 1.0, 1.7):
        assert conditional_cdf(t, 0.3, conf.a, GAUSSIAN) == pytest.approx(stats.norm.cdf(t, 0.3, se), abs=1e-10)
        assert conditional_sf(t, 0.3, conf.a, GAUSSIAN) == pytest.approx(stats.norm.sf(t, 0.3, se), abs=1e-10)
    assert conditional_density_constant(0.0, conf, GAUSSIAN) == pytest.approx(
        1.0 / math.exp(-0.5 * np.sum(conf.a ** 2) - len(Y) * 0.5 * math.log(2 * math.pi)) * math.sqrt(len(Y))
        / math.sqrt(2 * math.pi), rel=1e-9)


@given(q=st.floats(0.01, 0.99))
def test_conditional_quantile_round_trip(q):
    conf = decompose(Y, LOGISTIC)
    t = conditional_quantile(q, conf.a, LOGISTIC, theta=0.4)
    assert conditional_cdf(t, 0.4, conf.a, LOGISTIC) == pytest.approx(q, abs=1e-10)


def test_quantile_edges():
    a = np.array([0.1, -0.1])
    assert conditional_quantile(0.0, a, LOGISTIC) == -INF
    assert conditional_quantile(1.0, a, LOGISTIC) == INF


def test_gaussian_pvalue_and_cutoff():
    conf = decompose(Y, GAUSSIAN)
    n = len(Y)
    assert location_pvalue(conf, GAUSSIAN) == pytest.approx(stats.norm.sf(conf.theta_hat * math.sqrt(n)), abs=1e-12)
    assert selection_cutoff(conf.a, GAUSSIAN, 0.05) == pytest.approx(stats.norm.ppf(0.95) / math.sqrt(n), abs=1e-10)
    assert selection_cutoff(conf.a, GAUSSIAN, 1.0) == -INF
    with pytest.raises(ValueError):
        selection_cutoff(conf.a, GAUSSIAN, 0.0)


@given(t=st.floats(-3, 3))
def test_pvalue_below_alpha_iff_beyond_cutoff(t):
    conf = decompose(Y, LOGISTIC)
    shifted = Configuration(a=conf.a, theta_hat=t)
    cutoff = selection_cutoff(conf.a, LOGISTIC, 0.1)
    if abs(t - cutoff) > 1e-8:
        assert (location_pvalue(shifted, LOGISTIC) <= 0.1) == (t >= cutoff)


def test_gaussian_reduces_to_truncated_normal():
    conf = decompose(Y, GAUSSIAN)
    alpha, level = 0.05, 0.9
    result = selective_location_inference(conf, GAUSSIAN, alpha, level, null_value=0.2)

    cutoff = selection_cutoff(conf.a, GAUSSIAN, alpha)
    closed = gaussian_truncation_model([(cutoff, INF)], sigma=1.0, n=len(Y))
    lo, hi = selective_ci(closed, Y, level)
    assert result.ci[0] == pytest.approx(lo, abs=1e-6)
    assert result.ci[1] == pytest.approx(hi, abs=1e-6)
    assert result.pvalue == pytest.approx(selective_pvalue(closed, Y, 0.2), abs=1e-6)
    assert result.model_kind == "location-gaussian"
    assert result.diagnostics["selection_cutoff"] == pytest.approx(cutoff)


def test_logistic_inference():
    conf = decompose(SHIFTED, LOGISTIC)
    result = selective_location_inference(conf, LOGISTIC, 0.1, 0.9)
    assert result.ci[0] <= result.estimate <= result.ci[1]
    assert result.estimate < conf.theta_hat
    assert 0.0 <= result.pvalue <= 1.0


def test_unselected_configuration_rejected():
    conf = decompose([-0.5, 0.1, -0.2], LOGISTIC)
    with pytest.raises(InconsistentDatumError):
        selective_location_inference(conf, LOGISTIC, 0.05, 0.9)


def test_sampler_returns_selected(rng):
    for _ in range(5):
        conf = sample_selected(0.0, 4, LOGISTIC, 0.2, rng)
        assert location_pvalue(conf, LOGISTIC) <= 0.2
        assert conf.n == 4
