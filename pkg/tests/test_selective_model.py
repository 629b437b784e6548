import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special, stats

from selectcond.service.distributions import INF
from selectcond.service.errors import DivergentMLEError, InconsistentDatumError, UnboundedIntervalError
from selectcond.service.selective_model import (
    GRADIENT_TOL,
    ParametricFamily,
    SelectionFunction,
    SelectiveModel,
    always_select,
    equal_tailed_interval,
    gaussian_mean_family,
    gaussian_truncation_model,
    likelihood_ratio_interval,
    log_integrate,
    maximize_loglik,
    median_unbiased_estimate,
    monte_carlo,
    normalizer_estimate,
    quadrature,
    randomized_selection_prob,
    selection_probability,
    selective_cdf,
    selective_ci,
    selective_log_density,
    selective_mle,
    selective_pvalue,
    solve_decreasing,
    threshold_selection,
)


def _threshold_model(threshold=1.0, noise_scale=None, normalizer=None):
    family = gaussian_mean_family()
    return SelectiveModel(
        family=family,
        selection=threshold_selection(threshold, noise_scale=noise_scale),
        normalizer=normalizer or quadrature(),
    )


def test_log_integrate_gaussian_kernel():
    value = log_integrate(lambda t: -0.5 * t * t, -40.0, 40.0)
    assert value == pytest.approx(0.5 * math.log(2 * math.pi), abs=1e-10)


def test_log_integrate_narrow_peak():
    # 宽窗口中的窄峰
    value = log_integrate(lambda t: -0.5 * ((t - 3.0) / 1e-3) ** 2, -100.0, 100.0)
    assert value == pytest.approx(math.log(1e-3 * math.sqrt(2 * math.pi)), abs=1e-8)


def test_log_integrate_empty():
    assert log_integrate(lambda t: 0.0, 1.0, 1.0) == -INF


def test_always_select_normalizer_is_one():
    model = SelectiveModel(family=gaussian_mean_family(), selection=always_select(), normalizer=quadrature())
    assert selection_probability(model, [0.3]) == pytest.approx(1.0, abs=1e-10)


def test_quadrature_matches_closed_form():
    quad = _threshold_model(1.0)
    closed = gaussian_truncation_model([(1.0, INF)])
    for theta in (-2.0, 0.0, 1.5):
        assert normalizer_estimate(quad, [theta]).log_value == pytest.approx(
            normalizer_estimate(closed, [theta]).log_value, abs=1e-9)
        assert selective_cdf(quad, [1.7], [theta]) == pytest.approx(selective_cdf(closed, [1.7], [theta]), abs=1e-9)


def test_randomized_normalizer_closed_form():
    # T ~ N(θ, 1)，P(T + W > t) = Φ((θ - t)/sqrt(1 + γ²))
    model = _threshold_model(1.0, noise_scale=0.5)
    theta = 0.2
    expected = special.ndtr((theta - 1.0) / math.sqrt(1.25))
    assert selection_probability(model, [theta]) == pytest.approx(expected, rel=1e-9)


def test_monte_carlo_normalizer_reports_error():
    model = _threshold_model(0.0, normalizer=monte_carlo(n_draws=20000, seed=3))
    estimate = normalizer_estimate(model, [0.0])
    assert estimate.strategy == "monte-carlo"
    assert estimate.std_error > 0
    assert estimate.value == pytest.approx(0.5, abs=4 * estimate.std_error)


def test_log_density_rejects_unselected_datum():
    model = gaussian_truncation_model([(1.0, INF)])
    with pytest.raises(InconsistentDatumError):
        selective_log_density(model, [0.5], [0.0])


def test_selective_density_integrates_to_one():
    model = gaussian_truncation_model([(1.0, INF)])
    value = log_integrate(lambda t: selective_log_density(model, [t], [0.3]) if t >= 1.0 else -INF, 1.0, 40.0)
    assert value == pytest.approx(0.0, abs=1e-9)


def test_mle_matches_truncated_normal_score():
    # 截断高斯 MLE 满足 y = θ + φ(c - θ)/Φ(θ - c)
    model = gaussian_truncation_model([(1.0, INF)])
    theta = float(selective_mle(model, [2.0])[0])
    mills = math.exp(stats.norm.logpdf(1.0 - theta) - stats.norm.logcdf(theta - 1.0))
    assert theta + mills == pytest.approx(2.0, abs=1e-6)


def test_mle_diverges_at_boundary():
    model = gaussian_truncation_model([(1.0, INF)], bound=10.0)
    with pytest.raises(DivergentMLEError) as info:
        selective_mle(model, [1.0 + 1e-9])
    assert info.value.direction == [-1.0]


def test_maximize_loglik_quadratic():
    fit = maximize_loglik(lambda x: -float(np.sum((x - np.array([1.0, -2.0])) ** 2)), [0.0, 0.0],
                          [(-10, 10), (-10, 10)])
    assert fit.theta == pytest.approx([1.0, -2.0], abs=1e-6)
    assert fit.converged
    assert fit.gradient_norm <= GRADIENT_TOL


def test_maximize_loglik_flags_rough_surface(caplog):
    # 高频扰动使数值梯度无法降到阈值以下
    def rough(x):
        return -float((x[0] - 0.3) ** 2 + x[1] ** 2) + 1e-3 * math.sin(1e6 * x[0])

    fit = maximize_loglik(rough, [0.0, 0.0], [(-10, 10), (-10, 10)])
    assert not fit.converged
    assert fit.gradient_norm > GRADIENT_TOL
    assert "未收敛" in caplog.text


def test_solve_decreasing_unbounded():
    with pytest.raises(UnboundedIntervalError):
        solve_decreasing(lambda t: 0.5, 0.9, 0.0, 10.0, "lower", strict=True)
    assert solve_decreasing(lambda t: 0.5, 0.9, 0.0, 10.0, "lower", strict=False) == -INF


def test_equal_tailed_interval_untruncated_is_z_interval():
    lo, hi = equal_tailed_interval(lambda t: stats.norm.cdf(1.3 - t), 0.9, center=1.3)
    z = stats.norm.ppf(0.95)
    assert lo == pytest.approx(1.3 - z, abs=1e-9)
    assert hi == pytest.approx(1.3 + z, abs=1e-9)


def test_equal_tailed_interval_rejects_level():
    with pytest.raises(ValueError):
        equal_tailed_interval(lambda t: 0.5, 1.0, center=0.0)


@given(y=st.floats(1.05, 6.0), level=st.sampled_from([0.8, 0.9, 0.95]))
def test_ci_endpoints_hit_tail_probabilities(y, level):
    model = gaussian_truncation_model([(1.0, INF)])
    lo, hi = selective_ci(model, [y], level)
    alpha = 1.0 - level
    if math.isfinite(lo):
        assert selective_cdf(model, [y], [lo]) == pytest.approx(1.0 - alpha / 2, abs=1e-8)
    assert selective_cdf(model, [y], [hi]) == pytest.approx(alpha / 2, abs=1e-8)
    assert lo < hi


@given(y=st.floats(1.05, 5.0))
def test_pvalue_decreases_with_observation(y):
    model = gaussian_truncation_model([(1.0, INF)])
    assert selective_pvalue(model, [y], 0.0) >= selective_pvalue(model, [y + 0.5], 0.0) - 1e-15


def test_pvalue_alternatives():
    model = gaussian_truncation_model([(1.0, INF)])
    greater = selective_pvalue(model, [2.0], 0.0, "greater")
    less = selective_pvalue(model, [2.0], 0.0, "less")
    assert greater + less == pytest.approx(1.0, abs=1e-12)
    assert selective_pvalue(model, [2.0], 0.0, "two-sided") == pytest.approx(2 * min(greater, less))
    with pytest.raises(ValueError):
        selective_pvalue(model, [2.0], 0.0, "sideways")


def test_median_unbiased_estimate():
    model = gaussian_truncation_model([(1.0, INF)])
    estimate = median_unbiased_estimate(model, [2.0])
    assert selective_cdf(model, [2.0], [estimate]) == pytest.approx(0.5, abs=1e-9)


def test_likelihood_ratio_interval_gaussian():
    lo, hi = likelihood_ratio_interval(lambda t: -0.5 * (t - 1.0) ** 2, 1.0, 0.95)
    assert lo == pytest.approx(1.0 - 1.959963984540054, abs=1e-8)
    assert hi == pytest.approx(1.0 + 1.959963984540054, abs=1e-8)


def test_selection_function_checks_range():
    sel = threshold_selection(0.0)
    assert sel(np.array([0.5])) == 1.0
    assert sel(np.array([-0.5])) == 0.0
    assert threshold_selection(1.0, two_sided=True)(np.array([-2.0])) == 1.0


def test_randomized_selection_prob():
    assert randomized_selection_prob(1.0, 1.0, 0.5) == pytest.approx(0.5)
    assert randomized_selection_prob(2.0, 1.0, 0.5) == pytest.approx(stats.norm.cdf(2.0), abs=1e-15)
    assert randomized_selection_prob(-30.0, 0.0, 1.0) > 0.0
    with pytest.raises(ValueError):
        randomized_selection_prob(0.0, 0.0, 0.0)


def _shifted_pair_model():
    """T | a ~ N(θ + a/2, 1)，a ∈ {0, 1} 等概率；选择概率 Φ(t - 1 + a)"""
    def log_density(y, theta):
        return float(stats.norm.logpdf(y[0] - theta[0] - 0.5 * y[1]) + math.log(0.5))

    def sampler(theta, rng):
        a = float(rng.integers(0, 2))
        return np.array([theta[0] + 0.5 * a + rng.standard_normal(), a])

    family = ParametricFamily(
        name="shifted-pair",
        log_density=log_density,
        sampler=sampler,
        param_bounds=((-50.0, 50.0),),
        reduce=lambda y: (float(y[0]), np.array([y[1]])),
        statistic_log_density=lambda t, theta, a: float(stats.norm.logpdf(t - theta[0] - 0.5 * a[0])),
        statistic_window=lambda theta, a: (theta[0] + 0.5 * a[0] - 15.0, theta[0] + 0.5 * a[0] + 15.0),
    )

    def reduced(t, a):
        return float(special.ndtr(t - 1.0 + a[0]))

    selection = SelectionFunction(
        kind="randomized",
        evaluate=lambda y: reduced(float(y[0]), np.array([y[1]])),
        reduced=reduced,
    )
    return SelectiveModel(family=family, selection=selection, normalizer=quadrature(),
                          conditioning="selection-and-ancillary")


def test_ancillary_conditioning_matches_simulation(rng):
    model = _shifted_pair_model()
    theta, a = 0.3, np.array([1.0])
    n = 200_000
    anc = rng.integers(0, 2, size=n).astype(float)
    t = theta + 0.5 * anc + rng.standard_normal(n)
    kept = rng.uniform(size=n) < special.ndtr(t - 1.0 + anc)

    on_a = anc == 1.0
    assert selection_probability(model, [theta], a) == pytest.approx(kept[on_a].mean(), abs=0.005)
    t_sel = t[kept & on_a]
    assert selective_cdf(model, [1.2, 1.0], [theta]) == pytest.approx(np.mean(t_sel <= 1.2), abs=0.01)


def test_ancillary_conditioned_density_is_normalized():
    model = _shifted_pair_model()
    a = np.array([1.0])
    log_phi = normalizer_estimate(model, [0.3], a).log_value

    def log_f(t):
        return float(stats.norm.logpdf(t - 0.8)) + math.log(special.ndtr(t)) - log_phi

    assert log_integrate(log_f, -20.0, 20.0) == pytest.approx(0.0, abs=1e-9)
    # 联合密度含 a 的边际 1/2
    assert selective_log_density(model, [1.2, 1.0], [0.3]) == pytest.approx(log_f(1.2) + math.log(0.5), abs=1e-9)


def test_ancillary_conditioning_requires_observed_value():
    with pytest.raises(ValueError):
        normalizer_estimate(_shifted_pair_model(), [0.0])


@pytest.mark.parametrize("delta", [-2.5, 0.7, 3.7])
def test_mle_is_location_equivariant(delta):
    base = float(selective_mle(gaussian_truncation_model([(1.0, INF)]), [2.0])[0])
    shifted = float(selective_mle(gaussian_truncation_model([(1.0 + delta, INF)]), [2.0 + delta])[0])
    assert shifted == pytest.approx(base + delta, abs=1e-6)


def test_mle_without_selection_is_sample_mean():
    y = [0.3, 1.1, -0.4, 2.0]
    model = SelectiveModel(family=gaussian_mean_family(n=4), selection=always_select(), normalizer=quadrature())
    assert float(selective_mle(model, y)[0]) == pytest.approx(np.mean(y), abs=1e-6)


def test_two_sided_mle_is_sign_symmetric():
    model = SelectiveModel(family=gaussian_mean_family(), selection=threshold_selection(1.0, two_sided=True),
                           normalizer=quadrature())
    up = float(selective_mle(model, [1.8])[0])
    down = float(selective_mle(model, [-1.8])[0])
    assert down == pytest.approx(-up, abs=1e-6)
    assert up < 1.8


def test_null_pvalues_are_uniform(rng):
    theta, cut = 0.5, 1.0
    y = stats.truncnorm.rvs(cut - theta, INF, loc=theta, size=3000, random_state=rng)
    model = gaussian_truncation_model([(cut, INF)])
    pvalues = [selective_pvalue(model, [v], theta) for v in y]
    assert stats.kstest(pvalues, "uniform").statistic < 0.04
