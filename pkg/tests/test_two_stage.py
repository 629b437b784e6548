import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from pydantic import ValidationError
from scipy import integrate, special, stats

from selectcond.schema.two_stage import SampleSizePrior, TwoStageData
from selectcond.service.distributions import TruncatedGaussian, truncated_cdf
from selectcond.service.two_stage import (
    compare_two_stage_inference,
    conditional_inference,
    conditional_loglik,
    file_drawer_inference,
    file_drawer_loglik,
    naive_inference,
    randomized_acceptance,
    randomized_file_drawer_inference,
    sample_conditional,
    sample_randomized,
    sample_selected_stage1,
    sample_size_pmf_given_selection,
    sample_unconditional,
    stage_sum_cdf,
    stage_sum_sf,
    unconditional_inference,
    unconditional_loglik,
    unconditional_sum_cdf,
    unconditional_sum_sf,
)

PRIOR = SampleSizePrior.uniform([5, 10, 20])


def _data(n2=10):
    stage1 = [1.2, 0.8, 1.5, 0.9, 1.1]
    stage2 = list(np.linspace(-0.5, 1.5, n2))
    return TwoStageData(stage1=stage1, stage2=stage2)


@pytest.mark.parametrize("prior", [PRIOR, SampleSizePrior(support=[3, 8, 40], probs=[0.2, 0.5, 0.3])])
def test_pmf_at_zero_equals_prior(prior):
    pmf = sample_size_pmf_given_selection(prior, 0.0, 1.96)
    assert np.max(np.abs(pmf - np.asarray(prior.probs))) <= 1e-14


def test_pmf_favors_large_samples_when_theta_positive():
    pmf = sample_size_pmf_given_selection(PRIOR, 0.5)
    assert pmf[0] < pmf[1] < pmf[2]
    assert pmf.sum() == pytest.approx(1.0, abs=1e-14)


def test_prior_validation():
    with pytest.raises(ValidationError):
        SampleSizePrior(support=[5, 10], probs=[0.5, 0.6])
    with pytest.raises(ValidationError):
        SampleSizePrior(support=[5, 5], probs=[0.5, 0.5])


def test_unselected_data_rejected():
    with pytest.raises(ValidationError):
        TwoStageData(stage1=[0.1, 0.2, 0.0], stage2=[1.0])


def test_likelihoods_differ_by_selection_terms():
    data = _data()
    theta = 0.4
    diff = unconditional_loglik(data, PRIOR, theta) - conditional_loglik(data, theta)
    expected = (math.log(1 / 3) + special.log_ndtr(theta * math.sqrt(5) - 1.96)
                - special.logsumexp([math.log(1 / 3) + special.log_ndtr(theta * math.sqrt(n) - 1.96)
                                     for n in (5, 10, 20)]))
    assert diff == pytest.approx(expected, abs=1e-12)


def test_unconditional_loglik_outside_support():
    data = TwoStageData(stage1=[2.0, 2.0, 2.0], stage2=[])
    with pytest.raises(ValueError):
        unconditional_loglik(data, PRIOR, 0.0)


def test_stage_sum_cdf_without_second_stage():
    tg = TruncatedGaussian(mu=5 * 0.3, sigma=math.sqrt(5), truncation=((1.96 * math.sqrt(5), math.inf),))
    assert stage_sum_cdf(6.0, 0.3, 5, 0) == pytest.approx(truncated_cdf(6.0, tg), abs=1e-15)


def test_stage_sum_cdf_matches_convolution():
    theta, n1, n2, z, s = 0.2, 5, 10, 1.96, 7.0
    lo = z * math.sqrt(n1)
    tn = stats.truncnorm((lo - n1 * theta) / math.sqrt(n1), np.inf, loc=n1 * theta, scale=math.sqrt(n1))
    expected, _ = integrate.quad(lambda u: tn.pdf(u) * stats.norm.cdf((s - u - n2 * theta) / math.sqrt(n2)),
                                 lo, np.inf)
    assert stage_sum_cdf(s, theta, n1, n2, z) == pytest.approx(expected, abs=1e-9)


@given(s=st.floats(-5, 40), theta=st.floats(-1, 2))
def test_stage_sum_tails_complement(s, theta):
    assert stage_sum_cdf(s, theta, 5, 10) + stage_sum_sf(s, theta, 5, 10) == pytest.approx(1.0, abs=1e-10)


@given(s=st.floats(0, 30))
def test_stage_sum_cdf_decreasing_in_theta(s):
    assert stage_sum_cdf(s, 0.0, 5, 10) >= stage_sum_cdf(s, 0.5, 5, 10) - 1e-10


def test_unconditional_sum_mixture():
    pmf = sample_size_pmf_given_selection(PRIOR, 0.3)
    expected = sum(w * stage_sum_cdf(9.0, 0.3, n, 10) for n, w in zip(PRIOR.support, pmf))
    assert unconditional_sum_cdf(9.0, 0.3, 10, PRIOR) == pytest.approx(expected, abs=1e-14)
    assert unconditional_sum_cdf(9.0, 0.3, 10, PRIOR) + unconditional_sum_sf(9.0, 0.3, 10, PRIOR) == \
        pytest.approx(1.0, abs=1e-10)


def test_conditional_inference():
    result = conditional_inference(_data(), 0.9)
    assert result.model_kind == "conditional"
    assert result.ci[0] <= result.estimate <= result.ci[1]
    assert result.diagnostics["n1"] == 5
    assert 0.0 <= result.pvalue <= 1.0


def test_unconditional_inference():
    result = unconditional_inference(_data(), PRIOR, 0.9)
    assert result.model_kind == "unconditional"
    assert result.ci[0] <= result.estimate <= result.ci[1]


def test_compare_reports_differences():
    pair = compare_two_stage_inference(_data(), PRIOR, 0.9)
    assert pair.first.model_kind == "unconditional"
    assert pair.second.model_kind == "conditional"
    assert pair.estimate_delta == pytest.approx(pair.first.estimate - pair.second.estimate)
    assert pair.length_delta == pytest.approx(pair.first.length - pair.second.length)


def test_point_mass_prior_matches_conditional():
    data = _data()
    pair = compare_two_stage_inference(data, SampleSizePrior.point_mass(5), 0.9)
    assert pair.first.ci == pytest.approx(pair.second.ci, abs=1e-8)
    assert pair.first.estimate == pytest.approx(pair.second.estimate, abs=1e-6)


def test_file_drawer_deterministic_is_conditional():
    data = _data()
    drawer = file_drawer_inference(data, 0.9)
    conditional = conditional_inference(data, 0.9)
    assert drawer.model_kind == "file-drawer"
    assert drawer.ci == conditional.ci
    assert drawer.estimate == conditional.estimate


def test_file_drawer_shrinks_toward_zero():
    # 只看到通过检验的研究时，选择性估计低于朴素均值
    data = TwoStageData(stage1=[1.0, 1.0, 1.0, 1.0, 1.0], stage2=[])
    assert file_drawer_inference(data, 0.9).estimate < naive_inference(data, 0.9).estimate


def test_randomized_loglik_normalizer():
    data = TwoStageData(stage1=[0.2, -0.1, 0.4, 0.3, 0.1], stage2=[0.5, 0.0], selection="randomized")
    gamma = 1.0
    cut = 1.96 * math.sqrt(5)
    d = file_drawer_loglik(data, 0.5, gamma) - file_drawer_loglik(data, 0.0, gamma)
    gauss = -0.5 * np.sum((data.values - 0.5) ** 2) + 0.5 * np.sum(data.values ** 2)
    expected = gauss - special.log_ndtr((2.5 - cut) / math.sqrt(6.0)) + special.log_ndtr(-cut / math.sqrt(6.0))
    assert d == pytest.approx(expected, abs=1e-12)


def test_randomized_inference():
    data = TwoStageData(stage1=[0.9, 1.1, 0.7, 1.3, 0.8], stage2=[0.5, 1.0, 0.2], selection="randomized")
    result = randomized_file_drawer_inference(data, 1.0, 0.9)
    assert result.model_kind == "file-drawer-randomized"
    assert result.ci[0] <= result.estimate <= result.ci[1]
    assert result.diagnostics["randomization_scale"] == 1.0
    assert file_drawer_inference(data, 0.9, randomization_scale=1.0).ci == result.ci


def test_randomized_scale_must_be_positive():
    data = TwoStageData(stage1=[1.0, 1.0], stage2=[], selection="randomized")
    with pytest.raises(ValueError):
        file_drawer_loglik(data, 0.0, 0.0)


def test_naive_interval():
    data = _data()
    result = naive_inference(data, 0.95)
    half = 1.959963984540054 / math.sqrt(data.n)
    assert result.ci == pytest.approx((result.estimate - half, result.estimate + half))


def test_stage1_sampler_law(rng):
    sums = [sum(sample_selected_stage1(0.2, 5, 1.96, rng)) for _ in range(3000)]
    tg = TruncatedGaussian(mu=1.0, sigma=math.sqrt(5), truncation=((1.96 * math.sqrt(5), math.inf),))
    cdf = np.vectorize(lambda x: truncated_cdf(x, tg))
    assert stats.kstest(sums, cdf).statistic < 0.04


def test_samplers_respect_selection(rng):
    data = sample_conditional(0.0, 5, 3, 1.96, rng)
    assert data.stage1_sum > 1.96 * math.sqrt(5) and data.n2 == 3
    data = sample_unconditional(0.3, PRIOR, 4, 1.96, rng)
    assert data.n1 in PRIOR.support
    data = sample_randomized(0.0, 5, 2, 1.96, 1.0, rng)
    assert data.selection == "randomized" and data.n1 == 5


def _no_selection_loglik(data, theta):
    return float(stats.norm.logpdf(np.asarray(data.values) - theta).sum())


def test_randomized_loglik_tends_to_hard_threshold():
    data = _data()
    for theta in (-0.5, 0.0, 0.7, 1.5):
        hard = conditional_loglik(data, theta)
        assert file_drawer_loglik(data, theta, randomization_scale=1e-8) == pytest.approx(hard, abs=1e-8)


def test_randomized_loglik_tends_to_no_selection():
    data = _data()
    # 常数项随 γ 变化，比较 θ 间的差
    for a, b in ((0.5, 0.0), (1.2, -0.3)):
        diff = file_drawer_loglik(data, a, 1e8) - file_drawer_loglik(data, b, 1e8)
        assert diff == pytest.approx(_no_selection_loglik(data, a) - _no_selection_loglik(data, b), abs=1e-6)


def test_randomized_loglik_converges_monotonically():
    data = _data()
    a, b = 0.5, 0.0
    hard = conditional_loglik(data, a) - conditional_loglik(data, b)
    free = _no_selection_loglik(data, a) - _no_selection_loglik(data, b)
    gammas = [1e-3, 0.1, 0.5, 1.0, 2.0, 5.0, 20.0, 100.0, 1e4]
    diffs = [file_drawer_loglik(data, a, g) - file_drawer_loglik(data, b, g) for g in gammas]
    to_free = [abs(d - free) for d in diffs]
    to_hard = [abs(d - hard) for d in diffs]
    assert all(x > y for x, y in zip(to_free, to_free[1:]))
    assert all(x < y for x, y in zip(to_hard, to_hard[1:]))


def test_randomized_acceptance_matches_simulation(rng):
    s1 = 5 * 0.2 + math.sqrt(5) * rng.standard_normal(200_000)
    w = 1.5 * rng.standard_normal(200_000)
    empirical = float(np.mean(s1 + w > 1.96 * math.sqrt(5)))
    assert randomized_acceptance(0.2, 5, 1.96, 1.5) == pytest.approx(empirical, abs=0.005)


def test_rare_randomized_selection_is_sampled(rng):
    # 接受概率约 1e-5，固定 64 的批量在 3 批内几乎不可能命中
    theta = -1.21
    assert randomized_acceptance(theta, 5, 1.96, 1.0) < 2e-5
    data = sample_randomized(theta, 5, 3, 1.96, 1.0, rng, max_batches=3)
    assert data.n1 == 5 and data.n2 == 3
    assert data.selection == "randomized"
