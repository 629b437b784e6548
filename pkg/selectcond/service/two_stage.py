"""
两阶段高斯模型：抽屉问题与随机样本量

Y_i ~ N(θ, 1)。第一阶段 n1 个观测满足 sum > z·sqrt(n1) 时再收集 n2 个。
n1 随机时有两种条件化方式：
  unconditional  对 (n1, y) 联合条件于选择，分母 Σ f(ñ1) Φ(θ sqrt(ñ1) - z)；
  conditional    先观测 n1 再条件于选择，分母 Φ(θ sqrt(n1) - z)。
"""
import logging
import math
from typing import Callable, Optional

import numpy as np
from scipy import special
from scipy.special import ndtri

from selectcond.schema.inference import InferenceResult, PairedInferenceResult
from selectcond.schema.two_stage import SampleSizePrior, TwoStageData
from selectcond.service.distributions import (
    INF,
    TruncatedGaussian,
    truncated_cdf,
    truncated_logpdf,
    truncated_sample,
    truncated_sf,
)
from selectcond.service.errors import DivergentMLEError, VanishingSelectionError
from selectcond.service.selective_model import (
    LOG_MIN_SELECTION_PROBABILITY,
    equal_tailed_interval,
    likelihood_ratio_interval,
    log_integrate,
    maximize_loglik,
    pvalue_from_tails,
)

logger = logging.getLogger(__name__)

PARAM_BOUND = 100.0
# 随机化拒绝抽样的批大小范围
MIN_BATCH = 64
MAX_BATCH = 1_000_000
ACCEPT_PER_BATCH = 4.0
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def _gaussian_loglik(data: TwoStageData, theta: float) -> float:
    r = data.values - theta
    return float(-0.5 * np.dot(r, r) - data.n * _LOG_SQRT_2PI)


def _check_vanishing(log_value: float, strict: bool = True) -> float:
    if strict and not log_value > LOG_MIN_SELECTION_PROBABILITY:
        raise VanishingSelectionError()
    return log_value


def _log_selection_terms(prior: SampleSizePrior, theta: float, z: float) -> np.ndarray:
    """log f(n1) + log Φ(θ sqrt(n1) - z)，按支撑排列"""
    support = np.asarray(prior.support, dtype=float)
    with np.errstate(divide="ignore"):
        log_w = np.log(np.asarray(prior.probs, dtype=float))
    return log_w + special.log_ndtr(theta * np.sqrt(support) - z)


def log_selection_denominator(prior: SampleSizePrior, theta: float, z: float = 1.96) -> float:
    """log Σ f(ñ1) Φ(θ sqrt(ñ1) - z)"""
    return float(special.logsumexp(_log_selection_terms(prior, theta, z)))


def unconditional_loglik(data: TwoStageData, prior: SampleSizePrior, theta: float, strict: bool = True) -> float:
    """对 (n1, y) 联合条件于选择的对数似然"""
    weight = prior.prob(data.n1)
    if weight <= 0.0:
        raise ValueError(f"n1={data.n1} outside the prior support")
    log_den = _check_vanishing(log_selection_denominator(prior, theta, data.threshold), strict)
    return math.log(weight) + _gaussian_loglik(data, theta) - log_den


def conditional_loglik(data: TwoStageData, theta: float, strict: bool = True) -> float:
    """先观测 n1 再条件于选择的对数似然（f(n1) 为常数，略去）"""
    log_den = _check_vanishing(float(special.log_ndtr(theta * math.sqrt(data.n1) - data.threshold)), strict)
    return _gaussian_loglik(data, theta) - log_den


def sample_size_pmf_given_selection(prior: SampleSizePrior, theta: float, z: float = 1.96) -> np.ndarray:
    """f_S(n1; θ) ∝ f(n1) Φ(θ sqrt(n1) - z)"""
    terms = _log_selection_terms(prior, theta, z)
    log_total = float(special.logsumexp(terms))
    if not math.isfinite(log_total):
        raise VanishingSelectionError("all sample-size masses vanish")
    return np.exp(terms - log_total)


def file_drawer_loglik(
    data: TwoStageData, theta: float, randomization_scale: Optional[float] = None, strict: bool = True
) -> float:
    """
    抽屉问题的选择性对数似然

    strict 时选择概率低于 1e-300 报错；拟合时关闭，log_ndtr 在深尾仍然有限。

    randomization_scale = γ 时选择规则为 S1 + W > z sqrt(n1)，W ~ N(0, γ²)，
    归一化常数为 Φ((θ n1 - z sqrt(n1)) / sqrt(n1 + γ²))。
    """
    if randomization_scale is None:
        return conditional_loglik(data, theta, strict)
    gamma = float(randomization_scale)
    if not gamma > 0:
        raise ValueError("randomization_scale must be positive")
    n1, cut = data.n1, data.threshold * math.sqrt(data.n1)
    log_p = float(special.log_ndtr((data.stage1_sum - cut) / gamma))
    if log_p == -INF:
        raise ValueError("stage-1 data has zero selection probability")
    log_phi = _check_vanishing(float(special.log_ndtr((theta * n1 - cut) / math.sqrt(n1 + gamma * gamma))), strict)
    return _gaussian_loglik(data, theta) + log_p - log_phi


# ---------------------------------------------------------------------------
# 总和统计量的选择性分布
# ---------------------------------------------------------------------------

def _stage1_law(theta: float, n1: int, z: float) -> TruncatedGaussian:
    return TruncatedGaussian(mu=n1 * theta, sigma=math.sqrt(n1), truncation=((z * math.sqrt(n1), INF),))


def _log_stage_sum_tail(s: float, theta: float, n1: int, n2: int, z: float, upper: bool) -> float:
    law = _stage1_law(theta, n1, z)
    sd2 = math.sqrt(n2)
    lo = law.lower
    hi = max(lo, law.mu, s - n2 * theta) + 12.0 * (law.sigma + sd2)
    sign = 1.0 if upper else -1.0

    def log_f(u):
        return truncated_logpdf(u, law) + float(special.log_ndtr(sign * (u + n2 * theta - s) / sd2))

    return log_integrate(log_f, lo, hi, limit=200)


def stage_sum_cdf(s: float, theta: float, n1: int, n2: int, z: float = 1.96) -> float:
    """P_θ(S1 + S2 <= s | n1, S1 > z sqrt(n1))"""
    if n2 == 0:
        return truncated_cdf(s, _stage1_law(theta, n1, z))
    log_below = _log_stage_sum_tail(s, theta, n1, n2, z, upper=False)
    log_above = _log_stage_sum_tail(s, theta, n1, n2, z, upper=True)
    if log_below == -INF:
        return 0.0
    return float(1.0 / (1.0 + math.exp(log_above - log_below))) if log_above > -INF else 1.0


def stage_sum_sf(s: float, theta: float, n1: int, n2: int, z: float = 1.96) -> float:
    if n2 == 0:
        return truncated_sf(s, _stage1_law(theta, n1, z))
    log_below = _log_stage_sum_tail(s, theta, n1, n2, z, upper=False)
    log_above = _log_stage_sum_tail(s, theta, n1, n2, z, upper=True)
    if log_above == -INF:
        return 0.0
    return float(1.0 / (1.0 + math.exp(log_below - log_above))) if log_below > -INF else 1.0


def unconditional_sum_cdf(s: float, theta: float, n2: int, prior: SampleSizePrior, z: float = 1.96) -> float:
    """n1 按 f_S(n1; θ) 混合后的总和分布函数"""
    weights = sample_size_pmf_given_selection(prior, theta, z)
    return float(sum(
        w * stage_sum_cdf(s, theta, n1, n2, z) for n1, w in zip(prior.support, weights) if w > 0
    ))


def unconditional_sum_sf(s: float, theta: float, n2: int, prior: SampleSizePrior, z: float = 1.96) -> float:
    weights = sample_size_pmf_given_selection(prior, theta, z)
    return float(sum(
        w * stage_sum_sf(s, theta, n1, n2, z) for n1, w in zip(prior.support, weights) if w > 0
    ))


# ---------------------------------------------------------------------------
# 推断
# ---------------------------------------------------------------------------

def _fit(loglik: Callable[[float], float], data: TwoStageData, seed: int):
    start = float(np.mean(data.values))

    def safe(theta):
        try:
            return loglik(float(theta[0]))
        except VanishingSelectionError:
            return -INF

    try:
        fit = maximize_loglik(safe, [start], [(-PARAM_BOUND, PARAM_BOUND)], seed=seed)
        return float(fit.theta[0]), []
    except DivergentMLEError as e:
        logger.warning(f"两阶段 MLE 发散: {e}")
        return (-INF if e.direction[0] < 0 else INF), ["divergent-mle"]


def _result(estimate, ci, pvalue, kind, flags, extra=None) -> InferenceResult:
    if not all(map(math.isfinite, ci)):
        flags = flags + ["unbounded-ci"]
    elif math.isfinite(estimate) and not ci[0] <= estimate <= ci[1]:
        # 总和统计量对联合模型并不充分，MLE 可能落在反演区间之外
        logger.warning(f"{kind} MLE {estimate} 落在区间 {ci} 之外，区间扩展至包含估计")
        flags = flags + ["estimate-outside-ci"]
        ci = (min(ci[0], estimate), max(ci[1], estimate))
    diagnostics = {"normalizer": "closed-form", "flags": flags}
    diagnostics.update(extra or {})
    return InferenceResult(estimate=estimate, ci=ci, pvalue=pvalue, model_kind=kind, diagnostics=diagnostics)


def conditional_inference(data: TwoStageData, level: float, null_value: float = 0.0, seed: int = 0) -> InferenceResult:
    """条件于 n1 的模型：MLE 与总和统计量分布函数反演的精确区间"""
    z, s = data.threshold, data.total_sum
    estimate, flags = _fit(lambda t: conditional_loglik(data, t, strict=False), data, seed)
    ci = equal_tailed_interval(
        lambda t: stage_sum_cdf(s, t, data.n1, data.n2, z), level, center=s / data.n, radius=50.0
    )
    pvalue = pvalue_from_tails(
        stage_sum_cdf(s, null_value, data.n1, data.n2, z),
        stage_sum_sf(s, null_value, data.n1, data.n2, z),
        "greater",
    )
    return _result(estimate, ci, pvalue, "conditional", flags, {"n1": data.n1})


def unconditional_inference(
    data: TwoStageData, prior: SampleSizePrior, level: float, null_value: float = 0.0, seed: int = 0
) -> InferenceResult:
    """对 (n1, y) 联合条件于选择的模型：样本量分布参与推断"""
    z, s = data.threshold, data.total_sum
    estimate, flags = _fit(lambda t: unconditional_loglik(data, prior, t, strict=False), data, seed)
    ci = equal_tailed_interval(
        lambda t: unconditional_sum_cdf(s, t, data.n2, prior, z), level, center=s / data.n, radius=50.0
    )
    pvalue = pvalue_from_tails(
        unconditional_sum_cdf(s, null_value, data.n2, prior, z),
        unconditional_sum_sf(s, null_value, data.n2, prior, z),
        "greater",
    )
    return _result(estimate, ci, pvalue, "unconditional", flags, {"n1": data.n1})


def compare_two_stage_inference(
    data: TwoStageData, prior: SampleSizePrior, level: float, null_value: float = 0.0, seed: int = 0
) -> PairedInferenceResult:
    """同一数据在两种条件化方式下的推断及差异"""
    unconditional = unconditional_inference(data, prior, level, null_value, seed)
    conditional = conditional_inference(data, level, null_value, seed)
    return PairedInferenceResult(
        first=unconditional,
        second=conditional,
        estimate_delta=unconditional.estimate - conditional.estimate,
        length_delta=unconditional.length - conditional.length,
    )


def randomized_file_drawer_inference(
    data: TwoStageData,
    randomization_scale: float,
    level: float,
    null_value: float = 0.0,
    seed: int = 0,
) -> InferenceResult:
    """随机化抽屉问题：MLE、似然比区间与符号根 p 值"""

    def loglik(t):
        return file_drawer_loglik(data, t, randomization_scale, strict=False)

    estimate, flags = _fit(loglik, data, seed)
    if not math.isfinite(estimate):
        return _result(estimate, (-INF, INF), 1.0 if estimate < null_value else 0.0,
                       "file-drawer-randomized", flags, {"randomization_scale": randomization_scale})
    ci = likelihood_ratio_interval(loglik, estimate, level)
    # 单侧符号根
    drop = 2.0 * (loglik(estimate) - loglik(null_value))
    root = math.copysign(math.sqrt(max(drop, 0.0)), estimate - null_value)
    pvalue = float(special.ndtr(-root))
    return _result(estimate, ci, pvalue, "file-drawer-randomized", flags,
                   {"randomization_scale": randomization_scale})


def file_drawer_inference(
    data: TwoStageData,
    level: float,
    randomization_scale: Optional[float] = None,
    null_value: float = 0.0,
    seed: int = 0,
) -> InferenceResult:
    """抽屉问题推断；确定性选择时与条件模型一致"""
    if randomization_scale is not None:
        return randomized_file_drawer_inference(data, randomization_scale, level, null_value, seed)
    result = conditional_inference(data, level, null_value, seed)
    return result.model_copy(update={"model_kind": "file-drawer"})


def naive_inference(data: TwoStageData, level: float, null_value: float = 0.0) -> InferenceResult:
    """忽略选择的 z 区间"""
    mean = float(np.mean(data.values))
    half = float(ndtri(0.5 + level / 2.0)) / math.sqrt(data.n)
    return InferenceResult(
        estimate=mean,
        ci=(mean - half, mean + half),
        pvalue=float(special.ndtr(-(mean - null_value) * math.sqrt(data.n))),
        model_kind="face-value",
        diagnostics={"flags": []},
    )


# ---------------------------------------------------------------------------
# 抽样
# ---------------------------------------------------------------------------

def _spread(total: float, count: int, rng: np.random.Generator) -> list:
    """给定总和生成 N(·, 1) 样本：均值固定，残差独立"""
    e = rng.standard_normal(count)
    return (total / count + (e - e.mean())).tolist()


def sample_selected_stage1(theta: float, n1: int, z: float, rng: np.random.Generator) -> list:
    """给定 n1，抽取通过检验的第一阶段数据（S1 截断高斯精确抽样）"""
    s1 = truncated_sample(_stage1_law(theta, n1, z), rng)
    return _spread(float(s1), n1, rng)


def sample_conditional(theta: float, n1: int, n2: int, z: float, rng: np.random.Generator) -> TwoStageData:
    """条件模型的抽样方式：n1 固定"""
    stage1 = sample_selected_stage1(theta, n1, z, rng)
    stage2 = (theta + rng.standard_normal(n2)).tolist()
    return TwoStageData(stage1=stage1, stage2=stage2, threshold=z)


def sample_unconditional(
    theta: float, prior: SampleSizePrior, n2: int, z: float, rng: np.random.Generator
) -> TwoStageData:
    """联合模型的抽样方式：n1 取自 f_S(n1; θ)"""
    weights = sample_size_pmf_given_selection(prior, theta, z)
    n1 = int(rng.choice(prior.support, p=weights / weights.sum()))
    return sample_conditional(theta, n1, n2, z, rng)


def randomized_acceptance(theta: float, n1: int, z: float, gamma: float) -> float:
    """P(S1 + W > z sqrt(n1))，S1 ~ N(n1 θ, n1)，W ~ N(0, γ²)"""
    return float(special.ndtr((n1 * theta - z * math.sqrt(n1)) / math.sqrt(n1 + gamma * gamma)))


def sample_randomized(
    theta: float, n1: int, n2: int, z: float, gamma: float, rng: np.random.Generator, max_batches: int = 1000
) -> TwoStageData:
    """
    随机化选择 S1 + W > z sqrt(n1) 的拒绝抽样

    每批大小按接受概率取，使每批期望命中约 ACCEPT_PER_BATCH 次。
    """
    accept = randomized_acceptance(theta, n1, z, gamma)
    if not accept > 0.0:
        raise VanishingSelectionError()
    batch = int(min(MAX_BATCH, max(MIN_BATCH, math.ceil(ACCEPT_PER_BATCH / accept))))
    cut = z * math.sqrt(n1)
    for _ in range(max_batches):
        s1 = n1 * theta + math.sqrt(n1) * rng.standard_normal(batch)
        w = gamma * rng.standard_normal(batch)
        hit = np.flatnonzero(s1 + w > cut)
        if hit.size:
            stage1 = _spread(float(s1[hit[0]]), n1, rng)
            stage2 = (theta + rng.standard_normal(n2)).tolist()
            return TwoStageData(stage1=stage1, stage2=stage2, threshold=z, selection="randomized")
    logger.warning(f"拒绝抽样 {max_batches} 批×{batch} 未命中，接受概率 {accept:.3g}")
    raise VanishingSelectionError()
