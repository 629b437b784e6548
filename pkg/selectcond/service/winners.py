"""
赢家推断

两种抽样模型：
  full-vector            条件于 Y_1 为最大值，归一化常数 P_θ(Y_1 > Y_i ∀ i > 1)；
  conditional-on-losers  同时条件于落选者，Y_1 截断到 [max(losers), ∞)。
全向量模型中非选中均值取联合选择性 MLE 的插补值，推断在 θ_1 上一维进行。
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import special
from scipy.special import ndtri

from selectcond.schema.inference import InferenceResult
from selectcond.schema.winners import WinnersData, WinnersModelKind
from selectcond.service.distributions import INF, std_normal_cdf
from selectcond.service.errors import DivergentMLEError
from selectcond.service.selective_model import (
    MLEFit,
    SelectionFunction,
    SelectiveModel,
    closed_form,
    gaussian_mean_family,
    gaussian_truncation_model,
    log_integrate,
    maximize_loglik,
    selective_ci,
    selective_mle_fit,
    selective_pvalue,
)

logger = logging.getLogger(__name__)

# 积分窗口（以 σ 计）
WINDOW = 12.0
QUAD_NODES = 200
BOUNDARY_TOL = 1e-12
# 联合拟合搜索半径（以 σ 计，另加数据极差）
NUISANCE_RADIUS = 20.0
_LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


def argmax_select(y: Sequence[float]) -> int:
    """最大值下标（0 起），并列时取最小下标"""
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < 2:
        raise ValueError("argmax selection needs at least two observations")
    if np.isnan(y).any():
        raise ValueError("observations contain NaN")
    return int(np.argmax(y))


def _log_winner_integral(theta1: float, others: np.ndarray, sigma: float, upper: float = INF) -> float:
    """log ∫_{-∞}^{upper} φ((y-θ_1)/σ)/σ Π Φ((y-θ_i)/σ) dy，在标准化尺度上积分"""
    d = (theta1 - others) / sigma

    def log_f(z):
        return -0.5 * z * z - _LOG_SQRT_2PI + float(np.sum(special.log_ndtr(z + d)))

    # 被积函数对数凹、曲率 ≥ 1，众数位于 [0, max(-d)] 内
    lo = -WINDOW
    hi = max(0.0, float(np.max(-d))) + WINDOW
    if upper < INF:
        hi = min(hi, (upper - theta1) / sigma)
    return log_integrate(log_f, lo, hi, limit=QUAD_NODES)


def log_normalizer_full(theta: Sequence[float], sigma: float = 1.0) -> float:
    """log P_θ(Y_1 > Y_i ∀ i > 1)"""
    theta = np.asarray(theta, dtype=float)
    if theta.size < 2:
        raise ValueError("normalizer needs at least two means")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return _log_winner_integral(float(theta[0]), theta[1:], sigma)


def normalizer_full(theta: Sequence[float], sigma: float = 1.0) -> float:
    """P_θ(Y_1 > Y_i ∀ i > 1)"""
    return math.exp(log_normalizer_full(theta, sigma))


def winner_probabilities(theta: Sequence[float], sigma: float = 1.0) -> np.ndarray:
    """每个下标成为最大值的概率"""
    theta = np.asarray(theta, dtype=float)
    probs = []
    for i in range(theta.size):
        reordered = np.concatenate([[theta[i]], np.delete(theta, i)])
        probs.append(normalizer_full(reordered, sigma))
    return np.array(probs)


def log_normalizer_losers(theta1: float, losers: Sequence[float], sigma: float = 1.0) -> float:
    losers = np.asarray(losers, dtype=float)
    if losers.size == 0:
        raise ValueError("losers must not be empty")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    return float(special.log_ndtr((theta1 - losers.max()) / sigma))


def normalizer_losers(theta1: float, losers: Sequence[float], sigma: float = 1.0) -> float:
    """P_θ1(Y_1 > Y_i ∀ i > 1 | y_2..y_m) = 1 - Φ((max(losers) - θ_1)/σ)"""
    return math.exp(log_normalizer_losers(theta1, losers, sigma))


def _ordered(data: WinnersData) -> np.ndarray:
    """选中者在前、落选者在后的观测向量"""
    return np.array([data.winner] + list(data.losers), dtype=float)


def full_vector_loglik(theta: Sequence[float], data: WinnersData) -> float:
    """
    全向量选择性对数似然（省略常数）

    -Σ (y_i - θ_i)²/(2σ²) - log P_θ(Y_1 > Y_i ∀ i > 1)，θ 按选中者在前排列。
    """
    theta = np.asarray(theta, dtype=float)
    r = (_ordered(data) - theta) / data.sigma
    return float(-0.5 * np.dot(r, r) - _log_winner_integral(float(theta[0]), theta[1:], data.sigma))


def fit_full_vector(data: WinnersData, seed: int = 0) -> MLEFit:
    """
    全向量选择性似然的联合极大化

    截断高斯族的对数似然对 θ 凹，从观测值单起点出发；搜索框随数据平移。
    """
    y = _ordered(data)
    radius = NUISANCE_RADIUS * data.sigma + float(np.ptp(y))
    bounds = [(v - radius, v + radius) for v in y]
    return maximize_loglik(lambda t: full_vector_loglik(t, data), y, bounds, seed=seed, n_starts=1)


def nuisance_means(data: WinnersData, seed: int = 0) -> Tuple[np.ndarray, List[str]]:
    """
    全向量模型的落选者均值插补

    取联合选择性 MLE 的 θ̂_2..θ̂_m：落选者在选择下偏低，原始 y_i 会低估选择强度。
    联合拟合发散时退回 θ̂_i = y_i。
    """
    try:
        fit = fit_full_vector(data, seed=seed)
    except DivergentMLEError as e:
        logger.warning(f"全向量联合 MLE 发散，落选者均值退回观测值: {e}")
        return np.asarray(data.losers, dtype=float), ["nuisance-plug-in"]
    flags = [] if fit.converged else ["nuisance-not-converged"]
    return fit.theta[1:], flags


def full_vector_model(nuisance: Sequence[float], sigma: float = 1.0) -> SelectiveModel:
    """
    全向量模型下 Y_1 的一维选择性模型

    选择函数 p(y_1) = Π Φ((y_1 - θ̂_i)/σ)，θ̂_i 为固定的落选者均值。
    """
    others = np.asarray(nuisance, dtype=float)

    def reduced(t, a=None):
        return float(np.exp(np.sum(special.log_ndtr((t - others) / sigma))))

    selection = SelectionFunction(
        kind="randomized",
        evaluate=lambda y: reduced(float(y[0])),
        reduced=reduced,
        breakpoints=lambda a: others.tolist(),
    )
    family = gaussian_mean_family(n=1, sigma=sigma)
    return SelectiveModel(
        family=family,
        selection=selection,
        normalizer=closed_form(
            lambda theta, a: _log_winner_integral(float(theta[0]), others, sigma),
            cdf=lambda t, theta, a: _full_vector_cdf(t, float(theta[0]), others, sigma),
        ),
    )


def _full_vector_cdf(t: float, theta1: float, others: np.ndarray, sigma: float) -> float:
    log_total = _log_winner_integral(theta1, others, sigma)
    log_below = _log_winner_integral(theta1, others, sigma, upper=t)
    if log_below == -INF:
        return 0.0
    return min(1.0, math.exp(log_below - log_total))


def losers_model(losers: Sequence[float], sigma: float = 1.0) -> SelectiveModel:
    """条件于落选者：Y_1 ~ N(θ_1, σ²) 截断到 [max(losers), ∞)"""
    return gaussian_truncation_model([(float(np.max(losers)), INF)], sigma=sigma)


def winners_model(
    data: WinnersData, kind: WinnersModelKind, nuisance: Optional[Sequence[float]] = None
) -> SelectiveModel:
    if kind == "full-vector":
        if nuisance is None:
            nuisance, _ = nuisance_means(data)
        return full_vector_model(nuisance, data.sigma)
    if kind == "conditional-on-losers":
        return losers_model(data.losers, data.sigma)
    raise ValueError(f"unknown winners model {kind!r}")


def infer_winner(
    data: WinnersData,
    kind: WinnersModelKind,
    level: float,
    null_value: float = 0.0,
    seed: int = 0,
) -> InferenceResult:
    """
    选中均值 θ_I 的选择性推断：MLE、等尾置信区间、H0: θ_I = null_value 的单侧 p 值
    """
    flags: List[str] = []
    nuisance = None
    if kind == "full-vector":
        nuisance, nuisance_flags = nuisance_means(data, seed=seed)
        flags.extend(nuisance_flags)
    model = winners_model(data, kind, nuisance)
    y_obs = np.array([data.winner])

    margin = data.winner - max(data.losers)
    if kind == "conditional-on-losers" and margin <= BOUNDARY_TOL:
        logger.warning(f"赢家位于截断边界 (margin={margin})，MLE 发散")
        flags.append("divergent-mle")
        estimate, ci = -INF, (-INF, INF)
    else:
        try:
            fit = selective_mle_fit(model, y_obs, seed=seed)
            estimate = float(fit.theta[0])
            if not fit.converged:
                flags.append("mle-not-converged")
        except DivergentMLEError as e:
            logger.warning(f"赢家 MLE 发散: {e}")
            flags.append("divergent-mle")
            estimate = -INF if e.direction[0] < 0 else INF
        ci = selective_ci(model, y_obs, level)

    if not all(map(math.isfinite, ci)):
        flags.append("unbounded-ci")

    pvalue = selective_pvalue(model, y_obs, null_value, alternative="greater")
    return InferenceResult(
        estimate=estimate,
        ci=ci,
        pvalue=pvalue,
        model_kind=kind,
        diagnostics={
            "normalizer": model.normalizer.kind,
            "selected_index": data.selected_index,
            "truncation_lower": max(data.losers),
            "nuisance_means": None if nuisance is None else [float(v) for v in nuisance],
            "flags": flags,
        },
    )


def face_value_inference(data: WinnersData, level: float, null_value: float = 0.0) -> InferenceResult:
    """忽略选择的朴素 z 区间"""
    z = float(ndtri(0.5 + level / 2.0))
    y1 = data.winner
    return InferenceResult(
        estimate=y1,
        ci=(y1 - z * data.sigma, y1 + z * data.sigma),
        pvalue=std_normal_cdf((null_value - y1) / data.sigma),
        model_kind="face-value",
        diagnostics={"selected_index": data.selected_index, "flags": []},
    )
