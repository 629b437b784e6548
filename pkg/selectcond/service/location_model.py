"""
一维位置族的条件推断

Y_i = θ + ε_i，ε_i ~ g。T = θ̂ 为 MLE，A = y - θ̂ 为构形统计量。
给定 a 时 T 的条件密度为 c(θ, a) Π g(t + a_i - θ)；
选择规则为 u(T, a) <= α，u 为 H0: θ = 0 的条件 p 值。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional

import numpy as np
from scipy import integrate, optimize

from selectcond.schema.inference import InferenceResult
from selectcond.service.distributions import INF
from selectcond.service.errors import DivergentMLEError, InconsistentDatumError
from selectcond.service.selective_model import (
    ParametricFamily,
    SelectionFunction,
    SelectiveModel,
    log_integrate,
    quadrature,
    selective_ci,
    selective_mle,
    selective_pvalue,
)

logger = logging.getLogger(__name__)

# 积分半宽（以族尺度计），重尾族在 40 个尺度外的质量低于 1e-17
WINDOW = 40.0
QUAD_NODES = 200
BOUNDARY_TOL = 1e-12
PARAM_BOUND = 100.0


@dataclass(frozen=True)
class LocationFamily:
    """位置族的基础密度 g，score 为 (log g)'"""
    name: str
    log_g: Callable[[np.ndarray], np.ndarray]
    score: Callable[[np.ndarray], np.ndarray]
    sample: Callable[[np.random.Generator, int], np.ndarray]
    scale: float = 1.0


@dataclass(frozen=True)
class Configuration:
    """
    构形统计量 a = y - θ̂ 与位置估计 θ̂

    给出 family 时校验 θ = 0 是 Σ log g(a_i - θ) 的极大点（得分方程在零处成立）。
    """
    a: np.ndarray
    theta_hat: float
    family: Optional[LocationFamily] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if a.size < 1 or not np.all(np.isfinite(a)):
            raise ValueError("configuration must be a non-empty finite vector")
        if not math.isfinite(self.theta_hat):
            raise ValueError("theta_hat must be finite")
        a.setflags(write=False)
        object.__setattr__(self, "a", a)
        if self.family is not None and not is_configuration(self, self.family):
            raise ValueError(f"residuals are not a {self.family.name} configuration: score is nonzero at 0")

    @property
    def n(self) -> int:
        return self.a.size

    @property
    def y(self) -> np.ndarray:
        return self.theta_hat + self.a


# ---------------------------------------------------------------------------
# 族注册表
# ---------------------------------------------------------------------------

_REGISTRY: Dict[str, LocationFamily] = {}


def register_family(family: LocationFamily) -> LocationFamily:
    """注册位置族，检查 exp(log_g) 积分为 1"""
    def g(x):
        return float(np.exp(family.log_g(np.array([x]))[0]))

    left, _ = integrate.quad(g, -INF, 0.0, epsabs=1e-14, epsrel=1e-12, limit=200)
    right, _ = integrate.quad(g, 0.0, INF, epsabs=1e-14, epsrel=1e-12, limit=200)
    if abs(left + right - 1.0) > 1e-8:
        raise ValueError(f"density of family {family.name!r} integrates to {left + right}")
    _REGISTRY[family.name] = family
    return family


def get_family(name: str) -> LocationFamily:
    try:
        return _REGISTRY[name]
    except KeyError:
        raise ValueError(f"unknown location family {name!r}; registered: {sorted(_REGISTRY)}") from None


def registered_families():
    return sorted(_REGISTRY)


def _gaussian_log_g(x):
    return -0.5 * x * x - 0.5 * math.log(2 * math.pi)


def _laplace_log_g(x):
    return -np.abs(x) - math.log(2.0)


def _logistic_log_g(x):
    # log e^{-x}/(1+e^{-x})² 的对称稳定写法
    ax = np.abs(x)
    return -ax - 2.0 * np.log1p(np.exp(-ax))


register_family(LocationFamily("gaussian", _gaussian_log_g, lambda x: -x,
                               lambda rng, n: rng.standard_normal(n)))
register_family(LocationFamily("laplace", _laplace_log_g, lambda x: -np.sign(x),
                               lambda rng, n: rng.laplace(0.0, 1.0, n)))
register_family(LocationFamily("logistic", _logistic_log_g, lambda x: -np.tanh(0.5 * x),
                               lambda rng, n: rng.logistic(0.0, 1.0, n)))


# ---------------------------------------------------------------------------
# 构形分解
# ---------------------------------------------------------------------------

def _loglik(y: np.ndarray, theta: float, family: LocationFamily) -> float:
    return float(np.sum(family.log_g(y - theta)))


def decompose(y, family: LocationFamily) -> Configuration:
    """
    y ↦ (θ̂, a)

    对数凹族的得分 Σ s(y_i - θ) 关于 θ 单调，MLE 位于 [min(y), max(y)] 内，
    用 Brent 法求得分零点；Laplace 的得分为阶梯函数，零点即中位数。
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.size < 1:
        raise ValueError("decompose needs at least one observation")
    if not np.all(np.isfinite(y)):
        raise ValueError("observations must be finite")
    if not math.isfinite(_loglik(y, float(np.median(y)), family)):
        raise ValueError("non-finite likelihood")
    lo, hi = float(y.min()), float(y.max())
    if hi == lo:
        return Configuration(a=np.zeros(y.size), theta_hat=lo, family=family)

    def total_score(theta):
        return float(np.sum(family.score(y - theta)))

    f_lo, f_hi = total_score(lo), total_score(hi)
    if f_lo >= 0.0:
        theta = lo
    elif f_hi <= 0.0:
        theta = hi
    else:
        theta = float(optimize.brentq(total_score, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=500))
    return Configuration(a=y - theta, theta_hat=theta, family=family)


def is_configuration(conf: Configuration, family: LocationFamily, tol: float = 1e-8) -> bool:
    """θ = t 是 Σ log g(t + a_i - θ) 的极大点"""
    h = 1e-6
    base = float(np.sum(family.log_g(conf.a)))
    return all(float(np.sum(family.log_g(conf.a + s))) <= base + tol for s in (-h, h))


# ---------------------------------------------------------------------------
# T | a 的条件分布
# ---------------------------------------------------------------------------

def _log_mass(a: np.ndarray, family: LocationFamily, lo: float = -INF, hi: float = INF) -> float:
    """log ∫_lo^hi Π g(x + a_i) dx，x = t - θ"""
    half = float(np.max(np.abs(a))) + WINDOW * family.scale
    lo, hi = max(lo, -half), min(hi, half)
    kinks = tuple(float(k) for k in -a) + (0.0,)
    return log_integrate(lambda x: float(np.sum(family.log_g(x + a))), lo, hi, points=kinks, limit=QUAD_NODES)


def log_conditional_constant(a, family: LocationFamily) -> float:
    """log c(θ, a)；代换 t → t + θ 后与 θ 无关"""
    log_total = _log_mass(np.asarray(a, dtype=float), family)
    if not math.isfinite(log_total):
        raise ValueError("conditional density does not integrate")
    return -log_total


def conditional_density_constant(theta: float, conf: Configuration, family: LocationFamily) -> float:
    """c(θ, a) = 1 / ∫ Π g(t + a_i - θ) dt"""
    return math.exp(log_conditional_constant(conf.a, family))


def conditional_log_density(t: float, theta: float, a, family: LocationFamily, log_c: Optional[float] = None) -> float:
    a = np.asarray(a, dtype=float)
    if log_c is None:
        log_c = log_conditional_constant(a, family)
    return log_c + float(np.sum(family.log_g(t + a - theta)))


def conditional_cdf(t: float, theta: float, a, family: LocationFamily) -> float:
    """P_θ(T <= t | a)"""
    a = np.asarray(a, dtype=float)
    below = _log_mass(a, family, hi=t - theta)
    above = _log_mass(a, family, lo=t - theta)
    if below == -INF:
        return 0.0
    if above == -INF:
        return 1.0
    return 1.0 / (1.0 + math.exp(above - below))


def conditional_sf(t: float, theta: float, a, family: LocationFamily) -> float:
    """P_θ(T > t | a)，上尾直接积分"""
    a = np.asarray(a, dtype=float)
    below = _log_mass(a, family, hi=t - theta)
    above = _log_mass(a, family, lo=t - theta)
    if above == -INF:
        return 0.0
    if below == -INF:
        return 1.0
    return 1.0 / (1.0 + math.exp(below - above))


def conditional_quantile(q: float, a, family: LocationFamily, theta: float = 0.0) -> float:
    """T | a 的条件 q 分位数；q = 0 时为 -inf"""
    if q <= 0.0:
        return -INF
    if q >= 1.0:
        return INF
    a = np.asarray(a, dtype=float)
    half = float(np.max(np.abs(a))) + WINDOW * family.scale
    if q <= 0.5:
        def objective(x):
            return conditional_cdf(x, 0.0, a, family) - q
    else:
        def objective(x):
            return (1.0 - q) - conditional_sf(x, 0.0, a, family)
    x = float(optimize.brentq(objective, -half, half, xtol=1e-13, rtol=4 * np.finfo(float).eps, maxiter=500))
    return theta + x


def location_pvalue(conf: Configuration, family: LocationFamily) -> float:
    """u(t, a) = c(0, a) ∫_t^∞ Π g(t̃ + a_i) dt̃"""
    return conditional_sf(conf.theta_hat, 0.0, conf.a, family)


def selection_cutoff(a, family: LocationFamily, alpha: float) -> float:
    """
    t_α(a)：u(t, a) <= α 当且仅当 t >= t_α(a)

    u 关于 t 单调递减，只需一次分位数求解。
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if alpha >= 1.0:
        return -INF
    return conditional_quantile(1.0 - alpha, a, family, theta=0.0)


# ---------------------------------------------------------------------------
# 选择性推断
# ---------------------------------------------------------------------------

def location_selective_model(conf: Configuration, family: LocationFamily, alpha: float) -> SelectiveModel:
    """
    条件于选择与构形的选择性模型

    选择区域在观测构形 a 下为 {t > t_α(a)}，T|a 的密度用积分归一化。
    """
    n = conf.n
    cutoff = selection_cutoff(conf.a, family, alpha)
    log_c_cache: Dict[bytes, float] = {}

    def log_c(a):
        key = np.asarray(a, dtype=float).tobytes()
        if key not in log_c_cache:
            log_c_cache[key] = log_conditional_constant(a, family)
        return log_c_cache[key]

    def reduce(y):
        c = decompose(y, family)
        return c.theta_hat, c.a

    def statistic_log_density(t, theta, a):
        return conditional_log_density(t, float(theta[0]), a, family, log_c=log_c(a))

    def statistic_window(theta, a):
        half = float(np.max(np.abs(a))) + WINDOW * family.scale
        return float(theta[0]) - half, float(theta[0]) + half

    parametric = ParametricFamily(
        name=f"location:{family.name}(n={n})",
        log_density=lambda y, theta: _loglik(np.asarray(y, dtype=float), float(theta[0]), family),
        sampler=lambda theta, rng: float(theta[0]) + family.sample(rng, n),
        param_bounds=((-PARAM_BOUND, PARAM_BOUND),),
        reduce=reduce,
        statistic_log_density=statistic_log_density,
        statistic_window=statistic_window,
        initial=lambda y: np.array([decompose(y, family).theta_hat]),
    )

    # 选择区域只在观测构形下求解
    def reduced(t, a=None):
        return 1.0 if t >= cutoff else 0.0

    selection = SelectionFunction(
        kind="deterministic",
        evaluate=lambda y: reduced(decompose(y, family).theta_hat),
        reduced=reduced,
        breakpoints=lambda a: (cutoff,),
    )
    return SelectiveModel(
        family=parametric,
        selection=selection,
        normalizer=quadrature(QUAD_NODES),
        conditioning="selection-and-ancillary",
    )


def selective_location_inference(
    conf: Configuration,
    family: LocationFamily,
    alpha: float,
    ci_level: float,
    null_value: float = 0.0,
    seed: int = 0,
) -> InferenceResult:
    """
    选中数据（u(t, a) <= α）的位置参数推断：MLE、等尾区间、单侧 p 值
    """
    model = location_selective_model(conf, family, alpha)
    cutoff = model.selection.cut_points()[0] if alpha < 1.0 else -INF
    if conf.theta_hat < cutoff:
        raise InconsistentDatumError(f"u(t, a) exceeds alpha={alpha}")

    y = conf.y
    flags = []
    if conf.theta_hat - cutoff <= BOUNDARY_TOL:
        logger.warning(f"位置估计位于选择边界 (t={conf.theta_hat}, t_α={cutoff})，MLE 发散")
        flags.append("divergent-mle")
        estimate = -INF
    else:
        try:
            estimate = float(selective_mle(model, y, seed=seed)[0])
        except DivergentMLEError as e:
            logger.warning(f"位置模型 MLE 发散: {e}")
            flags.append("divergent-mle")
            estimate = -INF if e.direction[0] < 0 else INF

    ci = selective_ci(model, y, ci_level)
    if not all(map(math.isfinite, ci)):
        flags.append("unbounded-ci")

    return InferenceResult(
        estimate=estimate,
        ci=ci,
        pvalue=selective_pvalue(model, y, null_value, alternative="greater"),
        model_kind=f"location-{family.name}",
        diagnostics={
            "normalizer": model.normalizer.kind,
            "selection_cutoff": cutoff,
            "alpha": alpha,
            "flags": flags,
        },
    )


def sample_selected(
    theta: float,
    n: int,
    family: LocationFamily,
    alpha: float,
    rng: np.random.Generator,
    max_draws: int = 100_000,
) -> Configuration:
    """拒绝抽样直到 u(T, a) <= α"""
    for _ in range(max_draws):
        conf = decompose(theta + family.sample(rng, n), family)
        if alpha >= 1.0 or location_pvalue(conf, family) <= alpha:
            return conf
    raise InconsistentDatumError(f"no selected sample within {max_draws} draws")
