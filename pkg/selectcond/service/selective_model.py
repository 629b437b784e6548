"""
选择性模型

f_S(y; θ) = f(y; θ) p(y) / φ(θ)，归一化常数 φ 的计算方式可插拔：
闭式、一维自适应积分或蒙特卡罗。条件于辅助统计量 a 时使用 φ(θ; a)。
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, Literal, NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, optimize
from scipy.stats import chi2

from selectcond.service.distributions import (
    INF,
    TruncatedGaussian,
    merge_intervals,
    std_normal_cdf,
    truncated_cdf,
    truncated_sf,
)
from selectcond.service.errors import (
    DivergentMLEError,
    EmptyTruncationError,
    InconsistentDatumError,
    UnboundedIntervalError,
    UnsupportedSelectionError,
)

logger = logging.getLogger(__name__)

# φ 低于该值视为零
MIN_SELECTION_PROBABILITY = 1e-300
LOG_MIN_SELECTION_PROBABILITY = math.log(MIN_SELECTION_PROBABILITY)
# MLE 收敛判据：内部坐标的梯度范数上限
GRADIENT_TOL = 1e-6
REFINE_ROUNDS = 3

Params = np.ndarray
Ancillary = Optional[np.ndarray]
Alternative = Literal["greater", "less", "two-sided"]


# ---------------------------------------------------------------------------
# 选择函数
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SelectionFunction:
    """
    选择函数 y ↦ p(y) ∈ [0, 1]

    reduced 为充分统计量形式 p(t, a)；breakpoints 给出 p 在 t 上的间断点，
    供积分时切分区间。
    """
    kind: Literal["deterministic", "randomized"]
    evaluate: Callable[[np.ndarray], float]
    reduced: Optional[Callable[[float, Ancillary], float]] = None
    breakpoints: Optional[Callable[[Ancillary], Sequence[float]]] = None

    def __call__(self, y) -> float:
        return self._check(float(self.evaluate(np.asarray(y, dtype=float))))

    def at_statistic(self, t: float, a: Ancillary = None) -> float:
        if self.reduced is None:
            return self(np.array([t]))
        return self._check(float(self.reduced(t, a)))

    def cut_points(self, a: Ancillary = None) -> Tuple[float, ...]:
        if self.breakpoints is None:
            return ()
        return tuple(float(p) for p in self.breakpoints(a) if math.isfinite(p))

    def _check(self, p: float) -> float:
        if not 0.0 <= p <= 1.0:
            raise ValueError(f"selection probability out of range: {p}")
        if self.kind == "deterministic" and p not in (0.0, 1.0):
            raise ValueError(f"deterministic selection returned {p}")
        return p


def randomized_selection_prob(t_stat: float, threshold: float, noise_scale: float) -> float:
    """P{T + W > t}，W ~ N(0, γ²)"""
    if not noise_scale > 0:
        raise ValueError(f"noise_scale must be positive, got {noise_scale}")
    return std_normal_cdf((t_stat - threshold) / noise_scale)


def always_select() -> SelectionFunction:
    """p ≡ 1，无选择"""
    return SelectionFunction(
        kind="deterministic",
        evaluate=lambda y: 1.0,
        reduced=lambda t, a: 1.0,
    )


def threshold_selection(
    threshold: float,
    noise_scale: Optional[float] = None,
    two_sided: bool = False,
    statistic: Callable[[np.ndarray], float] = lambda y: float(np.mean(y)),
) -> SelectionFunction:
    """
    统计量超过阈值时选择

    noise_scale 给定时为随机化选择 p = Φ((T - t)/γ)；
    two_sided 时选择事件为 |T| > t（仅确定性）。
    """
    if noise_scale is not None:
        def reduced(t, a):
            return randomized_selection_prob(t, threshold, noise_scale)

        return SelectionFunction(
            kind="randomized",
            evaluate=lambda y: reduced(statistic(y), None),
            reduced=reduced,
            breakpoints=lambda a: (threshold,),
        )

    if two_sided:
        def reduced(t, a):
            return 1.0 if abs(t) > threshold else 0.0

        cuts = (-threshold, threshold)
    else:
        def reduced(t, a):
            return 1.0 if t > threshold else 0.0

        cuts = (threshold,)

    return SelectionFunction(
        kind="deterministic",
        evaluate=lambda y: reduced(statistic(y), None),
        reduced=reduced,
        breakpoints=lambda a: cuts,
    )


# ---------------------------------------------------------------------------
# 参数族
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ParametricFamily:
    """
    参数族 {f(y; θ)}

    reduce 把数据约化为 (T, A)；statistic_log_density 为 T 的密度
    （条件于 a 时为 T|a 的密度），statistic_window 为积分窗口。
    """
    name: str
    log_density: Callable[[np.ndarray, Params], float]
    sampler: Callable[[Params, np.random.Generator], np.ndarray]
    param_bounds: Tuple[Tuple[float, float], ...]
    reduce: Optional[Callable[[np.ndarray], Tuple[float, Ancillary]]] = None
    statistic_log_density: Optional[Callable[[float, Params, Ancillary], float]] = None
    statistic_window: Optional[Callable[[Params, Ancillary], Tuple[float, float]]] = None
    initial: Optional[Callable[[np.ndarray], Params]] = None

    @property
    def dimension(self) -> int:
        return len(self.param_bounds)

    def statistic(self, y) -> Tuple[float, Ancillary]:
        y = np.atleast_1d(np.asarray(y, dtype=float))
        if self.reduce is not None:
            return self.reduce(y)
        if y.size != 1:
            raise ValueError(f"family {self.name} has no reduction for vector data")
        return float(y[0]), None


def gaussian_mean_family(n: int = 1, sigma: float = 1.0, bound: float = 100.0) -> ParametricFamily:
    """Y_1..Y_n i.i.d. N(θ, σ²)，统计量为样本均值"""
    if n < 1:
        raise ValueError("n must be at least 1")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    se = sigma / math.sqrt(n)
    log_norm = -0.5 * math.log(2 * math.pi) - math.log(sigma)

    def log_density(y, theta):
        r = (np.asarray(y, dtype=float) - theta[0]) / sigma
        return float(np.sum(log_norm - 0.5 * r * r))

    def sampler(theta, rng):
        return theta[0] + sigma * rng.standard_normal(n)

    def reduce(y):
        mean = float(np.mean(y))
        return mean, np.asarray(y, dtype=float) - mean

    def statistic_log_density(t, theta, a):
        z = (t - theta[0]) / se
        return -0.5 * z * z - 0.5 * math.log(2 * math.pi) - math.log(se)

    def statistic_window(theta, a):
        return theta[0] - 15.0 * se, theta[0] + 15.0 * se

    return ParametricFamily(
        name=f"gaussian(n={n}, sigma={sigma})",
        log_density=log_density,
        sampler=sampler,
        param_bounds=((-bound, bound),),
        reduce=reduce,
        statistic_log_density=statistic_log_density,
        statistic_window=statistic_window,
        initial=lambda y: np.array([float(np.mean(y))]),
    )


# ---------------------------------------------------------------------------
# 归一化策略与选择性模型
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalizerStrategy:
    """φ(θ) 的计算方式"""
    kind: Literal["closed-form", "quadrature", "monte-carlo"]
    log_closed_form: Optional[Callable[[Params, Ancillary], float]] = None
    closed_form_cdf: Optional[Callable[[float, Params, Ancillary], float]] = None
    closed_form_sf: Optional[Callable[[float, Params, Ancillary], float]] = None
    nodes: int = 64
    n_draws: int = 100_000
    seed: int = 0

    def __post_init__(self):
        if self.kind == "closed-form" and self.log_closed_form is None:
            raise ValueError("closed-form strategy needs log_closed_form")
        if self.nodes < 1 or self.n_draws < 1:
            raise ValueError("nodes and n_draws must be positive")


def closed_form(
    log_normalizer: Callable[[Params, Ancillary], float],
    cdf: Optional[Callable[[float, Params, Ancillary], float]] = None,
    sf: Optional[Callable[[float, Params, Ancillary], float]] = None,
) -> NormalizerStrategy:
    return NormalizerStrategy(
        kind="closed-form", log_closed_form=log_normalizer, closed_form_cdf=cdf, closed_form_sf=sf
    )


def quadrature(nodes: int = 64) -> NormalizerStrategy:
    return NormalizerStrategy(kind="quadrature", nodes=nodes)


def monte_carlo(n_draws: int = 100_000, seed: int = 0) -> NormalizerStrategy:
    return NormalizerStrategy(kind="monte-carlo", n_draws=n_draws, seed=seed)


@dataclass(frozen=True)
class SelectiveModel:
    """参数族 + 选择函数 + 归一化策略"""
    family: ParametricFamily
    selection: SelectionFunction
    normalizer: NormalizerStrategy
    conditioning: Literal["selection", "selection-and-ancillary"] = "selection"

    @property
    def conditions_on_ancillary(self) -> bool:
        return self.conditioning == "selection-and-ancillary"


def default_normalizer(
    family: ParametricFamily,
    log_closed_form: Optional[Callable[[Params, Ancillary], float]] = None,
) -> NormalizerStrategy:
    """有闭式时用闭式，其次一维积分，最后蒙特卡罗"""
    if log_closed_form is not None:
        return closed_form(log_closed_form)
    if family.statistic_log_density is not None and family.statistic_window is not None:
        return quadrature()
    return monte_carlo()


class NormalizerEstimate(NamedTuple):
    log_value: float
    std_error: float
    strategy: str

    @property
    def value(self) -> float:
        return math.exp(self.log_value)


# ---------------------------------------------------------------------------
# 对数空间一维积分
# ---------------------------------------------------------------------------

def log_integrate(
    log_f: Callable[[float], float],
    lo: float,
    hi: float,
    points: Sequence[float] = (),
    limit: int = 64,
    grid: int = 257,
) -> float:
    """
    log ∫_lo^hi exp(log_f(t)) dt，区间有限

    先在网格上定位峰值并减去，峰附近追加断点，避免窄峰被漏掉。
    """
    if not hi > lo:
        return -INF
    inner = sorted({float(p) for p in points if lo < p < hi})
    ts = np.unique(np.concatenate([np.linspace(lo, hi, grid), inner]))
    values = np.array([log_f(t) for t in ts])
    finite = np.isfinite(values)
    if not finite.any():
        return -INF

    k = int(np.argmax(np.where(finite, values, -INF)))
    left, right = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
    t_peak, peak = float(ts[k]), float(values[k])
    if right > left:
        res = optimize.minimize_scalar(
            lambda t: -log_f(t) if math.isfinite(log_f(t)) else INF,
            bounds=(left, right),
            method="bounded",
            options={"xatol": 1e-12 * max(1.0, hi - lo)},
        )
        if res.success and math.isfinite(res.fun) and -res.fun > peak:
            t_peak, peak = float(res.x), float(-res.fun)

    # 峰宽由曲率估计
    h = 1e-4 * max(1.0, abs(t_peak))
    f0, fl, fr = log_f(t_peak), log_f(t_peak - h), log_f(t_peak + h)
    width = (hi - lo) / grid
    if all(map(math.isfinite, (f0, fl, fr))):
        curvature = -(fl - 2 * f0 + fr) / (h * h)
        if curvature > 0:
            width = 1.0 / math.sqrt(curvature)
    extra = [t_peak + s * width for s in (-8.0, -2.0, -0.5, 0.0, 0.5, 2.0, 8.0)]
    cuts = sorted({p for p in inner + extra if lo < p < hi})

    def integrand(t):
        v = log_f(t)
        return math.exp(v - peak) if math.isfinite(v) else 0.0

    value, _ = integrate.quad(
        integrand, lo, hi, points=cuts or None, limit=max(limit, 4 * (len(cuts) + 1)),
        epsabs=1e-14, epsrel=1e-11,
    )
    if not value > 0:
        return -INF
    return peak + math.log(value)


# ---------------------------------------------------------------------------
# 选择概率与选择性密度
# ---------------------------------------------------------------------------

def _as_params(theta) -> Params:
    return np.atleast_1d(np.asarray(theta, dtype=float))


def _statistic_range(model: SelectiveModel, theta: Params, a: Ancillary, extra=()) -> Tuple[float, float, Tuple[float, ...]]:
    lo, hi = model.family.statistic_window(theta, a)
    cuts = model.selection.cut_points(a) + tuple(float(e) for e in extra if math.isfinite(e))
    width = hi - lo
    for c in cuts:
        lo, hi = min(lo, c - 0.5 * width), max(hi, c + 0.5 * width)
    return lo, hi, cuts


def _log_statistic_integral(
    model: SelectiveModel, theta: Params, a: Ancillary, lo: float = -INF, hi: float = INF
) -> float:
    family = model.family
    if family.statistic_log_density is None or family.statistic_window is None:
        raise ValueError(f"family {family.name} has no statistic density for quadrature")

    w_lo, w_hi, cuts = _statistic_range(model, theta, a, extra=(lo, hi))
    lo, hi = max(lo, w_lo), min(hi, w_hi)

    def log_f(t):
        p = model.selection.at_statistic(t, a)
        if p <= 0.0:
            return -INF
        return family.statistic_log_density(t, theta, a) + math.log(p)

    return log_integrate(log_f, lo, hi, points=cuts, limit=model.normalizer.nodes)


def normalizer_estimate(model: SelectiveModel, theta, a: Ancillary = None) -> NormalizerEstimate:
    """
    计算 log φ(θ)（条件于辅助统计量时为 log φ(θ; a)），附带蒙特卡罗标准误
    """
    theta = _as_params(theta)
    strategy = model.normalizer
    if model.conditions_on_ancillary and a is None:
        raise ValueError("ancillary conditioning requires the observed ancillary a")

    if strategy.kind == "closed-form":
        log_phi, se = float(strategy.log_closed_form(theta, a)), 0.0
    elif strategy.kind == "quadrature":
        log_phi, se = _log_statistic_integral(model, theta, a), 0.0
    else:
        if model.conditions_on_ancillary:
            raise ValueError("monte-carlo normalizer cannot condition on an ancillary")
        rng = np.random.default_rng(strategy.seed)
        probs = np.array([model.selection(model.family.sampler(theta, rng)) for _ in range(strategy.n_draws)])
        mean = float(probs.mean())
        se = float(probs.std(ddof=1) / math.sqrt(strategy.n_draws)) if strategy.n_draws > 1 else INF
        log_phi = math.log(mean) if mean > 0 else -INF

    if not log_phi > LOG_MIN_SELECTION_PROBABILITY:
        raise UnsupportedSelectionError()
    return NormalizerEstimate(log_value=log_phi, std_error=se, strategy=strategy.kind)


def selection_probability(model: SelectiveModel, theta, a: Ancillary = None) -> float:
    """φ(θ) = E_θ[p(Y)]（或 φ(θ; a)）"""
    return normalizer_estimate(model, theta, a).value


def _ancillary_of(model: SelectiveModel, y) -> Ancillary:
    if not model.conditions_on_ancillary:
        return None
    return model.family.statistic(y)[1]


def selective_log_density(model: SelectiveModel, y, theta) -> float:
    """log f(y; θ) + log p(y) - log φ(θ)"""
    y = np.asarray(y, dtype=float)
    p = model.selection(y)
    if p <= 0.0:
        raise InconsistentDatumError()
    theta = _as_params(theta)
    log_phi = normalizer_estimate(model, theta, _ancillary_of(model, y)).log_value
    return model.family.log_density(y, theta) + math.log(p) - log_phi


def selective_cdf(model: SelectiveModel, y, theta) -> float:
    """
    选择性分布下统计量 T 的分布函数 P_θ(T <= t_obs | S[, a])
    """
    theta = _as_params(theta)
    t, a = model.family.statistic(y)
    a_cond = a if model.conditions_on_ancillary else None
    strategy = model.normalizer
    if strategy.closed_form_cdf is not None:
        return float(strategy.closed_form_cdf(t, theta, a_cond))
    log_total = _log_statistic_integral(model, theta, a_cond)
    log_below = _log_statistic_integral(model, theta, a_cond, hi=t)
    return min(1.0, math.exp(log_below - log_total)) if log_below > -INF else 0.0


def selective_sf(model: SelectiveModel, y, theta) -> float:
    """P_θ(T > t_obs | S[, a])"""
    theta = _as_params(theta)
    t, a = model.family.statistic(y)
    a_cond = a if model.conditions_on_ancillary else None
    strategy = model.normalizer
    if strategy.closed_form_sf is not None:
        return float(strategy.closed_form_sf(t, theta, a_cond))
    if strategy.closed_form_cdf is not None:
        return 1.0 - float(strategy.closed_form_cdf(t, theta, a_cond))
    log_total = _log_statistic_integral(model, theta, a_cond)
    log_above = _log_statistic_integral(model, theta, a_cond, lo=t)
    return min(1.0, math.exp(log_above - log_total)) if log_above > -INF else 0.0


def pvalue_from_tails(cdf: float, sf: float, alternative: Alternative) -> float:
    if alternative == "greater":
        return sf
    if alternative == "less":
        return cdf
    if alternative == "two-sided":
        return min(1.0, 2.0 * min(cdf, sf))
    raise ValueError(f"unknown alternative {alternative!r}")


def selective_pvalue(model: SelectiveModel, y, theta0, alternative: Alternative = "greater") -> float:
    """选择性分布下 H0: θ = θ0 的 p 值"""
    return pvalue_from_tails(
        selective_cdf(model, y, theta0), selective_sf(model, y, theta0), alternative
    )


# ---------------------------------------------------------------------------
# 极大似然
# ---------------------------------------------------------------------------

class MLEFit(NamedTuple):
    theta: np.ndarray
    loglik: float
    gradient_norm: float
    converged: bool = True


def _finite_gradient(fn, x: np.ndarray, bounds) -> np.ndarray:
    grad = np.zeros_like(x)
    for i in range(x.size):
        h = 1e-4 * max(1.0, abs(x[i]))
        lo, hi = bounds[i]
        up, down = x.copy(), x.copy()
        up[i] = min(x[i] + h, hi)
        down[i] = max(x[i] - h, lo)
        grad[i] = (fn(up) - fn(down)) / (up[i] - down[i])
    return grad


def maximize_loglik(
    loglik: Callable[[np.ndarray], float],
    start,
    bounds: Sequence[Tuple[float, float]],
    seed: int = 0,
    n_starts: int = 5,
    jitter: float = 1.0,
    gradient_tol: float = GRADIENT_TOL,
) -> MLEFit:
    """
    多起点有界极大化

    起点为 start 加确定性抖动；最优点贴近边界且梯度指向外侧时判定发散。
    内部坐标的梯度范数超过 gradient_tol 时继续精修，仍不达标则标记未收敛。
    """
    bounds = [tuple(map(float, b)) for b in bounds]
    lower = np.array([b[0] for b in bounds])
    upper = np.array([b[1] for b in bounds])
    span = upper - lower
    start = np.clip(_as_params(start), lower, upper)

    def objective(x):
        v = loglik(x)
        return -v if math.isfinite(v) else 1e100

    def jac(x):
        return np.nan_to_num(-_finite_gradient(loglik, x, bounds), nan=0.0, posinf=1e100, neginf=-1e100)

    def polish(theta):
        if theta.size == 1:
            # 一维时在最优点附近用 Brent 精修
            width = max(1e-3, 1e-3 * abs(theta[0]))
            lo, hi = max(lower[0], theta[0] - width), min(upper[0], theta[0] + width)
            if hi > lo:
                res = optimize.minimize_scalar(lambda s: objective(np.array([s])), bounds=(lo, hi),
                                               method="bounded", options={"xatol": 1e-12})
                if res.fun <= objective(theta):
                    return np.array([float(res.x)])
            return theta
        res = optimize.minimize(objective, theta, jac=jac, method="L-BFGS-B", bounds=bounds,
                                options={"ftol": 1e-15, "gtol": 0.1 * gradient_tol, "maxiter": 500})
        return np.asarray(res.x, dtype=float) if res.fun <= objective(theta) else theta

    rng = np.random.default_rng(seed)
    starts = [start] + [
        np.clip(start + jitter * rng.standard_normal(start.size), lower, upper)
        for _ in range(n_starts - 1)
    ]

    best = None
    for x0 in starts:
        res = optimize.minimize(objective, x0, jac=jac, method="L-BFGS-B", bounds=bounds,
                                options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 2000})
        if best is None or res.fun < best.fun:
            best = res

    theta = polish(np.asarray(best.x, dtype=float))
    for round_ in range(REFINE_ROUNDS + 1):
        value = loglik(theta)
        if not math.isfinite(value):
            raise DivergentMLEError(direction=[0.0] * theta.size, message="non-finite likelihood")

        grad = _finite_gradient(loglik, theta, bounds)
        at_lower = (theta - lower) <= 1e-6 * span
        at_upper = (upper - theta) <= 1e-6 * span
        direction = np.where(at_lower & (grad < 0), -1.0, np.where(at_upper & (grad > 0), 1.0, 0.0))
        if np.any(direction != 0):
            logger.warning(f"MLE 发散，方向 {direction.tolist()}")
            raise DivergentMLEError(direction=direction.tolist())

        # 贴边坐标由发散判定处理，只看内部坐标
        free = ~(at_lower | at_upper)
        grad_norm = float(np.linalg.norm(grad[free]))
        if grad_norm <= gradient_tol:
            return MLEFit(theta=theta, loglik=float(value), gradient_norm=grad_norm)
        if round_ < REFINE_ROUNDS:
            theta = polish(theta)

    logger.warning(f"MLE 未收敛: 梯度范数 {grad_norm:.3g} > {gradient_tol:g}")
    return MLEFit(theta=theta, loglik=float(value), gradient_norm=grad_norm, converged=False)


def selective_mle_fit(model: SelectiveModel, y, seed: int = 0) -> MLEFit:
    """选择性似然的极大似然拟合（5 个抖动起点），附梯度范数与收敛标记"""
    y = np.asarray(y, dtype=float)
    if model.selection(y) <= 0.0:
        raise InconsistentDatumError()
    family = model.family
    start = family.initial(y) if family.initial is not None else np.zeros(family.dimension)

    def loglik(theta):
        try:
            return selective_log_density(model, y, theta)
        except UnsupportedSelectionError:
            return -INF

    return maximize_loglik(loglik, start, family.param_bounds, seed=seed)


def selective_mle(model: SelectiveModel, y, seed: int = 0) -> np.ndarray:
    """选择性似然的极大似然估计"""
    return selective_mle_fit(model, y, seed=seed).theta


# ---------------------------------------------------------------------------
# 检验反演求置信区间
# ---------------------------------------------------------------------------

def solve_decreasing(fn, target: float, center: float, radius: float, side: str, strict: bool) -> float:
    """
    求 fn(θ) = target，fn 对 θ 单调递减；从 center 出发倍增步长括根
    """
    f_center = fn(center) - target
    if f_center == 0.0:
        return center
    # fn 递减：值偏大时根在右侧
    sign = 1.0 if f_center > 0 else -1.0
    step = 0.25
    inner = center
    while True:
        outer = center + sign * min(step, radius)
        f_outer = fn(outer) - target
        if f_outer == 0.0:
            return outer
        if (f_outer > 0) != (f_center > 0):
            a, b = sorted((inner, outer))
            return float(optimize.brentq(lambda s: fn(s) - target, a, b, xtol=1e-10, rtol=1e-14, maxiter=500))
        if step >= radius:
            break
        inner = outer
        step *= 2.0

    logger.warning(f"置信区间{side}端点在 ±{radius} 内无法括根")
    if strict:
        raise UnboundedIntervalError(side=side)
    return -INF if side == "lower" else INF


def equal_tailed_interval(
    cdf: Callable[[float], float],
    level: float,
    center: float,
    radius: float = 50.0,
    strict: bool = False,
) -> Tuple[float, float]:
    """
    等尾检验反演：解 cdf(θ) = 1 - α/2 与 α/2

    cdf 为观测统计量处的选择性分布函数，作为参数的函数单调递减。
    """
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    alpha = 1.0 - level
    lower = solve_decreasing(cdf, 1.0 - alpha / 2.0, center, radius, "lower", strict)
    upper = solve_decreasing(cdf, alpha / 2.0, center, radius, "upper", strict)
    return lower, upper


def _scalar_path(model: SelectiveModel, target: Optional[Callable[[float], Params]]):
    if target is not None:
        return target
    if model.family.dimension != 1:
        raise ValueError("a scalar target is required for multi-parameter families")
    return lambda psi: np.array([psi])


def selective_ci(
    model: SelectiveModel,
    y,
    level: float,
    target: Optional[Callable[[float], Params]] = None,
    radius: float = 50.0,
    strict: bool = False,
) -> Tuple[float, float]:
    """
    选择性置信区间（等尾、检验反演）

    target 把标量参数映射为完整参数向量；一维族默认为恒等映射。
    """
    path = _scalar_path(model, target)
    t_obs, _ = model.family.statistic(y)
    return equal_tailed_interval(
        lambda psi: selective_cdf(model, y, path(psi)), level, center=t_obs, radius=radius, strict=strict
    )


def median_unbiased_estimate(
    model: SelectiveModel,
    y,
    target: Optional[Callable[[float], Params]] = None,
    radius: float = 50.0,
) -> float:
    """解选择性分布函数 = 0.5 得到中位数无偏估计"""
    path = _scalar_path(model, target)
    t_obs, _ = model.family.statistic(y)
    return solve_decreasing(lambda psi: selective_cdf(model, y, path(psi)), 0.5, t_obs, radius, "median", strict=True)


def likelihood_ratio_interval(
    loglik: Callable[[float], float],
    estimate: float,
    level: float,
    radius: float = 50.0,
) -> Tuple[float, float]:
    """
    似然比区间 {ψ : 2(ℓ(ψ̂) - ℓ(ψ)) <= χ²_1(level)}
    """
    cutoff = 0.5 * float(chi2.ppf(level, df=1))
    peak = loglik(estimate)

    def drop(psi):
        v = loglik(psi)
        return peak - v if math.isfinite(v) else INF

    ends = []
    for sign, side in ((-1.0, "lower"), (1.0, "upper")):
        step, inner, found = 0.25, estimate, None
        while step <= 2 * radius:
            outer = estimate + sign * min(step, radius)
            if drop(outer) >= cutoff:
                a, b = sorted((inner, outer))
                found = float(optimize.brentq(lambda s: drop(s) - cutoff, a, b, xtol=1e-10))
                break
            if step >= radius:
                break
            inner, step = outer, step * 2.0
        if found is None:
            logger.warning(f"似然比区间{side}端点无法括根")
            found = sign * INF
        ends.append(found)
    return ends[0], ends[1]


def gaussian_truncation_model(
    truncation: Sequence[Tuple[float, float]],
    sigma: float = 1.0,
    n: int = 1,
    bound: float = 100.0,
) -> SelectiveModel:
    """
    样本均值被截断到区间并集的高斯模型，φ 与分布函数均为闭式
    """
    intervals = merge_intervals(truncation)
    se = sigma / math.sqrt(n)
    family = gaussian_mean_family(n=n, sigma=sigma, bound=bound)

    def inside(t, a=None):
        return 1.0 if any(lo <= t < hi for lo, hi in intervals) else 0.0

    def law(theta) -> TruncatedGaussian:
        return TruncatedGaussian(mu=float(theta[0]), sigma=se, truncation=tuple(intervals))

    def log_normalizer(theta, a):
        try:
            return law(theta).log_total_mass
        except EmptyTruncationError:
            return -INF

    selection = SelectionFunction(
        kind="deterministic",
        evaluate=lambda y: inside(float(np.mean(y))),
        reduced=inside,
        breakpoints=lambda a: [e for iv in intervals for e in iv],
    )
    return SelectiveModel(
        family=family,
        selection=selection,
        normalizer=closed_form(
            log_normalizer,
            cdf=lambda t, theta, a: truncated_cdf(t, law(theta)),
            sf=lambda t, theta, a: truncated_sf(t, law(theta)),
        ),
    )
