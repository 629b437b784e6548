"""
高斯与截断高斯基础分布

所有尾部概率都在对数空间计算，区间质量用 log-survival 差分，
避免 8σ 之外 Φ(b) - Φ(a) 的下溢。截断区间内部按半开区间 [l, u) 处理。
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import optimize, special

from selectcond.service.errors import EmptyTruncationError

logger = logging.getLogger(__name__)

INF = math.inf
Interval = Tuple[float, float]

# 单侧尾部超过该阈值时改用平移指数提议的拒绝采样
TAIL_REJECTION_CUTOFF = 6.0


def std_normal_cdf(x: float) -> float:
    """标准正态分布函数 Φ(x)"""
    return float(special.ndtr(x))


def std_normal_logcdf(x: float) -> float:
    """log Φ(x)"""
    return float(special.log_ndtr(x))


def std_normal_logsf(x: float) -> float:
    """log(1 - Φ(x))，深尾部仍然有限"""
    return float(special.log_ndtr(-x))


def log_diff_exp(log_hi: float, log_lo: float) -> float:
    """log(exp(log_hi) - exp(log_lo))，要求 log_hi >= log_lo"""
    if log_lo == -INF:
        return log_hi
    d = log_lo - log_hi
    if d >= 0.0:
        return -INF
    return log_hi + math.log(-math.expm1(d))


def log_standard_mass(a: float, b: float) -> float:
    """log P(a <= Z < b)，Z 为标准正态"""
    if not b > a:
        return -INF
    if a > 0.0:
        # 上尾：用生存函数差分
        return log_diff_exp(std_normal_logsf(a), std_normal_logsf(b))
    return log_diff_exp(std_normal_logcdf(b), std_normal_logcdf(a))


def merge_intervals(intervals: Iterable[Sequence[float]]) -> List[Interval]:
    """
    排序并合并重叠或相接的区间，丢弃空区间
    """
    cleaned = []
    for lo, hi in intervals:
        lo, hi = float(lo), float(hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("truncation endpoints must not be NaN")
        if hi > lo:
            cleaned.append((lo, hi))
    cleaned.sort()

    merged: List[Interval] = []
    for lo, hi in cleaned:
        if merged and lo <= merged[-1][1]:
            merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
        else:
            merged.append((lo, hi))
    return merged


@dataclass(frozen=True)
class TruncatedGaussian:
    """截断到若干不相交区间并集上的一维高斯分布"""
    mu: float
    sigma: float
    truncation: Tuple[Interval, ...] = ((-INF, INF),)
    _log_masses: Tuple[float, ...] = field(init=False, repr=False, compare=False)
    _log_total: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.mu):
            raise ValueError(f"mu must be finite, got {self.mu}")
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive and finite, got {self.sigma}")

        intervals = merge_intervals(self.truncation)
        if not intervals:
            raise EmptyTruncationError()

        log_masses = tuple(
            log_standard_mass(self.standardize(lo), self.standardize(hi)) for lo, hi in intervals
        )
        log_total = float(special.logsumexp(log_masses))
        if not math.isfinite(log_total):
            raise EmptyTruncationError()

        object.__setattr__(self, "truncation", tuple(intervals))
        object.__setattr__(self, "_log_masses", log_masses)
        object.__setattr__(self, "_log_total", log_total)

    def standardize(self, x: float) -> float:
        return (x - self.mu) / self.sigma

    @property
    def lower(self) -> float:
        return self.truncation[0][0]

    @property
    def upper(self) -> float:
        return self.truncation[-1][1]

    @property
    def log_total_mass(self) -> float:
        """截断集合在未截断分布下的对数质量 log Z"""
        return self._log_total

    @property
    def interval_probabilities(self) -> np.ndarray:
        """各区间在截断分布下的概率"""
        return np.exp(np.asarray(self._log_masses) - self._log_total)

    def contains(self, x: float) -> bool:
        return any(lo <= x < hi for lo, hi in self.truncation)


def _partial_log_masses(x: float, tg: TruncatedGaussian, upper: bool) -> List[float]:
    out = []
    for lo, hi in tg.truncation:
        if upper:
            if x >= hi:
                continue
            a, b = max(x, lo), hi
        else:
            if x <= lo:
                continue
            a, b = lo, min(x, hi)
        out.append(log_standard_mass(tg.standardize(a), tg.standardize(b)))
    return out


def truncated_log_cdf(x: float, tg: TruncatedGaussian) -> float:
    """log P(T <= x | T ∈ truncation)"""
    parts = _partial_log_masses(x, tg, upper=False)
    if not parts:
        return -INF
    return min(0.0, float(special.logsumexp(parts)) - tg.log_total_mass)


def truncated_log_sf(x: float, tg: TruncatedGaussian) -> float:
    """log P(T > x | T ∈ truncation)"""
    parts = _partial_log_masses(x, tg, upper=True)
    if not parts:
        return -INF
    return min(0.0, float(special.logsumexp(parts)) - tg.log_total_mass)


def truncated_cdf(x: float, tg: TruncatedGaussian) -> float:
    """截断高斯分布函数"""
    return math.exp(truncated_log_cdf(x, tg))


def truncated_sf(x: float, tg: TruncatedGaussian) -> float:
    """截断高斯生存函数，小 p 值时比 1 - cdf 精确"""
    return math.exp(truncated_log_sf(x, tg))


def truncated_logpdf(x: float, tg: TruncatedGaussian) -> float:
    if not tg.contains(x):
        return -INF
    z = tg.standardize(x)
    return -0.5 * z * z - 0.5 * math.log(2 * math.pi) - math.log(tg.sigma) - tg.log_total_mass


def _finite_bracket(lo: float, hi: float, tg: TruncatedGaussian) -> Tuple[float, float]:
    width = 40.0 * tg.sigma
    if lo == -INF:
        lo = min(hi, tg.mu) - width
    if hi == INF:
        hi = max(lo, tg.mu) + width
    return lo, hi


def truncated_quantile(q: float, tg: TruncatedGaussian) -> float:
    """
    截断高斯分位数

    先按区间累计概率定位区间，再在区间内用 Brent 法求根；
    q > 0.5 时改解生存函数方程以保留上尾精度。
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"quantile level must lie in (0, 1), got {q}")

    probs = tg.interval_probabilities
    cumulative = np.cumsum(probs)
    index = int(min(np.searchsorted(cumulative, q), len(probs) - 1))
    lo, hi = _finite_bracket(*tg.truncation[index], tg)

    if q <= 0.5:
        def objective(x):
            return truncated_cdf(x, tg) - q
    else:
        tail = 1.0 - q

        def objective(x):
            return tail - truncated_sf(x, tg)

    f_lo, f_hi = objective(lo), objective(hi)
    if f_lo >= 0.0:
        return lo
    if f_hi <= 0.0:
        return hi
    return float(optimize.brentq(objective, lo, hi, xtol=1e-14 * tg.sigma, maxiter=500))


def _exponential_tail(a: float, b: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """标准正态截断到 [a, b)（a 很大）时，以平移指数分布为提议的拒绝采样"""
    rate = 0.5 * (a + math.sqrt(a * a + 4.0))
    out = np.empty(size)
    filled = 0
    while filled < size:
        batch = max(2 * (size - filled), 16)
        z = a + rng.exponential(1.0 / rate, size=batch)
        accept = (rng.random(batch) <= np.exp(-0.5 * (z - rate) ** 2)) & (z < b)
        take = z[accept][: size - filled]
        out[filled: filled + take.size] = take
        filled += take.size
    return out


def _standard_interval_draws(a: float, b: float, size: int, rng: np.random.Generator) -> np.ndarray:
    if a >= TAIL_REJECTION_CUTOFF:
        return _exponential_tail(a, b, size, rng)
    if b <= -TAIL_REJECTION_CUTOFF:
        return -_exponential_tail(-b, -a, size, rng)

    u = rng.random(size)
    if a > 0.0:
        s_a, s_b = special.ndtr(-a), special.ndtr(-b)
        z = -special.ndtri(s_a - u * (s_a - s_b))
    else:
        c_a, c_b = special.ndtr(a), special.ndtr(b)
        z = special.ndtri(c_a + u * (c_b - c_a))
    return z


def truncated_sample(
    tg: TruncatedGaussian,
    rng: np.random.Generator,
    size: Optional[int] = None,
) -> Union[float, np.ndarray]:
    """
    从截断高斯分布抽样

    默认逆变换；单侧截断超过 6σ 时使用拒绝采样。
    """
    n = 1 if size is None else int(size)
    probs = tg.interval_probabilities
    if len(probs) == 1:
        counts = np.array([n])
    else:
        counts = rng.multinomial(n, probs / probs.sum())

    draws = []
    for (lo, hi), count in zip(tg.truncation, counts):
        if count == 0:
            continue
        z = _standard_interval_draws(tg.standardize(lo), tg.standardize(hi), int(count), rng)
        x = tg.mu + tg.sigma * z
        # 逆变换舍入可能越过端点
        x = np.clip(x, lo, np.nextafter(hi, -INF) if math.isfinite(hi) else hi)
        draws.append(x)

    values = np.concatenate(draws)
    if len(draws) > 1:
        values = rng.permutation(values)
    if size is None:
        return float(values[0])
    return values
