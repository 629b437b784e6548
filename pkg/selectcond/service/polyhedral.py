"""
多面体选择事件下线性目标的选择性推断

Y ~ N(θ, σ² I_n)，选择事件 {y : Ay <= b}（或若干多面体的并），
目标 ψ = ηᵀθ。给定 z = y - c ηᵀy（c = η/‖η‖²），ηᵀY 服从截断一维高斯。
"""
import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from selectcond.schema.inference import InferenceResult
from selectcond.service.distributions import (
    INF,
    TruncatedGaussian,
    merge_intervals,
    truncated_cdf,
    truncated_sf,
)
from selectcond.service.errors import EmptyEventError, EmptyTruncationError, InfeasiblePointError
from selectcond.service.selective_model import (
    Alternative,
    equal_tailed_interval,
    pvalue_from_tails,
    solve_decreasing,
)

logger = logging.getLogger(__name__)

FEASIBILITY_SLACK = 1e-9


@dataclass(frozen=True)
class Polyhedron:
    """{y : A y <= b}"""
    A: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        b = np.atleast_1d(np.asarray(self.b, dtype=float))
        if A.shape[0] != b.shape[0]:
            raise ValueError(f"A has {A.shape[0]} rows but b has {b.shape[0]} entries")
        A.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)

    @classmethod
    def unconstrained(cls, n: int) -> "Polyhedron":
        return cls(A=np.zeros((0, n)), b=np.zeros(0))

    @property
    def dimension(self) -> int:
        return self.A.shape[1]

    def contains(self, y, slack: float = FEASIBILITY_SLACK) -> bool:
        y = np.asarray(y, dtype=float)
        if y.shape != (self.dimension,):
            raise ValueError(f"point has shape {y.shape}, expected ({self.dimension},)")
        return bool(np.all(self.A @ y <= self.b + slack))


@dataclass(frozen=True)
class LinearTarget:
    """ψ = ηᵀθ"""
    eta: np.ndarray

    def __post_init__(self):
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        if not np.linalg.norm(eta) > 0:
            raise ValueError("eta must be nonzero")
        eta.setflags(write=False)
        object.__setattr__(self, "eta", eta)

    @property
    def norm2(self) -> float:
        return float(self.eta @ self.eta)

    def value(self, y) -> float:
        return float(self.eta @ np.asarray(y, dtype=float))


Event = Union[Polyhedron, Sequence[Polyhedron]]


def projection_target(X, s: Sequence[int], j: int) -> LinearTarget:
    """
    投影参数第 j 个系数对应的 η：[X(s)ᵀX(s)]⁻¹X(s)ᵀ 的第 j 行
    """
    X = np.asarray(X, dtype=float)
    s = list(s)
    if not 0 <= j < len(s):
        raise ValueError(f"coordinate {j} outside selected set of size {len(s)}")
    Xs = X[:, s]
    if np.linalg.matrix_rank(Xs) < len(s):
        raise ValueError("selected design X(s) is rank deficient")
    rows = np.linalg.solve(Xs.T @ Xs, Xs.T)
    return LinearTarget(eta=rows[j])


def line_interval(poly: Polyhedron, z: np.ndarray, c: np.ndarray) -> Tuple[float, float]:
    """
    {τ : z + c τ ∈ poly}，空集返回 (inf, -inf)
    """
    Az = poly.A @ z
    Ac = poly.A @ c
    resid = poly.b - Az
    lower, upper = -INF, INF
    neg, pos, flat = Ac < 0, Ac > 0, Ac == 0
    if np.any(flat & (resid < -FEASIBILITY_SLACK)):
        return INF, -INF
    if neg.any():
        lower = float(np.max(resid[neg] / Ac[neg]))
    if pos.any():
        upper = float(np.min(resid[pos] / Ac[pos]))
    return lower, upper


def _decompose(target: LinearTarget, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, float]:
    c = target.eta / target.norm2
    t = target.value(y)
    return y - c * t, c, t


def truncation_bounds(poly: Polyhedron, target: LinearTarget, y) -> Tuple[float, float]:
    """
    [V⁻, V⁺]：沿目标方向与选择事件相容的 ηᵀy 取值范围
    """
    y = np.asarray(y, dtype=float)
    if not poly.contains(y):
        raise InfeasiblePointError()
    z, c, t = _decompose(target, y)
    if np.any((poly.A @ target.eta == 0) & (poly.A @ z > poly.b + FEASIBILITY_SLACK)):
        raise EmptyEventError()
    lower, upper = line_interval(poly, z, c)
    # 浮点误差下保证区间包含观测值
    return min(lower, t), max(upper, t)


def _as_union(event: Event) -> List[Polyhedron]:
    if isinstance(event, Polyhedron):
        return [event]
    union = list(event)
    if not union:
        raise EmptyEventError("empty union of polyhedra")
    return union


def truncation_set(event: Event, target: LinearTarget, y) -> List[Tuple[float, float]]:
    """多面体并沿目标方向的截断集合（合并后的区间列表）"""
    y = np.asarray(y, dtype=float)
    union = _as_union(event)
    if not any(p.contains(y) for p in union):
        raise InfeasiblePointError()
    z, c, t = _decompose(target, y)

    intervals = []
    for poly in union:
        lo, hi = line_interval(poly, z, c)
        if poly.contains(y):
            lo, hi = min(lo, t), max(hi, t)
        if hi > lo:
            intervals.append((lo, hi))
    merged = merge_intervals(intervals)
    if not merged:
        raise EmptyTruncationError()
    return merged


def target_law(event: Event, target: LinearTarget, y, sigma2: float, psi: float) -> TruncatedGaussian:
    if not sigma2 > 0:
        raise ValueError("sigma2 must be positive")
    sd = math.sqrt(sigma2 * target.norm2)
    return TruncatedGaussian(mu=psi, sigma=sd, truncation=tuple(truncation_set(event, target, y)))


def selective_pvalue_linear(
    event: Event,
    target: LinearTarget,
    y,
    sigma2: float,
    psi0: float = 0.0,
    alternative: Alternative = "two-sided",
) -> float:
    """H0: ηᵀθ = psi0 的选择性 p 值"""
    law = target_law(event, target, y, sigma2, psi0)
    t = target.value(y)
    return pvalue_from_tails(truncated_cdf(t, law), truncated_sf(t, law), alternative)


def selective_ci_linear(
    event: Event,
    target: LinearTarget,
    y,
    sigma2: float,
    level: float,
) -> Tuple[float, float]:
    """反演截断高斯分布函数得到 ηᵀθ 的等尾区间"""
    intervals = tuple(truncation_set(event, target, y))
    sd = math.sqrt(sigma2 * target.norm2)
    t = target.value(y)

    def cdf(psi):
        return truncated_cdf(t, TruncatedGaussian(mu=psi, sigma=sd, truncation=intervals))

    return equal_tailed_interval(cdf, level, center=t, radius=50.0 * sd)


def _screening_rows(X: np.ndarray, s: Sequence[int], signs: Sequence[float], threshold: float):
    rows, rhs = [], []
    selected = set(s)
    for j in range(X.shape[1]):
        x = X[:, j]
        if j in selected:
            sign = signs[list(s).index(j)]
            rows.append(-sign * x)
            rhs.append(-threshold)
        else:
            rows.append(x)
            rhs.append(threshold)
            rows.append(-x)
            rhs.append(threshold)
    return Polyhedron(A=np.array(rows).reshape(-1, X.shape[0]), b=np.array(rhs))


def marginal_screening_event(
    X,
    y,
    threshold: float,
    condition_on_signs: bool = True,
) -> Tuple[Tuple[int, ...], Event]:
    """
    边际筛选 s = {j : |x_jᵀy| > threshold} 及其选择事件

    condition_on_signs 时返回观测符号对应的单个多面体，
    否则返回所有符号组合的多面体并（恰为 {ỹ : s(ỹ) = s}）。
    s 为空时由调用方决定如何处理。
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    scores = X.T @ y
    s = tuple(int(j) for j in np.flatnonzero(np.abs(scores) > threshold))
    if not s:
        logger.debug("边际筛选未选中任何变量")
    signs = [float(np.sign(scores[j])) for j in s]
    if condition_on_signs:
        return s, _screening_rows(X, s, signs, threshold)
    union = [
        _screening_rows(X, s, pattern, threshold)
        for pattern in itertools.product((-1.0, 1.0), repeat=len(s))
    ]
    return s, union


def polyhedral_inference(
    event: Event,
    target: LinearTarget,
    y,
    sigma2: float,
    level: float,
    psi0: float = 0.0,
) -> InferenceResult:
    """
    ηᵀθ 的推断结果：中位数无偏点估计、等尾区间、双侧 p 值

    观测值 ηᵀy 可能位于截断边界，不一定落在区间内，点估计取截断分布函数等于 0.5 的解。
    """
    intervals = tuple(truncation_set(event, target, y))
    sd = math.sqrt(sigma2 * target.norm2)
    t = target.value(y)

    def cdf(psi):
        return truncated_cdf(t, TruncatedGaussian(mu=psi, sigma=sd, truncation=intervals))

    ci = equal_tailed_interval(cdf, level, center=t, radius=50.0 * sd)
    estimate = solve_decreasing(cdf, 0.5, t, 50.0 * sd, "median", strict=False)
    null_law = TruncatedGaussian(mu=psi0, sigma=sd, truncation=intervals)
    flags = [] if all(map(math.isfinite, ci)) else ["unbounded-ci"]
    return InferenceResult(
        estimate=estimate,
        ci=ci,
        pvalue=pvalue_from_tails(truncated_cdf(t, null_law), truncated_sf(t, null_law), "two-sided"),
        model_kind="polyhedral",
        diagnostics={
            "normalizer": "closed-form",
            "statistic": t,
            "truncation": [list(iv) for iv in intervals],
            "flags": flags,
        },
    )
