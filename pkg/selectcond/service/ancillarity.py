"""
有限离散模型上的辅助性检查

G 型：固定 ψ 时 A 对 χ 完备（网格完备性，在支撑上满秩）。
M 型：每个 a 都是某个 χ 下分布的近似众数。
选择后的表 f_S(a; ψ, χ) = φ(ψ; a) f_A(a; ψ, χ) / φ(ψ, χ)。
"""
import logging
from dataclasses import dataclass

import numpy as np

from selectcond.schema.ancillarity import AncillarityCheck, PreservationReport, PsiPreservation
from selectcond.service.errors import UnsupportedSelectionError

logger = logging.getLogger(__name__)

RANK_TOL = 1e-10
SUM_TOL = 1e-12


@dataclass(frozen=True)
class FiniteModel:
    """P×C×K 概率表 f_A(a; ψ, χ)"""
    a_space: tuple
    psi_grid: tuple
    chi_grid: tuple
    table: np.ndarray

    def __post_init__(self):
        table = np.asarray(self.table, dtype=float)
        shape = (len(self.psi_grid), len(self.chi_grid), len(self.a_space))
        if table.shape != shape:
            raise ValueError(f"table has shape {table.shape}, expected {shape}")
        if not np.all(np.isfinite(table)) or np.any(table < 0):
            raise ValueError("table entries must be finite and non-negative")
        sums = table.sum(axis=2)
        if np.max(np.abs(sums - 1.0)) > SUM_TOL:
            raise ValueError(f"slices must sum to 1, max deviation {np.max(np.abs(sums - 1.0))}")
        table.setflags(write=False)
        object.__setattr__(self, "a_space", tuple(self.a_space))
        object.__setattr__(self, "psi_grid", tuple(self.psi_grid))
        object.__setattr__(self, "chi_grid", tuple(self.chi_grid))
        object.__setattr__(self, "table", table)

    @property
    def shape(self):
        return self.table.shape

    @classmethod
    def from_table(cls, table) -> "FiniteModel":
        """用下标作为网格值"""
        table = np.asarray(table, dtype=float)
        P, C, K = table.shape
        return cls(a_space=tuple(range(K)), psi_grid=tuple(range(P)), chi_grid=tuple(range(C)), table=table)

    @classmethod
    def random(cls, rng: np.random.Generator, P: int, C: int, K: int, sparsity: float = 0.0) -> "FiniteModel":
        """
        Dirichlet 随机表；sparsity > 0 时按该概率把元素置零（每个切片至少保留一个点）
        """
        table = rng.dirichlet(np.ones(K), size=(P, C))
        if sparsity > 0:
            mask = rng.random((P, C, K)) < sparsity
            keep = rng.integers(K, size=(P, C))
            mask[np.arange(P)[:, None], np.arange(C)[None, :], keep] = False
            table = np.where(mask, 0.0, table)
        table = table / table.sum(axis=2, keepdims=True)
        return cls.from_table(table)


@dataclass(frozen=True)
class FiniteSelection:
    """P×K 选择概率 φ(ψ; a)"""
    phi_psi_a: np.ndarray

    def __post_init__(self):
        phi = np.atleast_2d(np.asarray(self.phi_psi_a, dtype=float))
        if not np.all(np.isfinite(phi)) or np.any(phi < 0) or np.any(phi > 1):
            raise ValueError("selection probabilities must lie in [0, 1]")
        phi.setflags(write=False)
        object.__setattr__(self, "phi_psi_a", phi)

    @property
    def strictly_positive(self) -> bool:
        return bool(np.all(self.phi_psi_a > 0))

    def constant_in_a(self, psi_index: int) -> bool:
        row = self.phi_psi_a[psi_index]
        return bool(np.all(row == row[0]))

    @classmethod
    def constant(cls, P: int, K: int, value: float = 1.0) -> "FiniteSelection":
        return cls(np.full((P, K), float(value)))

    @classmethod
    def random(cls, rng: np.random.Generator, P: int, K: int, low: float = 0.05, high: float = 1.0) -> "FiniteSelection":
        return cls(rng.uniform(low, high, size=(P, K)))


def _check_compatible(model: FiniteModel, sel: FiniteSelection):
    P, _, K = model.shape
    if sel.phi_psi_a.shape != (P, K):
        raise ValueError(f"selection has shape {sel.phi_psi_a.shape}, expected {(P, K)}")


# ---------------------------------------------------------------------------
# G 型辅助性
# ---------------------------------------------------------------------------

def rank_over_support(matrix, tol: float = RANK_TOL):
    """
    行为分布、列为样本点的矩阵在公共支撑上的秩

    返回 (rank, support, Vt)，SVD 容差相对最大奇异值。
    """
    matrix = np.atleast_2d(np.asarray(matrix, dtype=float))
    support = np.flatnonzero(np.any(matrix > 0, axis=0))
    if support.size == 0:
        raise ValueError("empty support")
    sub = matrix[:, support]
    _, s, vt = np.linalg.svd(sub, full_matrices=True)
    rank = int(np.sum(s > tol * s[0])) if s.size else 0
    return rank, support, vt


def is_G_ancillary(model: FiniteModel, psi_index: int) -> AncillarityCheck:
    """固定 ψ 时 {f_A(·; ψ, χ)} 在 χ 网格上是否完备"""
    rank, support, vt = rank_over_support(model.table[psi_index])
    complete = rank == support.size
    witness = None
    if not complete:
        g = np.zeros(len(model.a_space))
        g[support] = vt[rank]
        witness = g.tolist()
    return AncillarityCheck(
        holds=complete,
        psi_index=psi_index,
        label="grid-complete",
        rank=rank,
        support_size=int(support.size),
        witness=witness,
    )


def selection_totals(model: FiniteModel, sel: FiniteSelection) -> np.ndarray:
    """φ(ψ, χ) = Σ_a f_A(a; ψ, χ) φ(ψ; a)，P×C"""
    _check_compatible(model, sel)
    return np.einsum("pck,pk->pc", model.table, sel.phi_psi_a)


def apply_selection(model: FiniteModel, sel: FiniteSelection) -> FiniteModel:
    """选择性模型的表 f_S(a; ψ, χ)"""
    totals = selection_totals(model, sel)
    if np.any(totals <= 0):
        p, c = np.argwhere(totals <= 0)[0]
        raise UnsupportedSelectionError(f"zero selection probability at psi={p}, chi={c}")
    weighted = model.table * sel.phi_psi_a[:, None, :]
    table = weighted / totals[:, :, None]
    table = table / table.sum(axis=2, keepdims=True)
    return FiniteModel(a_space=model.a_space, psi_grid=model.psi_grid, chi_grid=model.chi_grid, table=table)


def check_G_preservation(model: FiniteModel, sel: FiniteSelection, allow_zero: bool = False) -> PreservationReport:
    """
    对每个 ψ 比较选择前后的网格完备性

    φ 有零元时前提不成立，默认跳过；allow_zero 时照常计算（反例模式）。
    """
    _check_compatible(model, sel)
    if not sel.strictly_positive and not allow_zero:
        logger.info("选择概率存在零元，跳过 G 型保持检查")
        return PreservationReport(kind="G", status="hypothesis-violated")

    selective = apply_selection(model, sel)
    per_psi = []
    for p in range(model.shape[0]):
        before = is_G_ancillary(model, p).holds
        after = is_G_ancillary(selective, p).holds
        per_psi.append(PsiPreservation(
            psi_index=p, before=before, after=after, equivalence_checked=True, holds=before == after,
        ))
    status = "preserved" if all(r.holds for r in per_psi) else "violated"
    if status == "violated" and sel.strictly_positive:
        logger.error("正选择概率下 G 型辅助性未保持")
    return PreservationReport(kind="G", status=status, counterexample_mode=allow_zero, per_psi=per_psi)


def g_counterexample():
    """
    K=2, C=1, f = (0.5, 0.5), φ = (1, 0)

    原模型不完备（单行无法区分两个点），选择后支撑缩为一点，变为完备。
    """
    model = FiniteModel.from_table([[[0.5, 0.5]]])
    sel = FiniteSelection([[1.0, 0.0]])
    return model, sel


# ---------------------------------------------------------------------------
# M 型辅助性
# ---------------------------------------------------------------------------

def is_M_ancillary(model: FiniteModel, psi_index: int, epsilon: float) -> AncillarityCheck:
    """每个 a 是否存在 χ 使 f(a; ψ, χ) > (1 - ε) max_ã f(ã; ψ, χ)"""
    if not 0.0 < epsilon < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {epsilon}")
    slab = model.table[psi_index]
    modes = slab.max(axis=1, keepdims=True)
    near_mode = slab > (1.0 - epsilon) * modes
    failing = np.flatnonzero(~near_mode.any(axis=0))
    return AncillarityCheck(
        holds=failing.size == 0,
        psi_index=psi_index,
        label="mode-condition",
        failing_points=failing.tolist(),
        epsilon=epsilon,
    )


def relaxed_epsilon(sel: FiniteSelection, psi_index: int, epsilon: float) -> float:
    """ε′ = 1 - (1 - ε) min_a φ / max_a φ"""
    row = sel.phi_psi_a[psi_index]
    return float(1.0 - (1.0 - epsilon) * row.min() / row.max())


def check_M_preservation(model: FiniteModel, sel: FiniteSelection, epsilon: float) -> PreservationReport:
    """
    检查 M 型辅助性在选择下的保持

    原模型在 ε 下成立 ⇒ 选择性模型在 ε′ 下成立；
    φ 关于 a 为常数时检查 ε 下的双向等价。
    """
    _check_compatible(model, sel)
    if not sel.strictly_positive:
        logger.info("选择概率存在零元，跳过 M 型保持检查")
        return PreservationReport(kind="M", status="hypothesis-violated", epsilon=epsilon)

    selective = apply_selection(model, sel)
    per_psi = []
    for p in range(model.shape[0]):
        before = is_M_ancillary(model, p, epsilon).holds
        if sel.constant_in_a(p):
            after = is_M_ancillary(selective, p, epsilon).holds
            per_psi.append(PsiPreservation(
                psi_index=p, before=before, after=after, epsilon_prime=epsilon,
                equivalence_checked=True, holds=before == after,
            ))
            continue
        eps_prime = relaxed_epsilon(sel, p, epsilon)
        after = is_M_ancillary(selective, p, eps_prime).holds
        per_psi.append(PsiPreservation(
            psi_index=p, before=before, after=after, epsilon_prime=eps_prime,
            holds=(not before) or after,
        ))
    status = "preserved" if all(r.holds for r in per_psi) else "violated"
    return PreservationReport(kind="M", status=status, epsilon=epsilon, per_psi=per_psi)


def point_mass_model(K: int, P: int = 1) -> FiniteModel:
    """χ = a 索引的点质量族 δ_a"""
    table = np.broadcast_to(np.eye(K), (P, K, K)).copy()
    return FiniteModel.from_table(table)

