"""
有限模型辅助性检查相关的 Pydantic 模型
"""
from typing import List, Literal, Optional

from pydantic import BaseModel, Field


PreservationStatus = Literal["preserved", "violated", "hypothesis-violated"]


class AncillarityCheck(BaseModel):
    """单个 ψ 上的辅助性检查结果"""
    holds: bool = Field(..., description="检查是否通过")
    psi_index: int = Field(..., ge=0, description="ψ 网格下标")
    label: Literal["grid-complete", "mode-condition"] = Field(..., description="检查类型")
    rank: Optional[int] = Field(None, description="支撑上的矩阵秩")
    support_size: Optional[int] = Field(None, description="公共支撑大小")
    witness: Optional[List[float]] = Field(None, description="不完备时的零空间向量 g（长度 K）")
    failing_points: List[int] = Field(default_factory=list, description="不满足众数条件的 a 下标")
    epsilon: Optional[float] = Field(None, description="众数条件容差")


class PsiPreservation(BaseModel):
    psi_index: int = Field(..., ge=0)
    before: bool = Field(..., description="原模型中是否成立")
    after: bool = Field(..., description="选择性模型中是否成立")
    epsilon_prime: Optional[float] = Field(None, description="选择性模型使用的放宽容差 ε′")
    equivalence_checked: bool = Field(False, description="是否检查双向等价")
    holds: bool = Field(..., description="该 ψ 上的结论是否成立")


class PreservationReport(BaseModel):
    """选择前后辅助性保持的检查报告"""
    kind: Literal["G", "M"] = Field(..., description="G: 完备性；M: 众数条件")
    status: PreservationStatus
    epsilon: Optional[float] = None
    counterexample_mode: bool = Field(False, description="允许零选择概率")
    per_psi: List[PsiPreservation] = Field(default_factory=list)

    @property
    def holds(self) -> bool:
        return self.status == "preserved"


class AuditSummary(BaseModel):
    """随机审计汇总"""
    kind: Literal["G", "M"]
    n_cases: int = Field(..., ge=0)
    n_preserved: int = Field(..., ge=0)
    n_violated: int = Field(..., ge=0)
    n_skipped: int = Field(0, ge=0, description="前提不满足而跳过的个数")
    epsilon: Optional[float] = None
    counterexample: Optional[PreservationReport] = Field(None, description="构造的反例检查结果")
    counterexample_witness: Optional[List[float]] = Field(None, description="反例原模型的零空间向量")

    @property
    def failed(self) -> bool:
        """正选择概率下出现不保持"""
        return self.n_violated > 0
