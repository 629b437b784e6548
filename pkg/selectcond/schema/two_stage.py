"""
两阶段模型相关的 Pydantic 模型
"""
import math
from typing import List, Literal

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator


class SampleSizePrior(BaseModel):
    """第一阶段样本量的已知分布 f_N1(n1)，支撑有限"""
    support: List[int] = Field(..., min_length=1, description="样本量取值")
    probs: List[float] = Field(..., min_length=1, description="对应概率")

    @model_validator(mode="after")
    def check_simplex(self):
        if len(self.support) != len(self.probs):
            raise ValueError("support and probs must have the same length")
        if len(set(self.support)) != len(self.support):
            raise ValueError("support values must be distinct")
        if any(n < 1 for n in self.support):
            raise ValueError("sample sizes must be positive")
        if any(p < 0 for p in self.probs):
            raise ValueError("probabilities must be nonnegative")
        if abs(math.fsum(self.probs) - 1.0) > 1e-12:
            raise ValueError(f"probabilities sum to {math.fsum(self.probs)}, expected 1")
        return self

    @classmethod
    def point_mass(cls, n1: int) -> "SampleSizePrior":
        return cls(support=[n1], probs=[1.0])

    @classmethod
    def uniform(cls, support: List[int]) -> "SampleSizePrior":
        return cls(support=list(support), probs=[1.0 / len(support)] * len(support))

    def prob(self, n1: int) -> float:
        for n, p in zip(self.support, self.probs):
            if n == n1:
                return p
        return 0.0

    @property
    def mean(self) -> float:
        return float(np.dot(self.support, self.probs))


class TwoStageData(BaseModel):
    """两阶段数据：第一阶段通过检验后才收集第二阶段"""
    stage1: List[float] = Field(..., min_length=1, description="第一阶段观测")
    stage2: List[float] = Field(default_factory=list, description="第二阶段观测")
    threshold: float = Field(default=1.96, description="选择阈值 z：sum(stage1) > z·sqrt(n1)")
    selection: Literal["deterministic", "randomized"] = Field(
        default="deterministic", description="确定性选择要求数据满足阈值"
    )

    @field_validator("stage1", "stage2")
    @classmethod
    def check_finite(cls, v):
        if not np.all(np.isfinite(v)):
            raise ValueError("observations must be finite")
        return v

    @model_validator(mode="after")
    def check_selected(self):
        if self.selection == "deterministic" and not self.stage1_sum > self.threshold * math.sqrt(self.n1):
            raise ValueError("stage-1 data did not pass the selection test")
        return self

    @property
    def n1(self) -> int:
        return len(self.stage1)

    @property
    def n2(self) -> int:
        return len(self.stage2)

    @property
    def n(self) -> int:
        return self.n1 + self.n2

    @property
    def stage1_sum(self) -> float:
        return math.fsum(self.stage1)

    @property
    def total_sum(self) -> float:
        return math.fsum(self.stage1) + math.fsum(self.stage2)

    @property
    def values(self) -> np.ndarray:
        return np.asarray(self.stage1 + self.stage2, dtype=float)
