"""
推断结果相关的 Pydantic 模型
"""
import math
from typing import Any, Dict, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator


class InferenceResult(BaseModel):
    """单次选择性推断结果"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    estimate: float = Field(..., description="点估计")
    ci: Tuple[float, float] = Field(..., description="置信区间 (lower, upper)")
    pvalue: float = Field(..., ge=0.0, le=1.0, description="p 值")
    model_kind: str = Field(..., description="模型标签")
    diagnostics: Dict[str, Any] = Field(default_factory=dict, description="归一化策略、标准误、发散标记等")

    @model_validator(mode="after")
    def check_ordering(self):
        lower, upper = self.ci
        if lower > upper:
            raise ValueError(f"interval endpoints out of order: {self.ci}")
        if all(math.isfinite(v) for v in (lower, self.estimate, upper)):
            slack = 1e-8 * max(1.0, abs(self.estimate))
            if not lower - slack <= self.estimate <= upper + slack:
                raise ValueError(f"estimate {self.estimate} outside interval {self.ci}")
        return self

    @property
    def length(self) -> float:
        return self.ci[1] - self.ci[0]

    @property
    def flags(self) -> list:
        return list(self.diagnostics.get("flags", []))

    def covers(self, value: float) -> bool:
        return self.ci[0] <= value <= self.ci[1]


class PairedInferenceResult(BaseModel):
    """两种抽样模型下的推断对比"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    first: InferenceResult
    second: InferenceResult
    estimate_delta: float = Field(..., description="first - second 点估计差")
    length_delta: float = Field(..., description="first - second 区间长度差")
