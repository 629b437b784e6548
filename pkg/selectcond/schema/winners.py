"""
赢家推断相关的 Pydantic 模型
"""
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, Field, field_validator, model_validator

WinnersModelKind = Literal["full-vector", "conditional-on-losers"]


class WinnersData(BaseModel):
    """m 个独立高斯观测及被选中的最大者"""
    y: List[float] = Field(..., min_length=2, description="观测向量")
    sigma: float = Field(default=1.0, gt=0, description="公共已知标准差")
    selected_index: Optional[int] = Field(default=None, description="最大值下标（0 起），并列取最小下标")

    @field_validator("y")
    @classmethod
    def check_finite(cls, v):
        if not np.all(np.isfinite(v)):
            raise ValueError("observations must be finite")
        return v

    @model_validator(mode="after")
    def check_selected(self):
        winner = int(np.argmax(self.y))
        if self.selected_index is None:
            self.selected_index = winner
        elif self.selected_index != winner:
            raise ValueError(f"selected_index {self.selected_index} does not attain the maximum")
        return self

    @property
    def winner(self) -> float:
        return self.y[self.selected_index]

    @property
    def losers(self) -> List[float]:
        return [v for i, v in enumerate(self.y) if i != self.selected_index]
