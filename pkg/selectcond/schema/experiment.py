"""
实验配置与汇总相关的 Pydantic 模型
"""
import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator, model_validator

from selectcond.schema.winners import WinnersModelKind


ScenarioName = Literal[
    "winners-compare",
    "winners-coverage",
    "polyhedral-uniformity",
    "polyhedral-coverage",
    "two-stage-compare",
    "location-coverage",
    "ancillarity-audit",
    "file-drawer",
]

MetricName = Literal["coverage", "median_length", "ks_statistic", "mean_estimate", "median_length_ratio", "n_failed"]

ROW_COLUMNS = ["rep", "model", "estimate", "lo", "hi", "covered", "length", "pvalue", "flags"]
AUDIT_COLUMNS = ["rep", "kind", "P", "C", "K", "status", "holds", "epsilon_prime_max", "flags"]


class _ScenarioParams(BaseModel):
    """场景参数基类，拒绝未知字段"""
    model_config = ConfigDict(extra="forbid")

    n_reps: int = Field(1000, ge=1, description="重复次数")


class WinnersParams(_ScenarioParams):
    theta: List[float] = Field(default_factory=lambda: [1.0, 0.0, 0.0, 0.0, 0.0], min_length=2, description="均值向量 θ")
    sigma: float = Field(1.0, gt=0, description="已知标准差")
    models: List[WinnersModelKind] = Field(
        default_factory=lambda: ["conditional-on-losers"], min_length=1, description="参与比较的抽样模型"
    )
    winner_index: Optional[int] = Field(None, ge=0, description="只保留该下标获胜的重复（0 起），None 表示任意赢家")
    face_value: bool = Field(True, description="同时输出忽略选择的朴素区间")

    @model_validator(mode="after")
    def check_index(self):
        if self.winner_index is not None and self.winner_index >= len(self.theta):
            raise ValueError(f"winner_index {self.winner_index} outside theta of length {len(self.theta)}")
        return self


class WinnersCompareParams(WinnersParams):
    theta: List[float] = Field(default_factory=lambda: [0.0, 0.5, 1.0, 1.5, 2.0], min_length=2)
    models: List[WinnersModelKind] = Field(default_factory=lambda: ["full-vector", "conditional-on-losers"], min_length=1)
    n_reps: int = Field(2000, ge=1)


class WinnersCoverageParams(WinnersParams):
    n_reps: int = Field(10_000, ge=1)


class PolyhedralParams(_ScenarioParams):
    n: int = Field(20, ge=2, description="样本量")
    p: int = Field(5, ge=1, description="候选变量数")
    threshold: float = Field(1.5, gt=0, description="边际筛选阈值（单位范数列）")
    sigma2: float = Field(1.0, gt=0, description="已知噪声方差")
    beta: List[float] = Field(default_factory=list, description="真实系数，不足 p 个时补零")
    condition_on_signs: bool = Field(True, description="是否同时条件于符号")
    n_reps: int = Field(10_000, ge=1)

    @model_validator(mode="after")
    def check_beta(self):
        if len(self.beta) > self.p:
            raise ValueError(f"beta has {len(self.beta)} entries but p={self.p}")
        return self


class TwoStageCompareParams(_ScenarioParams):
    theta: float = Field(0.0, description="真实均值")
    support: List[int] = Field(default_factory=lambda: [5, 10, 20], min_length=1, description="第一阶段样本量支撑")
    probs: Optional[List[float]] = Field(None, description="先验概率，缺省为均匀")
    n2: int = Field(10, ge=0, description="第二阶段样本量")
    threshold: float = Field(1.96, description="第一阶段检验临界值 z")
    n_reps: int = Field(500, ge=1)


class LocationCoverageParams(_ScenarioParams):
    family: str = Field("logistic", description="已注册的位置族")
    theta: float = Field(0.5, description="真实位置")
    n: int = Field(5, ge=1, description="样本量")
    alpha: float = Field(..., gt=0, le=1, description="选择时使用的检验水平")
    n_reps: int = Field(5000, ge=1)


class FileDrawerParams(_ScenarioParams):
    theta: float = Field(0.0, description="真实均值")
    n1: int = Field(10, ge=1)
    n2: int = Field(10, ge=0)
    threshold: float = Field(1.96)
    randomization_scale: Optional[float] = Field(None, gt=0, description="随机化噪声标准差 γ，None 为确定性选择")
    n_reps: int = Field(1000, ge=1)


class AncillarityAuditParams(_ScenarioParams):
    n_reps: int = Field(200, ge=1, description="随机审计个数")
    max_dim: int = Field(6, ge=1, description="K、C 的上限")
    epsilon: float = Field(0.05, gt=0, lt=1, description="M 型众数条件容差")
    phi_low: float = Field(0.5, gt=0, le=1, description="随机 φ 的下界")
    sparsity: float = Field(0.0, ge=0, lt=1, description="随机表置零比例")
    counterexample: bool = Field(True, description="同时检查构造的反例")


SCENARIO_PARAMS = {
    "winners-compare": WinnersCompareParams,
    "winners-coverage": WinnersCoverageParams,
    "polyhedral-uniformity": PolyhedralParams,
    "polyhedral-coverage": PolyhedralParams,
    "two-stage-compare": TwoStageCompareParams,
    "location-coverage": LocationCoverageParams,
    "ancillarity-audit": AncillarityAuditParams,
    "file-drawer": FileDrawerParams,
}


class AcceptanceBound(BaseModel):
    """运行后检查的汇总指标界"""
    model_config = ConfigDict(extra="forbid")

    metric: MetricName
    model: Optional[str] = Field(None, description="模型标签；median_length_ratio 不需要")
    min: Optional[float] = None
    max: Optional[float] = None

    @model_validator(mode="after")
    def check_bounds(self):
        if self.min is None and self.max is None:
            raise ValueError("acceptance bound needs min or max")
        if self.metric != "median_length_ratio" and self.model is None:
            raise ValueError(f"metric {self.metric} needs a model label")
        return self


class ExperimentConfig(BaseModel):
    """声明式实验描述"""
    model_config = ConfigDict(extra="forbid")

    scenario: ScenarioName
    params: Dict[str, Any] = Field(default_factory=dict, description="场景参数，按场景校验")
    seed: Optional[int] = Field(None, ge=0, lt=2 ** 64, description="64 位种子，缺省取环境变量")
    parallelism: Optional[int] = Field(None, ge=1, description="工作进程数")
    level: Optional[float] = Field(None, gt=0, lt=1, description="置信水平")
    acceptance: List[AcceptanceBound] = Field(default_factory=list)

    _parsed: Any = PrivateAttr(default=None)

    @model_validator(mode="after")
    def parse_params(self):
        self._parsed = SCENARIO_PARAMS[self.scenario].model_validate(self.params)
        return self

    @property
    def scenario_params(self):
        return self._parsed


class AcceptanceOutcome(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    bound: AcceptanceBound
    value: Optional[float]
    passed: bool


class ModelSummary(BaseModel):
    """单个模型标签的汇总，均可由明细行重算"""
    model_config = ConfigDict(ser_json_inf_nan="constants")

    n_rows: int
    n_failed: int
    coverage: Optional[float] = Field(None, description="覆盖率（不含失败行）")
    median_length: Optional[float] = None
    ks_statistic: Optional[float] = Field(None, description="p 值与 Uniform(0,1) 的 KS 距离")
    mean_estimate: Optional[float] = Field(None, description="有限点估计的均值")


class ExperimentSummary(BaseModel):
    model_config = ConfigDict(ser_json_inf_nan="constants")

    scenario: ScenarioName
    seed: int
    level: float
    n_reps: int
    models: Dict[str, ModelSummary] = Field(default_factory=dict)
    median_length_ratio: Optional[float] = Field(None, description="前两个模型逐行长度比的中位数")
    ratio_models: Optional[List[str]] = None
    acceptance: List[AcceptanceOutcome] = Field(default_factory=list)
    extra: Dict[str, Any] = Field(default_factory=dict, description="场景特有的汇总")

    @field_validator("median_length_ratio")
    @classmethod
    def finite_ratio(cls, v):
        if v is not None and math.isnan(v):
            return None
        return v

    @property
    def passed(self) -> bool:
        return all(o.passed for o in self.acceptance)
