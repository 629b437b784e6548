"""
实验服务层：按场景运行蒙特卡罗重复、汇总与复核
"""
import logging
import math
from typing import Callable, Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import stats

from selectcond.config import settings
from selectcond.schema.experiment import (
    ROW_COLUMNS,
    AcceptanceBound,
    AcceptanceOutcome,
    ExperimentConfig,
    ExperimentSummary,
    ModelSummary,
)
from selectcond.schema.inference import InferenceResult
from selectcond.schema.two_stage import SampleSizePrior
from selectcond.schema.winners import WinnersData
from selectcond.service import audit_service
from selectcond.service.errors import InconsistentDatumError
from selectcond.service.location_model import get_family, sample_selected, selective_location_inference
from selectcond.service.polyhedral import marginal_screening_event, polyhedral_inference, projection_target
from selectcond.service.random_streams import design_rng, replication_rng
from selectcond.service.two_stage import (
    compare_two_stage_inference,
    file_drawer_inference,
    naive_inference,
    sample_conditional,
    sample_randomized,
    sample_unconditional,
)
from selectcond.service.winners import argmax_select, face_value_inference, infer_winner

logger = logging.getLogger(__name__)

MAX_REJECTIONS = 100_000
FAILED_PREFIX = "failed:"

# 比较类场景中计算逐行长度比的两个模型（分子, 分母）
RATIO_MODELS = {
    "winners-compare": ("full-vector", "conditional-on-losers"),
    "two-stage-compare": ("unconditional", "conditional"),
    "file-drawer": ("file-drawer", "face-value"),
}


class RunResult(NamedTuple):
    table: pd.DataFrame
    summary: ExperimentSummary


# ---------------------------------------------------------------------------
# 明细行
# ---------------------------------------------------------------------------

def result_row(rep: int, model: str, result: InferenceResult, truth: float) -> dict:
    lo, hi = result.ci
    return {
        "rep": rep,
        "model": model,
        "estimate": float(result.estimate),
        "lo": float(lo),
        "hi": float(hi),
        "covered": bool(lo <= truth <= hi),
        "length": float(hi - lo),
        "pvalue": float(result.pvalue),
        "flags": ";".join(result.flags),
    }


def failed_row(rep: int, model: str, error: Exception) -> dict:
    return {
        "rep": rep,
        "model": model,
        "estimate": math.nan,
        "lo": math.nan,
        "hi": math.nan,
        "covered": False,
        "length": math.nan,
        "pvalue": math.nan,
        "flags": f"{FAILED_PREFIX}{type(error).__name__}",
    }


def _infer_rows(rep: int, truth: float, jobs: List[tuple]) -> List[dict]:
    """逐个模型推断；单个模型失败只记为标记行"""
    rows = []
    for model, fn in jobs:
        try:
            rows.append(result_row(rep, model, fn(), truth))
        except Exception as e:
            logger.error(f"第 {rep} 次重复 {model} 推断失败: {e}")
            rows.append(failed_row(rep, model, e))
    return rows


# ---------------------------------------------------------------------------
# 场景
# ---------------------------------------------------------------------------

def _winners_rep(rep, params, level, rng, context) -> List[dict]:
    theta = np.asarray(params.theta, dtype=float)
    for _ in range(MAX_REJECTIONS):
        y = theta + params.sigma * rng.standard_normal(theta.size)
        index = argmax_select(y)
        if params.winner_index is None or index == params.winner_index:
            break
    else:
        raise InconsistentDatumError(f"index {params.winner_index} never won")

    data = WinnersData(y=y.tolist(), sigma=params.sigma, selected_index=index)
    truth = float(theta[index])
    jobs = [
        (kind, lambda kind=kind: infer_winner(data, kind, level, null_value=truth, seed=rep))
        for kind in params.models
    ]
    if params.face_value:
        jobs.append(("face-value", lambda: face_value_inference(data, level, null_value=truth)))
    return _infer_rows(rep, truth, jobs)


def _polyhedral_context(params, seed: int) -> dict:
    rng = design_rng(seed)
    X = rng.standard_normal((params.n, params.p))
    X /= np.linalg.norm(X, axis=0)
    beta = np.zeros(params.p)
    beta[: len(params.beta)] = params.beta
    return {"X": X, "mu": X @ beta}


def _polyhedral_rep(rep, params, level, rng, context) -> List[dict]:
    X, mu = context["X"], context["mu"]
    sd = math.sqrt(params.sigma2)
    for _ in range(MAX_REJECTIONS):
        y = mu + sd * rng.standard_normal(mu.size)
        s, event = marginal_screening_event(X, y, params.threshold, params.condition_on_signs)
        if s:
            break
    else:
        raise InconsistentDatumError("screening never selected a variable")

    target = projection_target(X, s, 0)
    truth = target.value(mu)
    return _infer_rows(rep, truth, [
        ("polyhedral", lambda: polyhedral_inference(event, target, y, params.sigma2, level, psi0=truth)),
    ])


def _prior(params) -> SampleSizePrior:
    if params.probs is None:
        return SampleSizePrior.uniform(params.support)
    return SampleSizePrior(support=params.support, probs=params.probs)


def _two_stage_rep(rep, params, level, rng, context) -> List[dict]:
    prior = context["prior"]
    data = sample_unconditional(params.theta, prior, params.n2, params.threshold, rng)
    truth = params.theta
    rows = []
    try:
        pair = compare_two_stage_inference(data, prior, level, null_value=truth, seed=rep)
        rows.append(result_row(rep, "unconditional", pair.first, truth))
        rows.append(result_row(rep, "conditional", pair.second, truth))
    except Exception as e:
        logger.error(f"第 {rep} 次重复两阶段推断失败: {e}")
        rows.extend([failed_row(rep, "unconditional", e), failed_row(rep, "conditional", e)])
    rows.extend(_infer_rows(rep, truth, [("face-value", lambda: naive_inference(data, level, null_value=truth))]))
    return rows


def _location_context(params, seed: int) -> dict:
    # 未注册的族在运行前报错
    get_family(params.family)
    return {}


def _location_rep(rep, params, level, rng, context) -> List[dict]:
    family = get_family(params.family)
    conf = sample_selected(params.theta, params.n, family, params.alpha, rng)
    return _infer_rows(rep, params.theta, [
        (f"location-{family.name}",
         lambda: selective_location_inference(conf, family, params.alpha, level, null_value=params.theta, seed=rep)),
    ])


def _file_drawer_rep(rep, params, level, rng, context) -> List[dict]:
    if params.randomization_scale is None:
        data = sample_conditional(params.theta, params.n1, params.n2, params.threshold, rng)
    else:
        data = sample_randomized(params.theta, params.n1, params.n2, params.threshold, params.randomization_scale, rng)
    truth = params.theta
    return _infer_rows(rep, truth, [
        ("file-drawer", lambda: file_drawer_inference(
            data, level, params.randomization_scale, null_value=truth, seed=rep)),
        ("face-value", lambda: naive_inference(data, level, null_value=truth)),
    ])


class Scenario(NamedTuple):
    replicate: Callable
    prepare: Optional[Callable] = None


SCENARIOS: Dict[str, Scenario] = {
    "winners-compare": Scenario(_winners_rep),
    "winners-coverage": Scenario(_winners_rep),
    "polyhedral-uniformity": Scenario(_polyhedral_rep, _polyhedral_context),
    "polyhedral-coverage": Scenario(_polyhedral_rep, _polyhedral_context),
    "two-stage-compare": Scenario(_two_stage_rep, lambda params, seed: {"prior": _prior(params)}),
    "location-coverage": Scenario(_location_rep, _location_context),
    "file-drawer": Scenario(_file_drawer_rep),
}


def run_replication(scenario: str, rep: int, params, level: float, seed: int, context: dict) -> List[dict]:
    """单次重复；使用 (seed, rep) 派生的独立流"""
    rng = replication_rng(seed, rep)
    try:
        return SCENARIOS[scenario].replicate(rep, params, level, rng, context)
    except Exception as e:
        logger.error(f"第 {rep} 次重复抽样失败: {e}")
        return [failed_row(rep, "sample", e)]


# ---------------------------------------------------------------------------
# 运行与汇总
# ---------------------------------------------------------------------------

def resolve(config: ExperimentConfig, seed: Optional[int] = None, jobs: Optional[int] = None,
            level: Optional[float] = None):
    """命令行 > 配置文件 > 环境变量 > 默认值"""
    seed = seed if seed is not None else (config.seed if config.seed is not None else settings.SEED)
    jobs = jobs if jobs is not None else (config.parallelism if config.parallelism is not None else settings.JOBS)
    level = level if level is not None else (config.level if config.level is not None else settings.LEVEL)
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    return int(seed), int(jobs), float(level)


def run(config: ExperimentConfig, seed: Optional[int] = None, jobs: Optional[int] = None,
        level: Optional[float] = None) -> RunResult:
    """
    运行实验

    结果按重复下标排序，与进程数无关；ancillarity-audit 场景返回审计表。
    """
    seed, jobs, level = resolve(config, seed, jobs, level)
    params = config.scenario_params
    logger.info(f"开始实验 {config.scenario}: n_reps={params.n_reps}, seed={seed}, jobs={jobs}, level={level}")

    if config.scenario == "ancillarity-audit":
        table, g_summary, m_summary = audit_service.run_audit(params, seed, jobs)
        summary = ExperimentSummary(
            scenario=config.scenario, seed=seed, level=level, n_reps=params.n_reps,
            extra={"G": g_summary.model_dump(), "M": m_summary.model_dump(),
                   "failed": g_summary.failed or m_summary.failed},
        )
        return RunResult(table=table, summary=summary)

    if config.scenario not in SCENARIOS:
        raise ValueError(f"unknown scenario {config.scenario!r}")
    scenario = SCENARIOS[config.scenario]
    context = scenario.prepare(params, seed) if scenario.prepare is not None else {}

    chunks = Parallel(n_jobs=jobs)(
        delayed(run_replication)(config.scenario, r, params, level, seed, context) for r in range(params.n_reps)
    )
    table = pd.DataFrame([row for chunk in chunks for row in chunk], columns=ROW_COLUMNS)
    summary = summarize(table, config.scenario, seed, level, params.n_reps)
    summary = summary.model_copy(update={"acceptance": check_acceptance(summary, config.acceptance)})
    logger.info(f"实验 {config.scenario} 完成: {len(table)} 行")
    return RunResult(table=table, summary=summary)


def _finite_or_none(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return None if math.isnan(value) else value


def _failed_mask(table: pd.DataFrame) -> pd.Series:
    return table["flags"].astype(str).str.startswith(FAILED_PREFIX)


def model_summary(rows: pd.DataFrame) -> ModelSummary:
    """单个模型的汇总，失败行不计入"""
    ok = rows[~_failed_mask(rows)]
    pvalues = ok["pvalue"].to_numpy(dtype=float)
    pvalues = pvalues[np.isfinite(pvalues)]
    estimates = ok["estimate"].to_numpy(dtype=float)
    estimates = estimates[np.isfinite(estimates)]
    return ModelSummary(
        n_rows=len(rows),
        n_failed=len(rows) - len(ok),
        coverage=_finite_or_none(ok["covered"].astype(bool).mean()) if len(ok) else None,
        median_length=_finite_or_none(np.median(ok["length"].to_numpy(dtype=float))) if len(ok) else None,
        ks_statistic=float(stats.kstest(pvalues, "uniform").statistic) if pvalues.size else None,
        mean_estimate=float(np.mean(estimates)) if estimates.size else None,
    )


def median_length_ratio(table: pd.DataFrame, numerator: str, denominator: str) -> Optional[float]:
    """同一重复内两个模型区间长度比的中位数，只用两者都有限的重复"""
    ok = table[~_failed_mask(table)]
    if ok.empty:
        return None
    lengths = ok.pivot_table(index="rep", columns="model", values="length", aggfunc="first")
    if numerator not in lengths.columns or denominator not in lengths.columns:
        return None
    ratio = (lengths[numerator] / lengths[denominator]).to_numpy(dtype=float)
    ratio = ratio[np.isfinite(ratio)]
    return float(np.median(ratio)) if ratio.size else None


def summarize(table: pd.DataFrame, scenario: str, seed: int, level: float, n_reps: int) -> ExperimentSummary:
    """由明细行计算汇总（无隐藏状态）"""
    models = {
        str(model): model_summary(rows) for model, rows in table.groupby("model", sort=False)
    }
    ratio, ratio_models = None, None
    if scenario in RATIO_MODELS:
        ratio_models = list(RATIO_MODELS[scenario])
        ratio = median_length_ratio(table, *ratio_models)
    return ExperimentSummary(
        scenario=scenario, seed=seed, level=level, n_reps=n_reps, models=models,
        median_length_ratio=ratio, ratio_models=ratio_models,
    )


def _metric_value(summary: ExperimentSummary, bound: AcceptanceBound) -> Optional[float]:
    if bound.metric == "median_length_ratio":
        return summary.median_length_ratio
    model = summary.models.get(bound.model)
    if model is None:
        return None
    return getattr(model, bound.metric)


def check_acceptance(summary: ExperimentSummary, bounds: List[AcceptanceBound]) -> List[AcceptanceOutcome]:
    outcomes = []
    for bound in bounds:
        value = _metric_value(summary, bound)
        passed = value is not None and not math.isnan(value) \
            and (bound.min is None or value >= bound.min) and (bound.max is None or value <= bound.max)
        if not passed:
            logger.warning(f"验收未通过: {bound.metric}[{bound.model}] = {value}, 界 [{bound.min}, {bound.max}]")
        outcomes.append(AcceptanceOutcome(bound=bound, value=value, passed=passed))
    return outcomes


def _close(a, b, tol: float) -> bool:
    if a is None or b is None:
        return a is None and b is None
    if math.isinf(a) or math.isinf(b):
        return a == b
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


def verify_summary(table: pd.DataFrame, summary: ExperimentSummary, tol: float = 1e-12) -> List[str]:
    """由明细行重算汇总并比较，返回不一致项"""
    recomputed = summarize(table, summary.scenario, summary.seed, summary.level, summary.n_reps)
    problems = []
    if set(recomputed.models) != set(summary.models):
        problems.append(f"model labels differ: {sorted(recomputed.models)} vs {sorted(summary.models)}")
    for name, expected in recomputed.models.items():
        stored = summary.models.get(name)
        if stored is None:
            continue
        for field in ModelSummary.model_fields:
            if not _close(getattr(expected, field), getattr(stored, field), tol):
                problems.append(f"{name}.{field}: recomputed {getattr(expected, field)} vs stored {getattr(stored, field)}")
    if not _close(recomputed.median_length_ratio, summary.median_length_ratio, tol):
        problems.append(f"median_length_ratio: recomputed {recomputed.median_length_ratio} "
                        f"vs stored {summary.median_length_ratio}")
    return problems
