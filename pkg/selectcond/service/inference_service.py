"""
单次推断服务层：对用户提供的数据做选择性推断
"""
import logging
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from selectcond.schema.two_stage import SampleSizePrior, TwoStageData
from selectcond.schema.winners import WinnersData, WinnersModelKind
from selectcond.service.errors import SelectiveInferenceError
from selectcond.service.location_model import decompose, get_family, selective_location_inference
from selectcond.service.polyhedral import marginal_screening_event, polyhedral_inference, projection_target
from selectcond.service.two_stage import compare_two_stage_inference, file_drawer_inference, naive_inference
from selectcond.service.winners import face_value_inference, infer_winner

logger = logging.getLogger(__name__)


def _failure(e: Exception) -> dict:
    kind = "numeric" if isinstance(e, SelectiveInferenceError) else "input"
    return {"success": False, "error": str(e), "kind": kind}


def infer_winners(
    y: Sequence[float],
    level: float,
    sigma: float = 1.0,
    models: Optional[List[WinnersModelKind]] = None,
    null_value: float = 0.0,
    seed: int = 0,
) -> dict:
    """
    赢家推断，默认同时给出两种抽样模型与朴素区间
    """
    try:
        data = WinnersData(y=list(y), sigma=sigma)
        results = [
            infer_winner(data, kind, level, null_value=null_value, seed=seed)
            for kind in (models or ["full-vector", "conditional-on-losers"])
        ]
        results.append(face_value_inference(data, level, null_value=null_value))
        return {"success": True, "data": [r.model_dump() for r in results]}
    except (ValidationError, ValueError) as e:
        logger.error(f"赢家推断失败: {e}")
        return _failure(e)


def infer_screening(
    X,
    y: Sequence[float],
    threshold: float,
    level: float,
    sigma2: float = 1.0,
    condition_on_signs: bool = True,
    null_value: float = 0.0,
) -> dict:
    """边际筛选后对每个选中变量的投影系数做推断"""
    try:
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        s, event = marginal_screening_event(X, y, threshold, condition_on_signs)
        if not s:
            return {"success": False, "error": "screening selected no variable", "kind": "input"}
        data = []
        for j, variable in enumerate(s):
            target = projection_target(X, s, j)
            result = polyhedral_inference(event, target, y, sigma2, level, psi0=null_value)
            data.append({"variable": variable, **result.model_dump()})
        return {"success": True, "selected": list(s), "data": data}
    except ValueError as e:
        logger.error(f"多面体推断失败: {e}")
        return _failure(e)


def infer_two_stage(
    stage1: Sequence[float],
    stage2: Sequence[float],
    level: float,
    support: Optional[Sequence[int]] = None,
    probs: Optional[Sequence[float]] = None,
    threshold: float = 1.96,
    randomization_scale: Optional[float] = None,
    null_value: float = 0.0,
    seed: int = 0,
) -> dict:
    """
    两阶段数据推断

    给出样本量先验时比较两种条件化方式，否则按抽屉问题（n1 固定）推断。
    """
    try:
        selection = "deterministic" if randomization_scale is None else "randomized"
        data = TwoStageData(stage1=list(stage1), stage2=list(stage2), threshold=threshold, selection=selection)
        if support is not None and randomization_scale is None:
            prior = (SampleSizePrior.uniform(list(support)) if probs is None
                     else SampleSizePrior(support=list(support), probs=list(probs)))
            pair = compare_two_stage_inference(data, prior, level, null_value=null_value, seed=seed)
            results = [pair.first, pair.second]
            extra = {"estimate_delta": pair.estimate_delta, "length_delta": pair.length_delta}
        else:
            results = [file_drawer_inference(data, level, randomization_scale, null_value=null_value, seed=seed)]
            extra = {}
        results.append(naive_inference(data, level, null_value=null_value))
        return {"success": True, "data": [r.model_dump() for r in results], **extra}
    except (ValidationError, ValueError) as e:
        logger.error(f"两阶段推断失败: {e}")
        return _failure(e)


def infer_location(
    y: Sequence[float],
    family: str,
    alpha: float,
    level: float,
    null_value: float = 0.0,
    seed: int = 0,
) -> dict:
    """位置族数据在 u(T, a) <= α 选择后的推断"""
    try:
        fam = get_family(family)
        conf = decompose(y, fam)
        result = selective_location_inference(conf, fam, alpha, level, null_value=null_value, seed=seed)
        return {"success": True, "data": [result.model_dump()]}
    except ValueError as e:
        logger.error(f"位置模型推断失败: {e}")
        return _failure(e)
