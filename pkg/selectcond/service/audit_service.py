"""
辅助性审计服务层
"""
import logging
import math
from typing import List, Optional, Tuple

import pandas as pd
from joblib import Parallel, delayed

from selectcond.schema.ancillarity import AuditSummary, PreservationReport
from selectcond.schema.experiment import AUDIT_COLUMNS, AncillarityAuditParams
from selectcond.service.ancillarity import (
    FiniteModel,
    FiniteSelection,
    check_G_preservation,
    check_M_preservation,
    g_counterexample,
    is_G_ancillary,
)
from selectcond.service.random_streams import replication_rng

logger = logging.getLogger(__name__)


def _audit_row(rep: int, kind: str, shape, report: PreservationReport, flags: str = "") -> dict:
    P, C, K = shape
    primes = [r.epsilon_prime for r in report.per_psi if r.epsilon_prime is not None]
    return {
        "rep": rep,
        "kind": kind,
        "P": P,
        "C": C,
        "K": K,
        "status": report.status,
        "holds": report.holds,
        "epsilon_prime_max": max(primes) if primes else math.nan,
        "flags": flags,
    }


def audit_instance(rep: int, params: AncillarityAuditParams, seed: int) -> List[dict]:
    """第 rep 个随机审计：随机有限模型与严格正的选择概率"""
    rng = replication_rng(seed, rep)
    P = int(rng.integers(1, 4))
    C = int(rng.integers(1, params.max_dim + 1))
    K = int(rng.integers(1, params.max_dim + 1))
    try:
        model = FiniteModel.random(rng, P, C, K, sparsity=params.sparsity)
        sel = FiniteSelection.random(rng, P, K, low=params.phi_low)
        g_report = check_G_preservation(model, sel)
        m_report = check_M_preservation(model, sel, params.epsilon)
    except Exception as e:
        logger.error(f"第 {rep} 个审计失败: {e}")
        flag = f"failed:{type(e).__name__}"
        failed = PreservationReport(kind="G", status="violated")
        return [_audit_row(rep, "G", (P, C, K), failed, flag),
                _audit_row(rep, "M", (P, C, K), failed.model_copy(update={"kind": "M"}), flag)]
    if not g_report.holds:
        logger.error(f"第 {rep} 个审计 G 型保持失败 (P={P}, C={C}, K={K})")
    if not m_report.holds:
        logger.error(f"第 {rep} 个审计 M 型保持失败 (P={P}, C={C}, K={K})")
    return [_audit_row(rep, "G", (P, C, K), g_report), _audit_row(rep, "M", (P, C, K), m_report)]


def _summarize(table: pd.DataFrame, kind: str, epsilon: Optional[float]) -> AuditSummary:
    rows = table[table["kind"] == kind]
    return AuditSummary(
        kind=kind,
        n_cases=len(rows),
        n_preserved=int((rows["status"] == "preserved").sum()),
        n_violated=int((rows["status"] == "violated").sum()),
        n_skipped=int((rows["status"] == "hypothesis-violated").sum()),
        epsilon=epsilon,
    )


def run_audit(
    params: AncillarityAuditParams, seed: int, jobs: int = 1
) -> Tuple[pd.DataFrame, AuditSummary, AuditSummary]:
    """
    n_reps 个随机审计加构造的反例

    反例行的 rep 为 -1，不计入 G 汇总；其失败是预期结果。
    """
    logger.info(f"开始辅助性审计: {params.n_reps} 个实例, seed={seed}, jobs={jobs}")
    chunks = Parallel(n_jobs=jobs)(delayed(audit_instance)(r, params, seed) for r in range(params.n_reps))
    rows = [row for chunk in chunks for row in chunk]
    table = pd.DataFrame(rows, columns=AUDIT_COLUMNS)

    g_summary = _summarize(table, "G", None)
    m_summary = _summarize(table, "M", params.epsilon)

    if params.counterexample:
        model, sel = g_counterexample()
        report = check_G_preservation(model, sel, allow_zero=True)
        witness = is_G_ancillary(model, 0).witness
        logger.info(f"反例检查: {report.status}（预期失败）, witness={witness}")
        extra = pd.DataFrame([_audit_row(-1, "G-counterexample", model.shape, report, "expected-failure")],
                             columns=AUDIT_COLUMNS)
        table = pd.concat([table, extra], ignore_index=True)
        g_summary = g_summary.model_copy(update={"counterexample": report, "counterexample_witness": witness})

    logger.info(f"审计完成: G 保持 {g_summary.n_preserved}/{g_summary.n_cases}, "
                f"M 保持 {m_summary.n_preserved}/{m_summary.n_cases}")
    return table, g_summary, m_summary

