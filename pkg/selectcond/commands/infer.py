"""
infer 子命令：对 CSV（文件或标准输入）中的数据做一次选择性推断

数据格式：
  winners / location  一列 y
  screening           一列 y，其余列为设计矩阵
  two-stage           列 stage（1 或 2）与 y
"""
import json
import logging
import sys
from typing import List, Optional

import pandas as pd

from selectcond.commands.status import EXIT_OK, EXIT_USAGE, CommandError, from_service
from selectcond.config import settings
from selectcond.repository.result_store import result_paths, write_json
from selectcond.service import inference_service

logger = logging.getLogger(__name__)

INFER_SCENARIOS = ["winners", "screening", "two-stage", "location"]


def read_data(source: str) -> pd.DataFrame:
    """读取输入表，'-' 表示标准输入"""
    table = pd.read_csv(sys.stdin if source == "-" else source)
    if "y" not in table.columns:
        raise CommandError(EXIT_USAGE, f"input needs a 'y' column, got {list(table.columns)}")
    if table.empty:
        raise CommandError(EXIT_USAGE, "input table is empty")
    return table


def _int_list(text: Optional[str]) -> Optional[List[int]]:
    return None if text is None else [int(v) for v in text.split(",")]


def _float_list(text: Optional[str]) -> Optional[List[float]]:
    return None if text is None else [float(v) for v in text.split(",")]


def run_inference(scenario: str, table: pd.DataFrame, args, level: float, seed: int) -> dict:
    """按场景调用推断服务，返回服务层字典"""
    y = table["y"].to_numpy(dtype=float)
    if scenario == "winners":
        models = None if args.models is None else args.models.split(",")
        return inference_service.infer_winners(
            y, level, sigma=args.sigma, models=models, null_value=args.null_value, seed=seed)
    if scenario == "screening":
        X = table.drop(columns=["y"]).to_numpy(dtype=float)
        if X.shape[1] == 0:
            raise CommandError(EXIT_USAGE, "screening needs at least one design column besides 'y'")
        return inference_service.infer_screening(
            X, y, args.threshold, level, sigma2=args.sigma ** 2,
            condition_on_signs=not args.all_signs, null_value=args.null_value)
    if scenario == "two-stage":
        if "stage" not in table.columns:
            raise CommandError(EXIT_USAGE, "two-stage input needs a 'stage' column")
        stage = table["stage"].to_numpy(dtype=int)
        if not set(stage) <= {1, 2}:
            raise CommandError(EXIT_USAGE, "stage must be 1 or 2")
        return inference_service.infer_two_stage(
            y[stage == 1], y[stage == 2], level,
            support=_int_list(args.support), probs=_float_list(args.probs), threshold=args.threshold,
            randomization_scale=args.randomization_scale, null_value=args.null_value, seed=seed)
    return inference_service.infer_location(
        y, args.family, args.alpha, level, null_value=args.null_value, seed=seed)


def handle(args) -> int:
    level = args.level if args.level is not None else settings.LEVEL
    seed = args.seed if args.seed is not None else settings.SEED
    if args.scenario == "location" and args.alpha is None:
        raise CommandError(EXIT_USAGE, "location inference needs --alpha")
    table = read_data(args.data)
    result = run_inference(args.scenario, table, args, level, seed)
    if not result["success"]:
        raise from_service(result, "推断失败")

    payload = {"scenario": args.scenario, "level": level, **{k: v for k, v in result.items() if k != "success"}}
    print(json.dumps(payload, indent=2, ensure_ascii=False))
    if args.out is not None:
        _, json_path = result_paths(args.out, f"infer-{args.scenario}")
        write_json(payload, json_path)
        logger.info(f"推断结果写出到 {json_path}")
    return EXIT_OK


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("infer", parents=parents, help="对给定数据做一次选择性推断")
    parser.add_argument("scenario", choices=INFER_SCENARIOS)
    parser.add_argument("--data", default="-", help="CSV 文件，缺省读标准输入")
    parser.add_argument("--sigma", type=float, default=1.0, help="已知噪声标准差")
    parser.add_argument("--models", default=None, help="赢家模型，逗号分隔")
    parser.add_argument("--threshold", type=float, default=1.96, help="筛选或第一阶段阈值")
    parser.add_argument("--all-signs", action="store_true", help="边际筛选不条件于符号")
    parser.add_argument("--support", default=None, help="第一阶段样本量支撑，逗号分隔")
    parser.add_argument("--probs", default=None, help="支撑上的先验概率，逗号分隔")
    parser.add_argument("--randomization-scale", type=float, default=None, help="随机化选择噪声标准差")
    parser.add_argument("--family", default="gaussian", help="位置族名称")
    parser.add_argument("--alpha", type=float, default=None, help="位置模型选择水平")
    parser.add_argument("--null-value", type=float, default=0.0, help="原假设取值")
    parser.set_defaults(handler=handle)
