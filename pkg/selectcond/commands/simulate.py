"""
simulate 子命令：按配置文件运行蒙特卡罗实验
"""
import json
import logging
from pathlib import Path

from selectcond.commands.status import EXIT_ACCEPTANCE, EXIT_NUMERIC, EXIT_OK, CommandError
from selectcond.repository.result_store import read_table, result_paths, write_summary, write_table
from selectcond.schema.experiment import AUDIT_COLUMNS, ROW_COLUMNS, ExperimentConfig
from selectcond.service import experiment_service

logger = logging.getLogger(__name__)


def load_config(path: str) -> ExperimentConfig:
    """读取并校验 JSON 配置，未知字段报错"""
    text = Path(path).read_text(encoding="utf-8")
    return ExperimentConfig.model_validate(json.loads(text))


def execute(config: ExperimentConfig, seed=None, jobs=None, level=None, out_dir=None, name=None) -> int:
    """运行、写出、复核并检查验收界，返回退出码"""
    result = experiment_service.run(config, seed=seed, jobs=jobs, level=level)
    csv_path, json_path = result_paths(out_dir, name or config.scenario)
    audit = config.scenario == "ancillarity-audit"
    write_table(result.table, csv_path, AUDIT_COLUMNS if audit else ROW_COLUMNS)
    write_summary(result.summary, json_path)

    if audit:
        if result.summary.extra.get("failed"):
            logger.error("辅助性审计出现不保持的实例")
            return EXIT_ACCEPTANCE
        return EXIT_OK

    # 从写出的文件重算汇总
    problems = experiment_service.verify_summary(read_table(csv_path), result.summary)
    if problems:
        for problem in problems:
            logger.error(f"汇总复核不一致: {problem}")
        raise CommandError(EXIT_NUMERIC, "summary does not match the per-replication rows")

    if not result.summary.passed:
        return EXIT_ACCEPTANCE
    return EXIT_OK


def handle(args) -> int:
    config = load_config(args.config)
    return execute(config, seed=args.seed, jobs=args.jobs, level=args.level, out_dir=args.out, name=args.name)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("simulate", parents=parents, help="按 JSON 配置运行实验")
    parser.add_argument("config", help="实验配置文件（JSON）")
    parser.add_argument("--name", default=None, help="输出文件名（缺省取场景名）")
    parser.set_defaults(handler=handle)
