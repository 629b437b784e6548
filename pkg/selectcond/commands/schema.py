"""
schema 子命令：输出实验配置的 JSON Schema
"""
import json

from selectcond.commands.status import EXIT_OK
from selectcond.schema.experiment import SCENARIO_PARAMS, ExperimentConfig


def published_schema(scenario=None) -> dict:
    if scenario is not None:
        return SCENARIO_PARAMS[scenario].model_json_schema()
    return {
        "config": ExperimentConfig.model_json_schema(),
        "params": {name: model.model_json_schema() for name, model in SCENARIO_PARAMS.items()},
    }


def handle(args) -> int:
    print(json.dumps(published_schema(args.scenario), indent=2, ensure_ascii=False))
    return EXIT_OK


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("schema", parents=parents, help="输出配置文件的 JSON Schema")
    parser.add_argument("--scenario", choices=sorted(SCENARIO_PARAMS), default=None, help="只输出该场景的参数")
    parser.set_defaults(handler=handle)
