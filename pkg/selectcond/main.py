"""
选择性推断工具 - 命令行主入口
"""
import argparse
import logging
import sys
from typing import List, Optional

from selectcond import __version__
from selectcond.commands import ancillarity, infer, schema, simulate
from selectcond.commands.status import EXIT_NUMERIC, EXIT_USAGE, CommandError
from selectcond.config import settings
from selectcond.service.errors import SelectiveInferenceError

logger = logging.getLogger(__name__)

SEED_MAX = 2 ** 64
LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR"]


class Parser(argparse.ArgumentParser):
    """用法错误以退出码 1 结束"""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def seed_type(text: str) -> int:
    value = int(text)
    if not 0 <= value < SEED_MAX:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def level_type(text: str) -> float:
    value = float(text)
    if not 0.0 < value < 1.0:
        raise argparse.ArgumentTypeError(f"level must lie in (0, 1), got {text}")
    return value


def common_options(suppress: bool) -> argparse.ArgumentParser:
    """全局参数；子命令上重复声明，缺省不覆盖主解析器的值"""
    default = argparse.SUPPRESS if suppress else None
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=seed_type, default=default, help="64 位随机种子（覆盖 SELECTCOND_SEED）")
    common.add_argument("--jobs", type=positive_int, default=default, help="并行进程数")
    common.add_argument("--out", default=default, help="输出目录")
    common.add_argument("--level", type=level_type, default=default, help="置信水平")
    common.add_argument("--log-level", type=str.upper, choices=LOG_LEVELS,
                        default=argparse.SUPPRESS if suppress else settings.LOG_LEVEL.upper(), help="日志级别")
    return common


def build_parser() -> Parser:
    parser = Parser(prog="selectcond", description="选择性推断与蒙特卡罗实验", parents=[common_options(False)])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subparsers = parser.add_subparsers(dest="command", metavar="command", parser_class=Parser)
    subparsers.required = True
    parents = [common_options(True)]
    for command in (simulate, infer, ancillarity, schema):
        command.register(subparsers, parents)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    # 配置日志
    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )

    try:
        return args.handler(args)
    except CommandError as e:
        logger.error(f"{args.command} 失败: {e.detail}")
        return e.status_code
    except SelectiveInferenceError as e:
        logger.error(f"{args.command} 数值失败: {e}")
        return EXIT_NUMERIC
    except (ValueError, OSError) as e:
        logger.error(f"{args.command} 输入或配置错误: {e}")
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
