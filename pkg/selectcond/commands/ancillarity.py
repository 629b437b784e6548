"""
check-ancillarity 子命令：随机有限模型上的辅助性保持审计
"""
import logging

from selectcond.commands.simulate import execute
from selectcond.schema.experiment import ExperimentConfig

logger = logging.getLogger(__name__)


def handle(args) -> int:
    params = {"n_reps": args.audits, "counterexample": args.counterexample, "epsilon": args.epsilon,
              "max_dim": args.max_dim}
    config = ExperimentConfig(scenario="ancillarity-audit", params=params)
    if args.counterexample:
        logger.info("包含零选择概率反例，其失败为预期结果")
    return execute(config, seed=args.seed, jobs=args.jobs, level=args.level, out_dir=args.out)


def register(subparsers, parents) -> None:
    parser = subparsers.add_parser("check-ancillarity", parents=parents, help="审计选择前后辅助性是否保持")
    parser.add_argument("--audits", type=int, default=200, help="随机审计个数")
    parser.add_argument("--counterexample", action="store_true", help="同时检查构造的反例")
    parser.add_argument("--epsilon", type=float, default=0.05, help="M 型众数条件容差")
    parser.add_argument("--max-dim", type=int, default=6, help="K、C 的上限")
    parser.set_defaults(handler=handle)
