"""
按 (seed, 重复下标) 派生的独立随机流
"""
import numpy as np

# 与重复下标的一维 spawn_key 区分
DESIGN_STREAM = (0, 1)


def replication_rng(seed: int, rep: int) -> np.random.Generator:
    """第 rep 次重复的 Philox 计数器流，与调度顺序和进程数无关"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=(rep,))))


def design_rng(seed: int) -> np.random.Generator:
    """实验级固定对象（如设计矩阵）使用的流"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=DESIGN_STREAM)))
