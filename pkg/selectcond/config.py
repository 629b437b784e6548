"""
配置模块
"""
import os
from dotenv import load_dotenv

load_dotenv()


class Settings:
    """运行配置，命令行参数与配置文件字段优先于环境变量"""
    SEED: int = int(os.getenv("SELECTCOND_SEED", "0"))
    JOBS: int = int(os.getenv("SELECTCOND_JOBS", "1"))
    OUT_DIR: str = os.getenv("SELECTCOND_OUT_DIR", "results")
    LEVEL: float = float(os.getenv("SELECTCOND_LEVEL", "0.9"))
    LOG_LEVEL: str = os.getenv("SELECTCOND_LOG_LEVEL", "INFO")
    FLOAT_FORMAT: str = "%.17g"


settings = Settings()
