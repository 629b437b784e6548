"""
结果存储模块：每个场景一张 CSV 明细表加一个 JSON 汇总
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple

import pandas as pd
from pydantic import BaseModel

from selectcond.config import settings

logger = logging.getLogger(__name__)


def result_paths(out_dir: Optional[str], name: str) -> Tuple[Path, Path]:
    """(CSV 路径, JSON 路径)"""
    root = Path(out_dir or settings.OUT_DIR)
    return root / f"{name}.csv", root / f"{name}.json"


def write_table(table: pd.DataFrame, path: Path, columns: Optional[List[str]] = None) -> Path:
    """固定列顺序写出，浮点数保留 17 位有效数字"""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if columns is not None:
        table = table[columns]
    table.to_csv(path, index=False, float_format=settings.FLOAT_FORMAT, lineterminator="\n")
    logger.info(f"写出明细表 {path} ({len(table)} 行)")
    return path


def read_table(path: Path) -> pd.DataFrame:
    """读取明细表；flags 列空值还原为空字符串"""
    table = pd.read_csv(path, keep_default_na=False, na_values=["", "nan", "NaN"])
    if "flags" in table.columns:
        table["flags"] = table["flags"].fillna("").astype(str)
    return table


def write_summary(summary: BaseModel, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(summary.model_dump_json(indent=2) + "\n", encoding="utf-8")
    logger.info(f"写出汇总 {path}")
    return path


def read_summary(path: Path, model: type) -> BaseModel:
    """读取汇总；用标准 json 解析以接受 Infinity"""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    return model.model_validate(data)


def write_json(payload, path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path
