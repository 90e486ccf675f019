import csv
import hashlib
import json
import math
import os
import re
from enum import Enum
from typing import Any, Dict, List, Sequence

import numpy as np
from loguru import logger

from .. import __version__
from .base_task import TaskOutput
from .config import ExperimentConfig

_FLOAT_MARK = re.compile(r'"@@(.*?)@@"')


def format_float(value: float) -> str:
    return format(value, ".17g")


def to_plain(obj: Any) -> Any:
    """numpy、枚举与复数转为 JSON 可表示的类型"""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    return obj


def _mark_floats(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {k: _mark_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_mark_floats(v) for v in obj]
    if isinstance(obj, float) and math.isfinite(obj):
        return f"@@{format_float(obj)}@@"
    return obj


def dumps(obj: Any) -> str:
    """确定性JSON：键排序，浮点数17位有效数字"""
    text = json.dumps(_mark_floats(to_plain(obj)), sort_keys=True, indent=2, ensure_ascii=False)
    return _FLOAT_MARK.sub(r"\1", text) + "\n"


def canonical_config(config: ExperimentConfig) -> str:
    return json.dumps(to_plain(config.model_dump(mode="json")), sort_keys=True, separators=(",", ":"))


def content_hash(text: str) -> str:
    """git blob 风格的 sha1"""
    data = text.encode("utf-8")
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def build_header(config: ExperimentConfig) -> Dict[str, Any]:
    canonical = canonical_config(config)
    return {
        "toolkit": "monitored",
        "version": __version__,
        "command": config.command.value,
        "seed": config.master_seed,
        "config_hash": content_hash(canonical),
        "config": json.loads(canonical),
    }


def _cell(value: Any) -> str:
    value = to_plain(value)
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def write_csv(path: str, columns: Sequence[str], rows: Sequence[Sequence[Any]], header: Dict[str, Any]) -> str:
    """首部以 '# ' 注释行记录配置"""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        for line in json.dumps(to_plain(header), sort_keys=True, indent=2).splitlines():
            f.write(f"# {line}\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


def write_json(path: str, payload: Any, header: Dict[str, Any]) -> str:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(dumps({"header": header, "data": payload}))
    return path


def write_jsonl(path: str, records: Sequence[Dict[str, Any]]) -> str:
    """每行一条紧凑 JSON 记录，无首部"""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            line = json.dumps(_mark_floats(to_plain(record)), sort_keys=True, separators=(",", ":"),
                              ensure_ascii=False)
            f.write(_FLOAT_MARK.sub(r"\1", line) + "\n")
    return path


def emit_output(output: TaskOutput, config: ExperimentConfig) -> List[str]:
    """写出任务报告与全部数据表，返回文件路径"""
    header = build_header(config)
    prefix = config.out
    paths = [write_json(f"{prefix}_{config.command.value}.json",
                        {"passed": output.passed, "result": output.result}, header)]
    for name, (columns, rows) in output.tables.items():
        if config.format.value == "csv":
            paths.append(write_csv(f"{prefix}_{name}.csv", columns, rows, header))
        else:
            records = [dict(zip(columns, row)) for row in rows]
            paths.append(write_json(f"{prefix}_{name}.json", records, header))
    for name, records in output.records.items():
        paths.append(write_jsonl(f"{prefix}_{name}.jsonl", records))
    logger.info(f"Wrote {len(paths)} output file(s) with prefix {prefix}")
    return paths
