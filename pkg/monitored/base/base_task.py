from typing import Dict, Any, List, Optional
from dataclasses import dataclass, field
from abc import ABC, abstractmethod

from .config import ExperimentConfig


@dataclass
class TaskOutput:
    """Task的输出结构"""
    result: Dict[str, Any]
    passed: bool = True
    # 表名 -> (列名, 行)
    tables: Dict[str, Any] = field(default_factory=dict)
    # 名称 -> 逐行写出的记录 (JSON Lines)
    records: Dict[str, List[Dict[str, Any]]] = field(default_factory=dict)
    metadata: Dict[str, Any] = None


@dataclass
class TaskInput:
    """Task的输入结构"""
    config: Optional[ExperimentConfig] = None


class BaseTask(ABC):
    """基础Task类"""

    name: str = "base"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        """初始化Task"""
        self.config = config or {}

    @abstractmethod
    async def process(self, input_data: TaskInput) -> TaskOutput:
        """处理输入数据并返回结果"""
        pass

    def validate_input(self, input_data: TaskInput) -> bool:
        """验证输入数据"""
        return input_data.config is not None
