from typing import Optional, Sequence, Tuple


class MonitoredError(Exception):
    """工具包异常基类"""


class TaskError(MonitoredError):
    """任务执行失败"""


class NumericalError(MonitoredError, RuntimeError):
    """数值计算失败"""


class DegeneracyError(NumericalError):
    """基态简并（无能隙）"""


class PropagationOverflowError(NumericalError):
    """非厄米传播出现非有限数"""


class ZeroProbabilityJumpError(NumericalError):
    """零概率通道的跳跃"""


class StateCorruptionError(NumericalError):
    """关联矩阵谱越界"""


class StepSizeError(NumericalError):
    """步长过大，跳跃概率不小于1"""


class IntegrationError(NumericalError):
    """矩方程积分失败"""


class ConvergenceError(NumericalError):
    """稳态迭代未收敛"""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class ImpossibleRecordError(NumericalError):
    """跳跃记录在给定初态下不可能出现"""


class InfiniteDiffusionError(NumericalError):
    """gamma = 0 时扩散常数发散"""


class MonitoredValueError(MonitoredError, ValueError):
    """非法输入"""


class ConfigError(MonitoredValueError):
    """配置校验失败"""

    def __init__(self, message: str, key_path: Optional[Tuple] = None):
        super().__init__(message)
        self.key_path = tuple(key_path) if key_path else ()


class MemoryGuardError(MonitoredValueError):
    """稠密希尔伯特空间超出内存限制"""


class ConstraintViolation(MonitoredValueError):
    """对称约束被破坏"""

    def __init__(self, message: str, labels: Sequence[str] = ()):
        super().__init__(message)
        self.labels = list(labels)
