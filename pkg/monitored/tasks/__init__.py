"""
任务层：每个命令对应一个Task
"""

from .classify_task import ClassifyTask
from .compare_task import CompareTask
from .lindblad_task import LindbladTask
from .oracle_task import OracleTask
from .rgflow_task import CoefficientsTask, RgFlowTask
from .trajectory_task import EnsembleTask, TrajectoryTask

TASKS = {
    task.name: task
    for task in (TrajectoryTask, EnsembleTask, LindbladTask, CompareTask, OracleTask, ClassifyTask,
                 RgFlowTask, CoefficientsTask)
}
