import os
from unittest.mock import patch

import numpy as np
import pytest

from monitored.base.base_task import TaskInput, TaskOutput
from monitored.base.config import ExperimentConfig
from monitored.base.errors import InfiniteDiffusionError, TaskError
from monitored.dynamics.trajectory import trajectory_seed
from monitored.tasks import (
    TASKS,
    ClassifyTask,
    CoefficientsTask,
    CompareTask,
    EnsembleTask,
    LindbladTask,
    OracleTask,
    RgFlowTask,
    TrajectoryTask,
)

RUN_SLOW = os.getenv("MONITORED_RUN_SLOW") == "1"


def make_input(**kwargs) -> TaskInput:
    """构造任务输入"""
    return TaskInput(config=ExperimentConfig(workers=1, **kwargs))


def test_task_registry():
    """测试每个命令都有对应的Task"""
    assert set(TASKS) == {"trajectory", "ensemble", "lindblad", "compare", "oracle", "classify", "rgflow",
                          "coefficients"}
    assert TASKS["compare"] is CompareTask


def test_validate_input():
    """测试输入验证"""
    task = RgFlowTask()
    assert task.validate_input(make_input(command="rgflow")) is True
    assert task.validate_input(TaskInput()) is False


@pytest.mark.asyncio
async def test_missing_config_rejected():
    """测试缺少配置时报错"""
    with pytest.raises(ValueError, match="Invalid input: requires config"):
        await CoefficientsTask().process(TaskInput())


@pytest.mark.asyncio
async def test_trajectory_task():
    """测试单条轨迹的记录与表格"""
    task = TrajectoryTask({"index": 3})
    output = await task.process(make_input(command="trajectory", L=4, dt=1e-2, t_final=1.0,
                                           sample_times=[0.5, 1.0]))
    assert isinstance(output, TaskOutput)
    record = output.result["record"]
    assert record["index"] == 3
    assert record["seed"] == trajectory_seed(42, 3)
    assert len(output.result["final_density"]) == 4
    assert set(output.tables) == {"density", "entropy"}
    columns, rows = output.tables["density"]
    assert columns == ["trajectory_index", "t", "site", "density"]
    assert len(rows) == 2 * 4
    (line,) = output.records["jump_record"]
    assert line == {"index": 3, "seed": record["seed"], "events": record["events"]}


@pytest.mark.asyncio
async def test_ensemble_task():
    """测试系综统计与跳跃数直方图"""
    task = EnsembleTask({"progress": False})
    output = await task.process(make_input(command="ensemble", L=4, dt=1e-2, t_final=1.0, n_traj=20))
    assert output.result["n_traj"] == 20
    assert output.result["mean_jump_rate"] >= 0
    histogram = output.tables["jump_histogram"][1]
    assert sum(n for _, n in histogram) == 20
    assert len(output.tables["ensemble_density"][1]) == 4
    assert output.metadata["total_jumps"] == sum(count * n for count, n in histogram)


@pytest.mark.asyncio
async def test_lindblad_task():
    """测试矩方程、稳态与格林函数表"""
    output = await LindbladTask().process(make_input(command="lindblad", L=4, t_final=1.0,
                                                     sample_times=[0.0, 1.0], omegas=[0.5, 1.0]))
    assert output.result["final_time"] == pytest.approx(1.0)
    assert output.result["steady_state"]["max_deviation_from_half"] <= 1e-6
    assert len(output.tables["moments"][1]) == 2 * 16
    columns, rows = output.tables["green"]
    assert len(columns) == 10
    assert len(rows) == 4 * 2


@pytest.mark.asyncio
async def test_lindblad_task_unitary_has_no_steady_state():
    """测试 γ=0 时不求稳态"""
    output = await LindbladTask().process(make_input(command="lindblad", L=4, gamma=0.0, t_final=0.5))
    assert "steady_state" not in output.result
    assert "green" not in output.tables


@pytest.mark.asyncio
async def test_compare_task_passes():
    """测试轨迹平均与矩方程一致"""
    task = CompareTask({"progress": False})
    output = await task.process(make_input(command="compare", L=6, n_traj=400, dt=5e-3, t_final=2.0,
                                           sample_times=[0.5, 1.0, 2.0]))
    assert output.passed
    assert output.result["max_z"] <= 4.0
    assert len(output.tables["compare"][1]) == 3 * 6


@pytest.mark.asyncio
async def test_compare_task_threshold():
    """测试阈值可由任务配置覆盖"""
    task = CompareTask({"progress": False, "z_threshold": -1.0})
    output = await task.process(make_input(command="compare", L=4, n_traj=20, dt=1e-2, t_final=0.5))
    assert not output.passed
    assert output.result["z_threshold"] == -1.0


@pytest.mark.skipif(not RUN_SLOW, reason="set MONITORED_RUN_SLOW=1 for acceptance-size runs")
@pytest.mark.asyncio
async def test_compare_task_full_size():
    """测试 L=16、γ=0.5、2000 条轨迹的等价性检验"""
    task = CompareTask({"progress": False})
    config = ExperimentConfig(command="compare", L=16, gamma=0.5, n_traj=2000, t_final=2.0,
                              sample_times=[0.5, 1.0, 2.0])
    output = await task.process(TaskInput(config=config))
    assert output.passed


@pytest.mark.asyncio
async def test_oracle_task():
    """测试两格点的三项稠密校验"""
    task = OracleTask({"progress": False})
    output = await task.process(make_input(command="oracle", L=2, R=2, n_traj=1000, t_final=0.5,
                                           initial="10", gamma=1.0))
    triangle = output.result["triangle"]
    assert max(triangle.values()) <= 1e-5
    replay = output.result["replay"]
    assert replay["gaussian_vs_dense"] <= 1e-8
    assert replay["log_norm_gap"] <= 1e-8
    assert output.result["replica"]["R"] == 2
    assert output.result["replica"]["replicated_density"]["shape"] == [16, 16]


@pytest.mark.asyncio
async def test_oracle_task_requires_integer_replicas():
    """测试非整数 R"""
    with pytest.raises(ValueError, match="integer replica count"):
        await OracleTask({"progress": False}).process(make_input(command="oracle", L=2, R=1.5, n_traj=1000))


@pytest.mark.asyncio
async def test_classify_task():
    """测试三个命名情形的分类"""
    output = await ClassifyTask().process(make_input(command="classify", all_scenarios=True, n_samples=5))
    assert output.passed
    assert output.result["summary"] == ["u1: AIII", "general: DIII", "pairing: D"]
    assert output.result["rotation_check"]["max_residual"] <= 1e-10
    assert output.metadata["named"] == ["u1", "general", "pairing"]
    assert len(output.tables["classification"][1]) == 3


@pytest.mark.asyncio
async def test_classify_single_scenario():
    """测试由开关组合得到的单个情形"""
    output = await ClassifyTask().process(make_input(command="classify", eta_nonzero=False, n_samples=2))
    assert output.result["summary"] == ["u1: AIII"]


@pytest.mark.asyncio
async def test_rgflow_task():
    """测试 R > 2 的流在极点前截断"""
    output = await RgFlowTask().process(make_input(command="rgflow", R=3.0, g0=1.0, lnL_max=30.0, steps=1000))
    assert output.result["direction"] == "strong_coupling"
    assert output.result["truncated"]
    assert output.result["pole"] == pytest.approx(8 * np.pi)
    assert len(output.tables["rgflow"][1]) == 1001


@pytest.mark.asyncio
async def test_coefficients_task():
    """测试σ模型系数与鞍点恒等式"""
    output = await CoefficientsTask().process(make_input(command="coefficients", eta=0.0, gamma=0.5, rho=0.5))
    assert output.result["D"] == pytest.approx(4.0, abs=1e-5)
    assert max(output.result["saddle_identities"].values()) <= 1e-12


@pytest.mark.asyncio
async def test_coefficients_task_unmonitored():
    """测试 γ=0 时扩散常数发散"""
    with pytest.raises(InfiniteDiffusionError):
        await CoefficientsTask().process(make_input(command="coefficients", gamma=0.0))


@pytest.mark.asyncio
async def test_unexpected_error_wrapped():
    """测试未预期的异常被包装为 TaskError"""
    with patch("monitored.tasks.rgflow_task.beta_flow", side_effect=RuntimeError("boom")):
        with pytest.raises(TaskError, match="rgflow failed: boom"):
            await RgFlowTask().process(make_input(command="rgflow"))
