from unittest.mock import patch

import pytest
from pydantic import ValidationError

from monitored.base.config import Command, EmitFormat, ExperimentConfig
from monitored.dynamics.trajectory import Scheme


def test_defaults():
    """测试默认配置"""
    with patch.dict("os.environ", {}, clear=True):
        config = ExperimentConfig(command="rgflow")
    assert config.command == Command.RGFLOW
    assert config.format == EmitFormat.CSV
    assert config.workers == 1
    assert config.out == "results/run"
    assert config.master_seed == 42
    assert config.scheme == Scheme.EULER_POISSON


def test_environment_defaults():
    """测试从环境变量读取 worker 数与输出目录"""
    with patch.dict("os.environ", {"MONITORED_WORKERS": "3", "MONITORED_OUTPUT_DIR": "/tmp/monitored"}):
        config = ExperimentConfig(command="ensemble")
    assert config.workers == 3
    assert config.out == "/tmp/monitored/run"


def test_unknown_key_rejected():
    """测试未知键被拒绝"""
    with pytest.raises(ValidationError) as excinfo:
        ExperimentConfig(command="rgflow", temperature=1.0)
    assert excinfo.value.errors()[0]["loc"] == ("temperature",)


def test_invalid_values_rejected():
    """测试非法数值"""
    with pytest.raises(ValidationError):
        ExperimentConfig(command="lindblad", gamma=float("nan"))
    with pytest.raises(ValidationError):
        ExperimentConfig(command="lindblad", gamma=-0.1)
    with pytest.raises(ValidationError):
        ExperimentConfig(command="classify", rho=1.5)
    with pytest.raises(ValidationError):
        ExperimentConfig(command="plot")


def test_log_level():
    """测试日志级别大小写与校验"""
    assert ExperimentConfig(command="rgflow", log_level="debug").log_level == "DEBUG"
    with pytest.raises(ValidationError, match="unknown log level"):
        ExperimentConfig(command="rgflow", log_level="verbose")


def test_replica_count():
    """测试稠密复制需要整数 R"""
    assert ExperimentConfig(command="oracle", R=2.0).replica_count() == 2
    with pytest.raises(ValueError, match="integer replica count"):
        ExperimentConfig(command="oracle", R=1.5).replica_count()


def test_trajectory_config():
    """测试扁平配置到轨迹配置的转换"""
    config = ExperimentConfig(command="trajectory", L=8, gamma=0.4, dt=1e-2, t_final=1.0,
                              sample_times=[0.5, 1.0], subsystem=(0, 4), initial="10101010")
    trajectory_config = config.trajectory_config()
    assert trajectory_config.sample_times == (0.5, 1.0)
    assert trajectory_config.params.L == 8
    assert trajectory_config.params.gamma == 0.4
    assert trajectory_config.subsystem == (0, 4)
    assert trajectory_config.initial == "10101010"


def test_trajectory_config_checks_euler_validity():
    """测试 γ·dt·L 过大时拒绝 Euler 方案"""
    config = ExperimentConfig(command="ensemble", L=32, gamma=0.5, dt=1e-2)
    with pytest.raises(ValidationError, match="gamma\\*dt\\*L"):
        config.trajectory_config()
    exact = ExperimentConfig(command="ensemble", L=32, gamma=0.5, dt=1e-2, scheme="exact_waiting_time")
    assert exact.trajectory_config().scheme == Scheme.EXACT_WAITING_TIME


def test_config_is_frozen():
    """测试配置不可变"""
    config = ExperimentConfig(command="rgflow")
    with pytest.raises(ValidationError):
        config.g0 = 0.5
