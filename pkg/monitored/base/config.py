import os
from enum import Enum
from typing import Annotated, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from ..dynamics.trajectory import MASK64, Scheme, TrajectoryConfig
from ..physics.model import Boundary, FiniteFloat, ModelParams

PositiveFloat = Annotated[float, Field(gt=0.0, allow_inf_nan=False)]


class Command(str, Enum):
    TRAJECTORY = "trajectory"
    ENSEMBLE = "ensemble"
    LINDBLAD = "lindblad"
    COMPARE = "compare"
    ORACLE = "oracle"
    CLASSIFY = "classify"
    RGFLOW = "rgflow"
    COEFFICIENTS = "coefficients"


class EmitFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


def default_workers() -> int:
    return int(os.getenv("MONITORED_WORKERS", "1"))


def default_output_prefix() -> str:
    return os.path.join(os.getenv("MONITORED_OUTPUT_DIR", "results"), "run")


class ExperimentConfig(BaseModel):
    """一次实验的完整配置（扁平键，拒绝未知键）"""
    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)

    command: Command
    # 模型
    L: Annotated[int, Field(ge=1)] = 32
    J: FiniteFloat = 1.0
    eta: FiniteFloat = 0.5
    h: FiniteFloat = 0.0
    gamma: Annotated[float, Field(ge=0.0, allow_inf_nan=False)] = 0.5
    boundary: Boundary = Boundary.PERIODIC
    # 轨迹
    dt: PositiveFloat = 1e-3
    t_final: PositiveFloat = 10.0
    scheme: Scheme = Scheme.EULER_POISSON
    sample_times: Optional[List[float]] = None
    subsystem: Optional[Tuple[int, int]] = None
    initial: str = "neel"
    n_traj: Annotated[int, Field(ge=1)] = 2000
    workers: Annotated[int, Field(ge=1)] = Field(default_factory=default_workers)
    master_seed: Annotated[int, Field(ge=0, le=MASK64)] = 42
    # 矩方程与格林函数
    dt_inner: Optional[PositiveFloat] = None
    omegas: Optional[List[FiniteFloat]] = None
    # 复制、对称性与σ模型
    R: Annotated[float, Field(ge=1.0, allow_inf_nan=False)] = 1.0
    n_samples: Annotated[int, Field(ge=1)] = 100
    J_nonzero: bool = True
    eta_nonzero: bool = True
    gamma_nonzero: bool = True
    all_scenarios: bool = False
    rho: Annotated[float, Field(ge=0.0, le=1.0)] = 0.5
    g0: Annotated[float, Field(ge=0.0, allow_inf_nan=False)] = 0.1
    lnL_max: PositiveFloat = 10.0
    steps: Annotated[int, Field(ge=1)] = 1000
    # 输出
    out: str = Field(default_factory=default_output_prefix)
    format: EmitFormat = EmitFormat.CSV
    log_level: str = "INFO"

    @field_validator("log_level")
    @classmethod
    def _upper_level(cls, value: str) -> str:
        value = value.upper()
        if value not in ("TRACE", "DEBUG", "INFO", "SUCCESS", "WARNING", "ERROR", "CRITICAL"):
            raise ValueError(f"unknown log level {value}")
        return value

    def model_params(self) -> ModelParams:
        return ModelParams(J=self.J, eta=self.eta, h=self.h, gamma=self.gamma, L=self.L, boundary=self.boundary)

    def trajectory_config(self) -> TrajectoryConfig:
        return TrajectoryConfig(
            params=self.model_params(),
            dt=self.dt,
            t_final=self.t_final,
            scheme=self.scheme,
            sample_times=tuple(self.sample_times or ()),
            master_seed=self.master_seed,
            subsystem=self.subsystem,
            initial=self.initial,
        )

    def replica_count(self) -> int:
        """稠密复制计算需要整数 R"""
        if self.R != int(self.R):
            raise ValueError(f"Invalid input: requires an integer replica count, got R={self.R}")
        return int(self.R)
