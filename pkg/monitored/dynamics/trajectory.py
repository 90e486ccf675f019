from dataclasses import dataclass, field
from enum import Enum
from typing import Annotated, Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..base.errors import ImpossibleRecordError, StepSizeError, ZeroProbabilityJumpError
from ..physics.gaussian import (
    GaussianState,
    apply_jump,
    build_propagator,
    entanglement_entropy,
    init_state,
    nonhermitian_propagator,
    observables,
    propagate_nonhermitian,
)
from ..physics.model import ModelParams
from .parallel import run_indexed

MASK64 = (1 << 64) - 1
# Euler 一阶有效性条件 γ·dt·L 的上限
EULER_VALIDITY = 0.1


class Scheme(str, Enum):
    """轨迹采样方案"""
    EULER_POISSON = "euler_poisson"
    EXACT_WAITING_TIME = "exact_waiting_time"
    NO_CLICK = "no_click"


class TrajectoryConfig(BaseModel):
    """单条轨迹与系综的配置"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    params: ModelParams = Field(default_factory=ModelParams)
    dt: Annotated[float, Field(gt=0.0, allow_inf_nan=False)] = 1e-3
    t_final: Annotated[float, Field(gt=0.0, allow_inf_nan=False)] = 1.0
    scheme: Scheme = Scheme.EULER_POISSON
    sample_times: Tuple[float, ...] = ()
    master_seed: Annotated[int, Field(ge=0, le=MASK64)] = 42
    subsystem: Optional[Tuple[int, int]] = None
    initial: str = "neel"

    @model_validator(mode="after")
    def _check_invariants(self) -> "TrajectoryConfig":
        p = self.params
        if self.scheme == Scheme.EULER_POISSON and p.gamma * self.dt * p.L >= EULER_VALIDITY:
            raise ValueError(f"gamma*dt*L = {p.gamma * self.dt * p.L:.3g} must be below {EULER_VALIDITY}")
        times = self.sample_times
        if any(t < 0 or t > self.t_final for t in times):
            raise ValueError("sample_times must lie in [0, t_final]")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("sample_times must be strictly increasing")
        if self.subsystem is not None:
            start, stop = self.subsystem
            if not 0 <= start < stop <= p.L:
                raise ValueError(f"subsystem must satisfy 0 <= start < stop <= {p.L}")
        return self

    @property
    def effective_sample_times(self) -> Tuple[float, ...]:
        return self.sample_times or (self.t_final,)

    @property
    def effective_subsystem(self) -> Tuple[int, int]:
        return self.subsystem or (0, max(1, self.params.L // 2))


@dataclass
class JumpRecord:
    """轨迹 𝒯 = {(x_m, t_m)}，格点编号从1开始"""
    events: List[Tuple[int, float]]
    log_norm: float
    seed: int
    scheme: str
    index: int = 0
    dt: float = 0.0
    t_final: float = 0.0

    def to_json(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "seed": self.seed,
            "events": [[x, t] for x, t in self.events],
            "log_norm": self.log_norm,
            "scheme": self.scheme,
            "dt": self.dt,
            "t_final": self.t_final,
        }

    def to_line(self) -> Dict[str, Any]:
        """JSON Lines 的一行：索引、种子与事件"""
        return {"index": self.index, "seed": self.seed, "events": [[x, t] for x, t in self.events]}


@dataclass
class TrajectoryResult:
    """采样时刻的可观测量时间序列"""
    index: int
    times: np.ndarray
    density: np.ndarray
    total_number: np.ndarray
    entropy: np.ndarray
    record: JumpRecord


@dataclass
class EnsembleStats:
    """系综平均与标准误差"""
    times: np.ndarray
    density_mean: np.ndarray
    density_stderr: np.ndarray
    number_mean: np.ndarray
    number_stderr: np.ndarray
    entropy_mean: np.ndarray
    entropy_stderr: np.ndarray
    n_traj: int
    jump_counts: np.ndarray
    jump_histogram: Tuple[np.ndarray, np.ndarray]
    mean_jump_rate: float
    mean_jump_rate_stderr: float
    trajectories: List[TrajectoryResult] = field(default_factory=list)


def splitmix64(x: int) -> int:
    """SplitMix64 雪崩混合（Steele, Lea & Flood 常数）"""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trajectory_seed(master_seed: int, index: int) -> int:
    return splitmix64((master_seed ^ index) & MASK64)


def trajectory_rng(master_seed: int, index: int) -> np.random.Generator:
    """第 index 条轨迹的独立随机流"""
    return np.random.Generator(np.random.PCG64(trajectory_seed(master_seed, index)))


def select_channel(weights: np.ndarray, u: float) -> int:
    """累积权重首次超过 u 的通道"""
    cumulative = np.cumsum(weights)
    return int(min(np.searchsorted(cumulative, u, side="right"), len(weights) - 1))


def step_euler(state: GaussianState, dt: float, rng: np.random.Generator, params: ModelParams,
               propagator: Optional[np.ndarray] = None) -> Tuple[GaussianState, Optional[int]]:
    """一个 Poisson 增量步：至多一次跳跃，随后无点击传播

    跳跃判定使用步起点的态；发生跳跃时先作用 n_j，再传播 dt，
    记录时间取步起点，因此精确重放与本步一致。
    """
    probabilities = params.gamma * state.density * dt
    p_total = float(probabilities.sum())
    if p_total >= 1.0:
        raise StepSizeError(f"Total jump probability {p_total:.3g} per step is not below 1")

    site = None
    u = rng.random()
    if u < p_total:
        site = select_channel(probabilities, u)
        state = apply_jump(state, site)
    state = propagate_nonhermitian(state, dt, params, propagator)
    return state, site


def sample_waiting_time(state: GaussianState, rng: np.random.Generator, params: ModelParams,
                        dt: float, t_final: float,
                        propagator: Optional[np.ndarray] = None) -> Tuple[float, GaussianState]:
    """等待时间采样：积分存活概率 S(t) 直至 S < u"""
    u = 1.0 - rng.random()
    log_u = np.log(u)
    start = state.time
    log_survival = 0.0

    while state.time < t_final - 1e-12 * max(1.0, t_final):
        h = min(dt, t_final - state.time)
        step = propagate_nonhermitian(state, h, params, propagator if h == dt else build_propagator(params, h))
        log_next = log_survival + 2.0 * (step.log_norm - state.log_norm)
        if log_next < log_u:
            s0, s1 = np.exp(log_survival), np.exp(log_next)
            fraction = (s0 - u) / (s0 - s1)
            # 跳跃时刻严格晚于步起点
            tau = max(fraction * h, np.spacing(max(state.time, 1.0)))
            state = propagate_nonhermitian(state, tau, params, build_propagator(params, tau))
            return state.time - start, state
        state, log_survival = step, log_next

    return float("inf"), state


def _observe(state: GaussianState, subsystem: Tuple[int, int]) -> Tuple[np.ndarray, float, float]:
    density = observables(state).density
    return density, float(density.sum()), entanglement_entropy(state, subsystem)


def run_trajectory(config: TrajectoryConfig, index: int) -> TrajectoryResult:
    """由 (master_seed, index) 唯一确定的一条量子轨迹"""
    params = config.params
    rng = trajectory_rng(config.master_seed, index)
    state = init_state(params, config.initial)
    subsystem = config.effective_subsystem
    sample_times = config.effective_sample_times
    propagator = nonhermitian_propagator(params, config.dt)

    events: List[Tuple[int, float]] = []
    observations = []

    if config.scheme == Scheme.EXACT_WAITING_TIME:
        for t_stop in list(sample_times) + [config.t_final]:
            while True:
                tau, state = sample_waiting_time(state, rng, params, config.dt, t_stop, propagator)
                if np.isinf(tau):
                    break
                density = state.density
                site = select_channel(density, rng.random() * density.sum())
                events.append((site + 1, state.time))
                state = apply_jump(state, site)
            if len(observations) < len(sample_times):
                observations.append(_observe(state, subsystem))
    else:
        n_steps = int(round(config.t_final / config.dt))
        sample_steps = [int(round(t / config.dt)) for t in sample_times]
        pending = list(sample_steps)
        while pending and pending[0] == 0:
            observations.append(_observe(state, subsystem))
            pending.pop(0)
        for step in range(1, n_steps + 1):
            t_start = state.time
            if config.scheme == Scheme.EULER_POISSON:
                state, site = step_euler(state, config.dt, rng, params, propagator)
                if site is not None:
                    events.append((site + 1, t_start))
            else:
                state = propagate_nonhermitian(state, config.dt, params, propagator)
            while pending and pending[0] == step:
                observations.append(_observe(state, subsystem))
                pending.pop(0)

    record = JumpRecord(events=events, log_norm=state.log_norm, seed=trajectory_seed(config.master_seed, index),
                        scheme=config.scheme.value, index=index, dt=config.dt, t_final=config.t_final)
    logger.debug(f"Trajectory {index} finished with {len(events)} jump(s)")
    return TrajectoryResult(
        index=index,
        times=np.asarray(sample_times, dtype=float),
        density=np.array([o[0] for o in observations]),
        total_number=np.array([o[1] for o in observations]),
        entropy=np.array([o[2] for o in observations]),
        record=record,
    )


def replay_gaussian(record: JumpRecord, params: ModelParams,
                    initial: Union[str, Sequence[int], GaussianState] = "neel") -> GaussianState:
    """以精确指数在跳跃之间重放记录"""
    state = initial if isinstance(initial, GaussianState) else init_state(params, initial)
    for site, t in record.events:
        if t > state.time:
            state = propagate_nonhermitian(state, t - state.time, params, build_propagator(params, t - state.time))
        try:
            state = apply_jump(state, site - 1)
        except ZeroProbabilityJumpError as e:
            raise ImpossibleRecordError(f"Record jump at site {site}, t={t} is impossible: {str(e)}") from e
    if record.t_final > state.time:
        remaining = record.t_final - state.time
        state = propagate_nonhermitian(state, remaining, params, build_propagator(params, remaining))
    return state


def _stderr(samples: np.ndarray) -> np.ndarray:
    return np.std(samples, axis=0, ddof=1) / np.sqrt(samples.shape[0])


def summarize(results: Sequence[TrajectoryResult], t_final: float) -> EnsembleStats:
    """按索引顺序归约为系综统计"""
    density = np.stack([r.density for r in results])
    number = np.stack([r.total_number for r in results])
    entropy = np.stack([r.entropy for r in results])
    counts = np.array([len(r.record.events) for r in results])
    rates = counts / t_final
    histogram = np.histogram(counts, bins=np.arange(counts.max() + 2))
    return EnsembleStats(
        times=results[0].times,
        density_mean=density.mean(axis=0),
        density_stderr=_stderr(density),
        number_mean=number.mean(axis=0),
        number_stderr=_stderr(number),
        entropy_mean=entropy.mean(axis=0),
        entropy_stderr=_stderr(entropy),
        n_traj=len(results),
        jump_counts=counts,
        jump_histogram=histogram,
        mean_jump_rate=float(rates.mean()),
        mean_jump_rate_stderr=float(_stderr(rates)),
    )


def run_ensemble(config: TrajectoryConfig, n_traj: int, workers: int = 1,
                 keep_trajectories: bool = False, progress: bool = False) -> EnsembleStats:
    """并行系综，结果与worker数无关"""
    if n_traj < 2:
        raise ValueError("Invalid input: requires n_traj >= 2")
    logger.info(f"Running ensemble of {n_traj} trajectories ({config.scheme.value}) on {workers} worker(s)")
    results = run_indexed(run_trajectory, config, n_traj, workers, desc="trajectories", progress=progress)
    stats = summarize(results, config.t_final)
    if keep_trajectories:
        stats.trajectories = list(results)
    return stats


def density_rows(results: Sequence[TrajectoryResult]) -> List[list]:
    """(trajectory_index, t, site, density) 行"""
    rows = []
    for r in results:
        for t, profile in zip(r.times, r.density):
            rows.extend([r.index, t, site + 1, value] for site, value in enumerate(profile))
    return rows


def entropy_rows(results: Sequence[TrajectoryResult]) -> List[list]:
    """(trajectory_index, t, entropy_halfchain) 行"""
    return [[r.index, t, s] for r in results for t, s in zip(r.times, r.entropy)]
