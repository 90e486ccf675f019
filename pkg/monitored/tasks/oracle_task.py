from typing import Any, Dict, Optional

import numpy as np
from loguru import logger

from ..base.base_task import BaseTask, TaskInput, TaskOutput
from ..base.errors import MonitoredError, TaskError
from ..dynamics.exactsmall import (
    dense_density,
    dense_moments,
    density_matrix_to_json,
    evolve_lindblad_dense,
    evolve_replicated,
    init_dense,
    mc_replicated_average,
    replay_record,
    replicate,
)
from ..dynamics.lindblad import evolve_moments, init_moments
from ..dynamics.trajectory import replay_gaussian, run_trajectory
from .compare_task import z_scores

REPLICA_Z_THRESHOLD = 3.0
TRIANGLE_TOLERANCE = 1e-5
REPLAY_TOLERANCE = 1e-8
TRIANGLE_DT = 1e-4


class OracleTask(BaseTask):
    """稠密希尔伯特空间预言机：复制主方程、R=1 三角校验与跳跃记录重放"""

    name = "oracle"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        self.progress = bool(self.config.get("progress", True))
        logger.info("Oracle Task initialized successfully")

    def _replica_check(self, config) -> Dict[str, Any]:
        params = config.model_params()
        R = config.replica_count()
        rho0 = init_dense(config.initial, params).rho
        deterministic = evolve_replicated(replicate(rho0, R), config.t_final, config.dt, params, richardson=True)
        sampled = mc_replicated_average(config.trajectory_config(), R, config.n_traj, config.workers,
                                        progress=self.progress)
        z = z_scores(sampled.density.matrix, sampled.stderr, deterministic.matrix)
        logger.info(f"Replicated master equation vs Monte Carlo: max {float(np.max(z)):.3f} standard errors")
        return {
            "R": R,
            "max_z": float(np.max(z)),
            "trace_replicated": deterministic.trace,
            "trace_monte_carlo": sampled.density.trace,
            "replicated_density": density_matrix_to_json(deterministic.matrix),
        }

    def _triangle_check(self, config) -> Dict[str, Any]:
        params = config.model_params()
        rho0 = init_dense(config.initial, params).rho
        dense = evolve_lindblad_dense(rho0, config.t_final, params)
        replicated = evolve_replicated(replicate(rho0, 1), config.t_final, TRIANGLE_DT, params, richardson=True)
        moments = evolve_moments(init_moments(params, config.initial), config.t_final, params,
                                 config.dt_inner or TRIANGLE_DT)

        def gap(first, second):
            return max(float(np.max(np.abs(first[0] - second[0]))), float(np.max(np.abs(first[1] - second[1]))))

        dense_cf = dense_moments(dense, params.L)
        replicated_cf = dense_moments(replicated.matrix, params.L)
        moment_cf = (moments.C, moments.F)
        result = {
            "dense_vs_replicated": gap(dense_cf, replicated_cf),
            "dense_vs_moments": gap(dense_cf, moment_cf),
            "replicated_vs_moments": gap(replicated_cf, moment_cf),
        }
        logger.info(f"R=1 consistency gaps: {result}")
        return result

    def _replay_check(self, config) -> Dict[str, Any]:
        params = config.model_params()
        trajectory = run_trajectory(config.trajectory_config(), 0)
        record = trajectory.record
        gaussian = replay_gaussian(record, params, config.initial)
        dense = replay_record(record, params, config.initial)
        density_gap = float(np.max(np.abs(gaussian.density - dense_density(dense.vector, params.L))))
        run_gap = float(np.max(np.abs(trajectory.density[-1] - gaussian.density)))
        return {
            "n_jumps": len(record.events),
            "gaussian_vs_dense": density_gap,
            "trajectory_vs_replay": run_gap,
            "log_norm_gap": abs(gaussian.log_norm - dense.log_norm),
        }

    async def process(self, input_data: TaskInput) -> TaskOutput:
        """三项稠密校验"""
        if not self.validate_input(input_data):
            raise ValueError("Invalid input: requires config")

        try:
            config = input_data.config
            replica = self._replica_check(config)
            triangle = self._triangle_check(config)
            replay = self._replay_check(config)
            passed = (replica["max_z"] <= REPLICA_Z_THRESHOLD
                      and max(triangle.values()) <= TRIANGLE_TOLERANCE
                      and replay["gaussian_vs_dense"] <= REPLAY_TOLERANCE)
            logger.info(f"Oracle checks finished; passed={passed}")
            return TaskOutput(result={"replica": replica, "triangle": triangle, "replay": replay}, passed=passed)

        except (MonitoredError, ValueError) as e:
            logger.error(f"Error running dense oracle: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error running dense oracle: {str(e)}")
            raise TaskError(f"oracle failed: {str(e)}") from e
