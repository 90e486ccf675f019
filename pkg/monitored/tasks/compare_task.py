import asyncio
from typing import Any, Dict, Optional

import numpy as np
from loguru import logger

from ..base.base_task import BaseTask, TaskInput, TaskOutput
from ..base.errors import MonitoredError, TaskError
from ..dynamics.lindblad import evolve_moments_series, init_moments
from ..dynamics.trajectory import run_ensemble

# 轨迹平均与矩方程之差允许的标准误差倍数
Z_THRESHOLD = 4.0


def z_scores(mean: np.ndarray, stderr: np.ndarray, reference: np.ndarray) -> np.ndarray:
    """|mean − reference| / stderr，零误差时仅精确相等记为0"""
    diff = np.abs(mean - reference)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = diff / stderr
    return np.where(stderr > 0, z, np.where(diff <= 1e-12, 0.0, np.inf))


class CompareTask(BaseTask):
    """轨迹系综与Lindblad矩方程的等价性检验"""

    name = "compare"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        self.threshold = float(self.config.get("z_threshold", Z_THRESHOLD))
        self.progress = bool(self.config.get("progress", True))
        logger.info("Compare Task initialized successfully")

    async def process(self, input_data: TaskInput) -> TaskOutput:
        """同时运行系综与矩方程，比较格点密度"""
        if not self.validate_input(input_data):
            raise ValueError("Invalid input: requires config")

        try:
            config = input_data.config
            params = config.model_params()
            trajectory_config = config.trajectory_config()
            times = trajectory_config.effective_sample_times

            stats, series = await asyncio.gather(
                asyncio.to_thread(run_ensemble, trajectory_config, config.n_traj, config.workers,
                                  False, self.progress),
                asyncio.to_thread(evolve_moments_series, init_moments(params, config.initial), times, params,
                                  config.dt_inner),
            )
            reference = np.array([np.real(np.diag(state.C)) for state in series])
            z = z_scores(stats.density_mean, stats.density_stderr, reference)
            max_z = float(np.max(z))
            passed = max_z <= self.threshold
            deviation = float(np.max(np.abs(series[-1].C - 0.5 * np.eye(params.L))))
            logger.info(f"Max trajectory-moment deviation {max_z:.3f} standard errors "
                        f"(threshold {self.threshold}); passed={passed}")

            rows = [
                [t, site + 1, m, s, r, zz]
                for t, means, errs, refs, zs in zip(times, stats.density_mean, stats.density_stderr, reference, z)
                for site, (m, s, r, zz) in enumerate(zip(means, errs, refs, zs))
            ]
            return TaskOutput(
                result={
                    "max_z": max_z,
                    "z_threshold": self.threshold,
                    "n_traj": stats.n_traj,
                    "final_max_deviation_from_half": deviation,
                },
                passed=passed,
                tables={"compare": (["t", "site", "density_mean", "density_stderr", "lindblad", "z"], rows)},
            )

        except (MonitoredError, ValueError) as e:
            logger.error(f"Error comparing ensemble with moments: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error comparing ensemble with moments: {str(e)}")
            raise TaskError(f"compare failed: {str(e)}") from e
