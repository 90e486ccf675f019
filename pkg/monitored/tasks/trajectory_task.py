from typing import Any, Dict, Optional

import numpy as np
from loguru import logger

from ..base.base_task import BaseTask, TaskInput, TaskOutput
from ..base.errors import MonitoredError, TaskError
from ..dynamics.trajectory import density_rows, entropy_rows, run_ensemble, run_trajectory


class TrajectoryTask(BaseTask):
    """单条量子轨迹"""

    name = "trajectory"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        self.index = int(self.config.get("index", 0))
        logger.info("Trajectory Task initialized successfully")

    async def process(self, input_data: TaskInput) -> TaskOutput:
        """运行一条轨迹并输出跳跃记录与可观测量"""
        if not self.validate_input(input_data):
            raise ValueError("Invalid input: requires config")

        try:
            trajectory_config = input_data.config.trajectory_config()
            result = run_trajectory(trajectory_config, self.index)
            logger.info(f"Trajectory {self.index} recorded {len(result.record.events)} jump(s)")

            return TaskOutput(
                result={
                    "record": result.record.to_json(),
                    "final_density": result.density[-1],
                    "final_entropy": float(result.entropy[-1]),
                },
                tables={
                    "density": (["trajectory_index", "t", "site", "density"], density_rows([result])),
                    "entropy": (["trajectory_index", "t", "entropy_halfchain"], entropy_rows([result])),
                },
                records={"jump_record": [result.record.to_line()]},
                metadata={"scheme": trajectory_config.scheme.value},
            )

        except (MonitoredError, ValueError) as e:
            logger.error(f"Error running trajectory: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error running trajectory: {str(e)}")
            raise TaskError(f"trajectory failed: {str(e)}") from e


class EnsembleTask(BaseTask):
    """轨迹系综统计"""

    name = "ensemble"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        self.progress = bool(self.config.get("progress", True))
        logger.info("Ensemble Task initialized successfully")

    async def process(self, input_data: TaskInput) -> TaskOutput:
        """并行系综，按索引顺序归约"""
        if not self.validate_input(input_data):
            raise ValueError("Invalid input: requires config")

        try:
            config = input_data.config
            stats = run_ensemble(config.trajectory_config(), config.n_traj, config.workers,
                                 progress=self.progress)
            counts, edges = stats.jump_histogram

            density_table = [
                [t, site + 1, mean, err]
                for t, means, errs in zip(stats.times, stats.density_mean, stats.density_stderr)
                for site, (mean, err) in enumerate(zip(means, errs))
            ]
            entropy_table = [
                [t, mean, err, n_mean, n_err]
                for t, mean, err, n_mean, n_err in zip(stats.times, stats.entropy_mean, stats.entropy_stderr,
                                                       stats.number_mean, stats.number_stderr)
            ]
            logger.info(f"Ensemble mean jump rate {stats.mean_jump_rate:.6g} +- {stats.mean_jump_rate_stderr:.2g}")

            return TaskOutput(
                result={
                    "n_traj": stats.n_traj,
                    "mean_jump_rate": stats.mean_jump_rate,
                    "mean_jump_rate_stderr": stats.mean_jump_rate_stderr,
                    "final_entropy_mean": float(stats.entropy_mean[-1]),
                    "final_entropy_stderr": float(stats.entropy_stderr[-1]),
                },
                tables={
                    "ensemble_density": (["t", "site", "density_mean", "density_stderr"], density_table),
                    "ensemble_entropy": (["t", "entropy_mean", "entropy_stderr", "number_mean", "number_stderr"],
                                         entropy_table),
                    "jump_histogram": (["jump_count", "n_trajectories"],
                                       [[int(edge), int(n)] for edge, n in zip(edges[:-1], counts)]),
                },
                metadata={"total_jumps": int(np.sum(stats.jump_counts))},
            )

        except (MonitoredError, ValueError) as e:
            logger.error(f"Error running ensemble: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error running ensemble: {str(e)}")
            raise TaskError(f"ensemble failed: {str(e)}") from e
