from typing import Any, Dict, Optional

import numpy as np
from loguru import logger

from ..base.base_task import BaseTask, TaskInput, TaskOutput
from ..base.errors import MonitoredError, TaskError
from ..dynamics.lindblad import evolve_moments_series, green_rows, init_moments, moment_rows, steady_state


class LindbladTask(BaseTask):
    """平均动力学：单体矩方程、稳态与鞍点格林函数"""

    name = "lindblad"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        logger.info("Lindblad Task initialized successfully")

    async def process(self, input_data: TaskInput) -> TaskOutput:
        """在采样时刻积分矩方程"""
        if not self.validate_input(input_data):
            raise ValueError("Invalid input: requires config")

        try:
            config = input_data.config
            params = config.model_params()
            times = config.trajectory_config().effective_sample_times
            series = evolve_moments_series(init_moments(params, config.initial), times, params, config.dt_inner)
            final = series[-1]
            half_filling = float(np.max(np.abs(final.C - 0.5 * np.eye(params.L))))
            logger.info(f"Moments evolved to t={final.time:.6g}, max|C - 1/2| = {half_filling:.3e}")

            result = {
                "final_time": final.time,
                "final_density": np.real(np.diag(final.C)),
                "max_deviation_from_half": half_filling,
            }
            if params.gamma > 0:
                steady = steady_state(params, dt_inner=config.dt_inner)
                result["steady_state"] = {
                    "time": steady.time,
                    "max_deviation_from_half": float(np.max(np.abs(steady.C - 0.5 * np.eye(params.L)))),
                }

            tables = {"moments": (["t", "i", "j", "re_C", "im_C", "re_F", "im_F"], moment_rows(series))}
            if config.omegas:
                columns = ["q", "omega"] + [f"{part}_G{a}{b}" for a in (1, 2) for b in (1, 2) for part in ("re", "im")]
                tables["green"] = (columns, green_rows(params, params.momentum_grid(), config.omegas))

            return TaskOutput(result=result, tables=tables)

        except (MonitoredError, ValueError) as e:
            logger.error(f"Error integrating moments: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error integrating moments: {str(e)}")
            raise TaskError(f"lindblad failed: {str(e)}") from e
