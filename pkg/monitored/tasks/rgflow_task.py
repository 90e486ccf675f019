from typing import Any, Dict, Optional

from loguru import logger

from ..base.base_task import BaseTask, TaskInput, TaskOutput
from ..base.errors import MonitoredError, TaskError
from ..fieldtheory.nlsm import beta_flow, coefficients, flow_rows
from ..fieldtheory.symmetry import saddle_density_identities


class RgFlowTask(BaseTask):
    """β 函数流"""

    name = "rgflow"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        logger.info("RG Flow Task initialized successfully")

    async def process(self, input_data: TaskInput) -> TaskOutput:
        if not self.validate_input(input_data):
            raise ValueError("Invalid input: requires config")

        try:
            config = input_data.config
            flow = beta_flow(config.g0, config.R, config.lnL_max, config.steps)
            return TaskOutput(
                result={
                    "R": flow.R,
                    "g0": flow.g0,
                    "g_final": float(flow.g[-1]),
                    "lnL_final": float(flow.lnL[-1]),
                    "direction": flow.direction.value,
                    "pole": flow.pole,
                    "truncated": flow.truncated,
                    "closed_form_residual": flow.closed_form_residual,
                },
                tables={"rgflow": (["lnL", "g"], flow_rows(flow))},
            )

        except (MonitoredError, ValueError) as e:
            logger.error(f"Error integrating beta function: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error integrating beta function: {str(e)}")
            raise TaskError(f"rgflow failed: {str(e)}") from e


class CoefficientsTask(BaseTask):
    """σ模型系数"""

    name = "coefficients"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        logger.info("Coefficients Task initialized successfully")

    async def process(self, input_data: TaskInput) -> TaskOutput:
        if not self.validate_input(input_data):
            raise ValueError("Invalid input: requires config")

        try:
            config = input_data.config
            coeffs = coefficients(config.model_params(), config.rho)
            logger.info(f"D = {coeffs.D:.6g}, stiffness = {coeffs.stiffness:.6g}")
            return TaskOutput(result={**coeffs.to_report(), "saddle_identities": saddle_density_identities(config.rho)})

        except (MonitoredError, ValueError) as e:
            logger.error(f"Error computing sigma model coefficients: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error computing sigma model coefficients: {str(e)}")
            raise TaskError(f"coefficients failed: {str(e)}") from e
