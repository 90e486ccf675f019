from typing import Any, Dict, List, Optional

import numpy as np
from loguru import logger

from ..base.base_task import BaseTask, TaskInput, TaskOutput
from ..base.errors import MonitoredError, TaskError
from ..fieldtheory.symmetry import (
    SCENARIOS,
    ConstraintScenario,
    classify_scenario,
    free_parameter_count,
    nullspace_oracle,
    scenario_name,
    sector_table,
    verify_rotation_construction,
)

ORACLE_REPLICAS = (1, 2, 3)
ROTATION_REPLICAS = 3


def method_agreement(scenario: ConstraintScenario) -> List[Dict[str, Any]]:
    """参数计数与数值零空间在 R = 1, 2, 3 上的比较"""
    rows = []
    for saddle in (False, True):
        variant = scenario.with_saddle(saddle)
        table = sector_table(variant)
        for R in ORACLE_REPLICAS:
            counted, numerical = free_parameter_count(table, R), nullspace_oracle(variant, R)
            rows.append({"saddle": saddle, "R": R, "count": counted, "nullspace": numerical,
                         "agree": counted == numerical})
    return rows


class ClassifyTask(BaseTask):
    """复制作用量的对称性分类"""

    name = "classify"

    def __init__(self, config: Optional[Dict[str, Any]] = None):
        super().__init__(config)
        logger.info("Classify Task initialized successfully")

    async def process(self, input_data: TaskInput) -> TaskOutput:
        """扇区表、N_f 多项式、G/H 与 AZ 类"""
        if not self.validate_input(input_data):
            raise ValueError("Invalid input: requires config")

        try:
            config = input_data.config
            if config.all_scenarios:
                scenarios = list(SCENARIOS.values())
            else:
                scenarios = [ConstraintScenario(J_nonzero=config.J_nonzero, eta_nonzero=config.eta_nonzero,
                                                gamma_nonzero=config.gamma_nonzero)]

            reports, rows, passed = [], [], True
            for scenario in scenarios:
                result = classify_scenario(scenario)
                report = result.to_report()
                report["method_agreement"] = method_agreement(scenario)
                passed = passed and all(r["agree"] for r in report["method_agreement"])
                reports.append(report)
                rows.append([report["scenario"], report["class"], report["manifold"] or "",
                             report["N_f"], report["N_f_saddle"]])

            rng = np.random.default_rng(config.master_seed)
            rotations = [verify_rotation_construction(ROTATION_REPLICAS, rng) for _ in range(config.n_samples)]
            worst = max(max(r.residuals.values()) for r in rotations)
            summary = [f"{r['scenario']}: {r['class']}" for r in reports]
            logger.info(f"Classification summary: {'; '.join(summary)}")

            return TaskOutput(
                result={
                    "scenarios": reports,
                    "summary": summary,
                    "rotation_check": {"R": ROTATION_REPLICAS, "draws": len(rotations), "max_residual": worst},
                },
                passed=passed,
                tables={"classification": (["scenario", "class", "manifold", "N_f", "N_f_saddle"], rows)},
                metadata={"named": [scenario_name(s) for s in scenarios]},
            )

        except (MonitoredError, ValueError) as e:
            logger.error(f"Error classifying scenarios: {str(e)}")
            raise
        except Exception as e:
            logger.error(f"Error classifying scenarios: {str(e)}")
            raise TaskError(f"classify failed: {str(e)}") from e
