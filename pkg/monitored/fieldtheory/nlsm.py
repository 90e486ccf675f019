from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from loguru import logger

from ..base.errors import InfiniteDiffusionError
from ..physics.model import ModelParams, N_K, v0_squared

POLE_MARGIN = 0.9
MARGINAL_TOLERANCE = 1e-12


class FlowDirection(str, Enum):
    WEAK = "weak_coupling"
    MARGINAL = "marginal"
    STRONG = "strong_coupling"


@dataclass
class NlsmCoefficients:
    """非线性σ模型系数

    g_B 约定为刚度前因子 2ρ(1−ρ)v₀/γ 的倒数。
    """
    v0_squared: float
    D: float
    rho: float
    nu: float
    stiffness: float
    g_B: float
    gamma: float

    def to_report(self) -> Dict[str, Any]:
        return {
            "v0_squared": self.v0_squared,
            "D": self.D,
            "rho": self.rho,
            "nu": self.nu,
            "stiffness": self.stiffness,
            "g_B": self.g_B,
            "g_B_convention": "g_B = 1 / (2 rho (1 - rho) v0 / gamma)",
        }


@dataclass
class FlowState:
    g: float
    lnL: float
    R: float


@dataclass
class FlowResult:
    """β 函数流"""
    R: float
    g0: float
    states: List[FlowState]
    direction: FlowDirection
    pole: Optional[float] = None
    truncated: bool = False
    closed_form_residual: float = 0.0
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def lnL(self) -> np.ndarray:
        return np.array([s.lnL for s in self.states])

    @property
    def g(self) -> np.ndarray:
        return np.array([s.g for s in self.states])


def coefficients(params: ModelParams, rho: float = 0.5, n_k: int = N_K) -> NlsmCoefficients:
    """D = v₀²/γ，刚度 2ρ(1−ρ)v₀/γ"""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("Invalid input: requires 0 <= rho <= 1")
    if params.gamma == 0:
        raise InfiniteDiffusionError("Diffusion constant diverges at gamma = 0")
    v2 = v0_squared(params, n_k)
    stiffness = 2.0 * rho * (1.0 - rho) * np.sqrt(v2) / params.gamma
    return NlsmCoefficients(
        v0_squared=v2,
        D=v2 / params.gamma,
        rho=rho,
        nu=4.0 * rho * (1.0 - rho),
        stiffness=stiffness,
        g_B=1.0 / stiffness if stiffness > 0 else float("inf"),
        gamma=params.gamma,
    )


def beta_function(g: float, R: float) -> float:
    """dg/dlnL = (R − 2)g²/(8π)"""
    return (R - 2.0) * g * g / (8.0 * np.pi)


def closed_form_coupling(g0: float, R: float, lnL):
    """g(ℓ) = g₀ / (1 − (R−2)g₀ℓ/(8π))"""
    return g0 / (1.0 - (R - 2.0) * g0 * np.asarray(lnL) / (8.0 * np.pi))


def flow_direction(R: float) -> FlowDirection:
    if abs(R - 2.0) <= MARGINAL_TOLERANCE:
        return FlowDirection.MARGINAL
    return FlowDirection.WEAK if R < 2.0 else FlowDirection.STRONG


def pole_location(g0: float, R: float) -> Optional[float]:
    """ℓ* = 8π/((R−2)g₀)，仅在 R > 2 且 g₀ > 0 时存在"""
    if g0 <= 0 or R - 2.0 <= MARGINAL_TOLERANCE:
        return None
    return 8.0 * np.pi / ((R - 2.0) * g0)


def beta_flow(g0: float, R: float, lnL_max: float, steps: int) -> FlowResult:
    """RK4 积分 β 函数，并与解析解对照"""
    if g0 < 0:
        raise ValueError("Invalid input: requires g0 >= 0")
    if steps < 1:
        raise ValueError("Invalid input: requires steps >= 1")
    if lnL_max <= 0:
        raise ValueError("Invalid input: requires lnL_max > 0")

    pole = pole_location(g0, R)
    end, truncated = lnL_max, False
    if pole is not None and pole <= lnL_max:
        end, truncated = POLE_MARGIN * pole, True
        logger.warning(f"Coupling diverges at lnL* = {pole:.6g}; truncating flow at {end:.6g}")

    h = end / steps
    g = g0
    states = [FlowState(g=g0, lnL=0.0, R=R)]
    for n in range(1, steps + 1):
        k1 = beta_function(g, R)
        k2 = beta_function(g + 0.5 * h * k1, R)
        k3 = beta_function(g + 0.5 * h * k2, R)
        k4 = beta_function(g + h * k3, R)
        g = g + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        states.append(FlowState(g=g, lnL=n * h, R=R))

    result = FlowResult(R=R, g0=g0, states=states, direction=flow_direction(R), pole=pole, truncated=truncated)
    result.closed_form_residual = float(np.max(np.abs(result.g - closed_form_coupling(g0, R, result.lnL))))
    logger.info(f"Beta flow R={R}, g0={g0}: {result.direction.value}, g(end) = {g:.6g}")
    return result


def flow_rows(result: FlowResult) -> List[list]:
    """(lnL, g) 行"""
    return [[s.lnL, s.g] for s in result.states]
