from dataclasses import dataclass
from enum import Enum
from typing import Annotated, Tuple, Union

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import trapezoid

FiniteFloat = Annotated[float, Field(allow_inf_nan=False)]

# ξ 低于该值视为能隙闭合点
DEGENERATE_XI = 1e-12
# 简并点的单侧差分步长
FD_STEP = 1e-6
# v0^2 积分节点数
N_K = 4096


class Boundary(str, Enum):
    """边界条件"""
    PERIODIC = "periodic"
    OPEN = "open"


class ModelParams(BaseModel):
    """受监测Ising链的物理参数，能量以J为单位"""
    model_config = ConfigDict(frozen=True, extra="forbid")

    J: FiniteFloat = 1.0
    eta: FiniteFloat = 0.5
    h: FiniteFloat = 0.0
    gamma: Annotated[float, Field(ge=0.0, allow_inf_nan=False)] = 0.5
    L: Annotated[int, Field(ge=1)] = 32
    boundary: Boundary = Boundary.PERIODIC

    def momentum_grid(self) -> np.ndarray:
        """周期链的动量格点 k_n = 2πn/L"""
        return momentum_grid(self.L)


@dataclass
class BdgMatrix:
    """(c, c†) 基下的 2L×2L 单粒子生成元"""
    matrix: np.ndarray
    hermitian_part_only: bool = True

    @property
    def L(self) -> int:
        return self.matrix.shape[0] // 2

    @property
    def h_block(self) -> np.ndarray:
        return self.matrix[: self.L, : self.L]

    @property
    def delta_block(self) -> np.ndarray:
        return self.matrix[: self.L, self.L:]


@dataclass
class GroupVelocity:
    """群速度及其是否处于能隙闭合点"""
    value: float
    degenerate: bool = False


def momentum_grid(L: int) -> np.ndarray:
    return 2.0 * np.pi * np.arange(L) / L


def nambu_tau_z(L: int) -> np.ndarray:
    """粒子块 +1、空穴块 -1 的对角矩阵"""
    return np.concatenate([np.ones(L), -np.ones(L)])


def dispersion(params: ModelParams, k: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """准粒子色散 ξ_k = sqrt(4η² sin²k + (h − 2J cos k)²)"""
    k = np.asarray(k, dtype=float)
    xi = np.sqrt(4.0 * params.eta ** 2 * np.sin(k) ** 2 + (params.h - 2.0 * params.J * np.cos(k)) ** 2)
    return float(xi) if xi.ndim == 0 else xi


def bdg_block(params: ModelParams, k: float) -> np.ndarray:
    """动量k处的 2×2 Bogoliubov 块"""
    eps = 2.0 * params.J * np.cos(k) - params.h
    pair = 2.0j * params.eta * np.sin(k)
    return np.array([[eps, pair], [np.conj(pair), -eps]], dtype=complex)


def group_velocities(params: ModelParams, ks: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """向量化的群速度，返回 (v, 简并掩码)"""
    ks = np.atleast_1d(np.asarray(ks, dtype=float))
    xi = dispersion(params, ks)
    xi = np.atleast_1d(xi)
    numerator = (8.0 * params.eta ** 2 * np.sin(ks) * np.cos(ks)
                 + 4.0 * params.J * np.sin(ks) * (params.h - 2.0 * params.J * np.cos(ks)))
    degenerate = xi <= DEGENERATE_XI
    v = np.zeros_like(ks)
    regular = ~degenerate
    v[regular] = numerator[regular] / (2.0 * xi[regular])
    if np.any(degenerate):
        # 锥点两侧的单侧极限大小相同，取右侧极限
        kd = ks[degenerate]
        v[degenerate] = (np.atleast_1d(dispersion(params, kd + FD_STEP)) - xi[degenerate]) / FD_STEP
        logger.debug(f"Group velocity evaluated at {int(degenerate.sum())} gap-closing point(s)")
    return v, degenerate


def group_velocity(params: ModelParams, k: float) -> GroupVelocity:
    """v(k) = ∂_k ξ_k"""
    v, degenerate = group_velocities(params, np.array([k]))
    return GroupVelocity(value=float(v[0]), degenerate=bool(degenerate[0]))


def bdg_matrix(params: ModelParams, include_gamma: bool = False) -> BdgMatrix:
    """实空间BdG矩阵 H = [[h, Δ], [−Δ*, −hᵀ]]"""
    L = params.L
    h_mat = -params.h * np.eye(L, dtype=complex)
    delta = np.zeros((L, L), dtype=complex)

    bonds = [(j, j + 1) for j in range(L - 1)]
    if params.boundary == Boundary.PERIODIC:
        bonds.append((L - 1, 0))
    for j, jp in bonds:
        h_mat[jp, j] += params.J
        h_mat[j, jp] += params.J
        delta[jp, j] += params.eta
        delta[j, jp] -= params.eta

    matrix = np.block([[h_mat, delta], [-delta.conj(), -h_mat.T]])
    if include_gamma:
        matrix = matrix - 0.5j * params.gamma * np.diag(nambu_tau_z(L))
    return BdgMatrix(matrix=matrix, hermitian_part_only=not include_gamma)


def v0_squared(params: ModelParams, n_k: int = N_K) -> float:
    """v0² = ∫ dk/2π v(k)²，复合梯形公式"""
    ks = np.linspace(-np.pi, np.pi, n_k)
    v, _ = group_velocities(params, ks)
    return float(trapezoid(v ** 2, ks) / (2.0 * np.pi))
