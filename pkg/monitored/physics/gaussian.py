from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.linalg import eigh, eigvalsh, expm, null_space, qr
from scipy.special import xlogy

from ..base.errors import (
    DegeneracyError,
    PropagationOverflowError,
    StateCorruptionError,
    ZeroProbabilityJumpError,
)
from .model import ModelParams, bdg_matrix, nambu_tau_z

JUMP_TOLERANCE = 1e-12
GAP_TOLERANCE = 1e-12
CLAMP_WINDOW = 1e-10
CORRUPTION_WINDOW = 1e-8

InitialSpec = Union[str, Sequence[int]]
Subsystem = Union[Tuple[int, int], range]


@dataclass
class GaussianState:
    """纯BdG高斯态

    W 的第 m 列 w_m 给出湮灭算符 d_m = Σ_a conj(W_am) Ψ_a，Ψ = (c, c†)。
    于是 Γ = ⟨ΨΨ†⟩ = W W†，C = V V†，F = conj(V) Uᵀ。
    """
    W: np.ndarray
    log_norm: float = 0.0
    time: float = 0.0

    @property
    def L(self) -> int:
        return self.W.shape[1]

    @property
    def U(self) -> np.ndarray:
        return self.W[: self.L]

    @property
    def V(self) -> np.ndarray:
        return self.W[self.L:]

    @property
    def gamma_matrix(self) -> np.ndarray:
        return self.W @ self.W.conj().T

    @property
    def C(self) -> np.ndarray:
        """C_ij = ⟨c_i† c_j⟩"""
        return self.V @ self.V.conj().T

    @property
    def F(self) -> np.ndarray:
        """F_ij = ⟨c_j c_i⟩"""
        return self.V.conj() @ self.U.T

    @property
    def density(self) -> np.ndarray:
        return np.sum(np.abs(self.V) ** 2, axis=1)

    @property
    def generalized_density(self) -> np.ndarray:
        C, F = self.C, self.F
        return np.block([[C, F.conj().T], [F, np.eye(self.L) - C.T]])


@dataclass
class Observables:
    """单体可观测量"""
    density: np.ndarray
    C: np.ndarray
    F: np.ndarray


def neel_occupations(L: int) -> np.ndarray:
    """1010… 占据"""
    return (np.arange(L) % 2 == 0).astype(int)


def parse_occupations(spec: InitialSpec, L: int) -> np.ndarray:
    if isinstance(spec, str):
        if spec == "neel":
            return neel_occupations(L)
        bits = [int(b) for b in spec]
    else:
        bits = [int(b) for b in spec]
    if len(bits) != L or any(b not in (0, 1) for b in bits):
        raise ValueError(f"Invalid input: requires an occupation bit string of length {L}")
    return np.asarray(bits, dtype=int)


def product_state(occupations: Sequence[int]) -> GaussianState:
    """占据数本征态：占据格点的湮灭算符为 c_i†，空格点为 c_i"""
    occupations = np.asarray(occupations, dtype=int)
    L = len(occupations)
    W = np.zeros((2 * L, L), dtype=complex)
    for i, n in enumerate(occupations):
        W[L + i if n else i, i] = 1.0
    return GaussianState(W=W)


def ground_state(params: ModelParams) -> GaussianState:
    """BdG基态：正能本征矢张成的湮灭子空间"""
    energies, vectors = eigh(bdg_matrix(params).matrix)
    gap = np.min(np.abs(energies))
    if gap <= GAP_TOLERANCE:
        raise DegeneracyError(f"Ground state is degenerate: smallest |E| = {gap:.3e}")
    return GaussianState(W=vectors[:, energies > 0])


def init_state(params: ModelParams, initial: InitialSpec = "neel") -> GaussianState:
    """初态：'ground_state'、'neel' 或占据数位串"""
    if isinstance(initial, str) and initial == "ground_state":
        state = ground_state(params)
    else:
        state = product_state(parse_occupations(initial, params.L))
    logger.debug(f"Initialized Gaussian state with L={params.L}, N={state.density.sum():.6f}")
    return state


def random_state(L: int, rng: np.random.Generator) -> GaussianState:
    """随机BdG矩阵的基态"""
    a = rng.normal(size=(L, L)) + 1j * rng.normal(size=(L, L))
    b = rng.normal(size=(L, L)) + 1j * rng.normal(size=(L, L))
    h_mat = 0.5 * (a + a.conj().T)
    delta = 0.5 * (b - b.T)
    matrix = np.block([[h_mat, delta], [-delta.conj(), -h_mat.T]])
    energies, vectors = eigh(matrix)
    return GaussianState(W=vectors[:, energies > 0])


def build_propagator(params: ModelParams, dt: float) -> np.ndarray:
    """未缓存的 exp((−i𝐇 + γτ_z/2)dt)"""
    generator = -1j * bdg_matrix(params).matrix + 0.5 * params.gamma * np.diag(nambu_tau_z(params.L))
    return expm(generator * dt)


@lru_cache(maxsize=64)
def nonhermitian_propagator(params: ModelParams, dt: float) -> np.ndarray:
    """exp(−i H_nH† dt)，作用在振幅矩阵上；只读缓存"""
    propagator = build_propagator(params, dt)
    propagator.setflags(write=False)
    return propagator


def propagate_nonhermitian(state: GaussianState, dt: float, params: ModelParams,
                           propagator: np.ndarray = None) -> GaussianState:
    """非厄米演化 e^{−iH_nH dt}，QR重正交化并累计 ln‖ψ̃‖"""
    if dt <= 0:
        raise ValueError("Invalid input: requires dt > 0")
    if propagator is None:
        propagator = nonhermitian_propagator(params, float(dt))

    evolved = propagator @ state.W
    if not np.all(np.isfinite(evolved)):
        raise PropagationOverflowError(f"Non-finite amplitudes after propagation with dt={dt}")
    Q, R = qr(evolved, mode="economic")
    r = np.abs(np.diag(R))
    if np.any(r == 0.0) or not np.all(np.isfinite(r)):
        raise PropagationOverflowError(f"Singular propagation step with dt={dt}")

    # −iγ/2 Σ n_j 的正规序常数贡献 −γL/4
    delta = 0.5 * (np.sum(np.log(r)) - 0.5 * params.gamma * params.L * dt)
    return GaussianState(W=Q, log_norm=state.log_norm + float(delta), time=state.time + dt)


def apply_jump(state: GaussianState, site: int) -> GaussianState:
    """|ψ⟩ → n_j|ψ⟩/‖n_j|ψ⟩‖"""
    L = state.L
    occupation = float(state.density[site])
    if occupation < JUMP_TOLERANCE:
        raise ZeroProbabilityJumpError(f"Jump at site {site} has probability weight {occupation:.3e}")

    # 不含 c_j† 分量的湮灭子空间
    kernel = null_space(state.W[L + site][None, :])
    modes = state.W @ kernel
    modes[site, :] = 0.0
    modes[L + site, :] = 0.0
    # 跳跃后 c_j† 湮灭该态
    created = np.zeros((2 * L, 1), dtype=complex)
    created[L + site, 0] = 1.0
    Q, _ = qr(np.hstack([modes, created]), mode="economic")
    return GaussianState(W=Q, log_norm=state.log_norm + 0.5 * np.log(occupation), time=state.time)


def observables(state: GaussianState) -> Observables:
    return Observables(density=state.density, C=state.C, F=state.F)


def _subsystem_indices(subsystem: Subsystem, L: int) -> np.ndarray:
    sites = np.arange(*subsystem) if isinstance(subsystem, tuple) else np.asarray(list(subsystem))
    if len(sites) < 1 or len(sites) > L or sites.min() < 0 or sites.max() >= L:
        raise ValueError(f"Invalid input: requires a subsystem inside [0, {L})")
    return sites


def entanglement_entropy(state: GaussianState, subsystem: Subsystem) -> float:
    """子系统冯诺依曼熵（nats）"""
    sites = _subsystem_indices(subsystem, state.L)
    selection = np.concatenate([sites, sites + state.L])
    restricted = state.gamma_matrix[np.ix_(selection, selection)]
    nu = eigvalsh(0.5 * (restricted + restricted.conj().T))

    if nu.min() < -CORRUPTION_WINDOW or nu.max() > 1.0 + CORRUPTION_WINDOW:
        raise StateCorruptionError(f"Correlation spectrum outside [0, 1]: [{nu.min():.3e}, {nu.max():.3e}]")
    if nu.min() < -CLAMP_WINDOW or nu.max() > 1.0 + CLAMP_WINDOW:
        logger.warning(f"Clamping correlation spectrum [{nu.min():.3e}, {nu.max():.3e}]")
    nu = np.clip(nu, 0.0, 1.0)
    return float(-np.sum(xlogy(nu, nu)))


def energy(state: GaussianState, params: ModelParams) -> float:
    """⟨H⟩ = −½Tr(𝐇Γ) + ½Tr h"""
    bdg = bdg_matrix(params)
    value = -0.5 * np.trace(bdg.matrix @ state.gamma_matrix) + 0.5 * np.trace(bdg.h_block)
    return float(np.real(value))


def orthonormality_residual(state: GaussianState) -> float:
    return float(np.max(np.abs(state.W.conj().T @ state.W - np.eye(state.L))))


def purity_residual(state: GaussianState) -> float:
    g = state.generalized_density
    return float(np.max(np.abs(g @ g - g)))
