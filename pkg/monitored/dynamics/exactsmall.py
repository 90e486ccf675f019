from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sps
from loguru import logger
from scipy.linalg import eig, eigh, eigvalsh, expm
from scipy.optimize import brentq
from scipy.special import xlogy

from ..base.errors import ImpossibleRecordError, MemoryGuardError, StepSizeError
from ..physics.gaussian import GaussianState, init_state, parse_occupations
from ..physics.model import ModelParams, bdg_matrix
from .parallel import run_indexed
from .trajectory import JumpRecord, Scheme, TrajectoryConfig, select_channel, trajectory_rng

MAX_HILBERT = 4096
MAX_REPLICA_SITES = 5
MAX_MC_REPLICA_SITES = 4
MIN_MC_TRAJECTORIES = 1000
JUMP_TOLERANCE = 1e-12
MAX_EIGVEC_CONDITION = 1e8


@dataclass
class DenseState:
    """2^L 维归一化态矢量，ln‖ψ̃‖ 单独累计"""
    vector: np.ndarray
    log_norm: float = 0.0
    time: float = 0.0

    @property
    def L(self) -> int:
        return int(np.log2(self.vector.shape[0]))

    @property
    def rho(self) -> np.ndarray:
        return np.outer(self.vector, self.vector.conj())


@dataclass
class ReplicatedDensity:
    """ρ^R，维数 2^{LR} × 2^{LR}"""
    matrix: np.ndarray
    R: int
    L: int
    time: float = 0.0

    @property
    def trace(self) -> complex:
        return complex(np.trace(self.matrix))


@dataclass
class ReplicatedAverage:
    """蒙特卡罗平均及逐元标准误差"""
    density: ReplicatedDensity
    stderr: np.ndarray
    n_traj: int


def _check_hilbert(L: int) -> None:
    if 2 ** L > MAX_HILBERT:
        raise MemoryGuardError(f"Dense Hilbert space 2^{L} exceeds {MAX_HILBERT}")


@lru_cache(maxsize=16)
def fermion_operators(L: int) -> Tuple[sps.csr_matrix, ...]:
    """Jordan–Wigner 湮灭算符 c_j，格点0为最高位"""
    _check_hilbert(L)
    annihilate = sps.csr_matrix(np.array([[0.0, 1.0], [0.0, 0.0]]))
    parity = sps.csr_matrix(np.diag([1.0, -1.0]))
    identity = sps.identity(2, format="csr")
    operators = []
    for j in range(L):
        factors = [parity] * j + [annihilate] + [identity] * (L - j - 1)
        op = factors[0]
        for f in factors[1:]:
            op = sps.kron(op, f, format="csr")
        operators.append(op.astype(complex))
    return tuple(operators)


@lru_cache(maxsize=16)
def occupation_table(L: int) -> np.ndarray:
    """occupation_table[s, j] = 基矢 s 中格点 j 的占据数"""
    states = np.arange(2 ** L)
    return ((states[:, None] >> (L - 1 - np.arange(L))[None, :]) & 1).astype(float)


def hamiltonian_dense(params: ModelParams) -> np.ndarray:
    """H = Σ h_ij c_i†c_j + ½Σ (Δ_ij c_i†c_j† + h.c.)"""
    c = fermion_operators(params.L)
    bdg = bdg_matrix(params)
    h_mat, delta = bdg.h_block, bdg.delta_block
    dim = 2 ** params.L
    H = sps.csr_matrix((dim, dim), dtype=complex)
    for i in range(params.L):
        for j in range(params.L):
            if h_mat[i, j] != 0:
                H = H + h_mat[i, j] * (c[i].conj().T @ c[j])
            if delta[i, j] != 0:
                pair = 0.5 * delta[i, j] * (c[i].conj().T @ c[j].conj().T)
                H = H + pair + pair.conj().T
    return H.toarray()


def nonhermitian_dense(params: ModelParams) -> np.ndarray:
    """H_nH = H − iγ/2 Σ n_j"""
    number = occupation_table(params.L).sum(axis=1)
    return hamiltonian_dense(params) - 0.5j * params.gamma * np.diag(number)


def product_dense(occupations: Sequence[int]) -> DenseState:
    occupations = [int(b) for b in occupations]
    L = len(occupations)
    _check_hilbert(L)
    vector = np.zeros(2 ** L, dtype=complex)
    vector[int("".join(map(str, occupations)), 2)] = 1.0
    return DenseState(vector=vector)


def gaussian_to_dense(state: GaussianState) -> DenseState:
    """被所有 d_m 湮灭的向量"""
    L = state.L
    _check_hilbert(L)
    c = fermion_operators(L)
    dim = 2 ** L
    projector_sum = np.zeros((dim, dim), dtype=complex)
    for m in range(L):
        d = sps.csr_matrix((dim, dim), dtype=complex)
        for i in range(L):
            d = d + np.conj(state.U[i, m]) * c[i] + np.conj(state.V[i, m]) * c[i].conj().T
        d = d.toarray()
        projector_sum += d.conj().T @ d
    values, vectors = eigh(projector_sum)
    if values[0] > 1e-8:
        raise ValueError(f"Invalid input: amplitude matrix has no Fock vacuum (residual {values[0]:.3e})")
    return DenseState(vector=vectors[:, 0], log_norm=state.log_norm, time=state.time)


def dense_moments(rho_or_vector: np.ndarray, L: int) -> Tuple[np.ndarray, np.ndarray]:
    """(C, F)：C_ij = ⟨c_i†c_j⟩，F_ij = ⟨c_j c_i⟩"""
    rho = rho_or_vector if rho_or_vector.ndim == 2 else np.outer(rho_or_vector, rho_or_vector.conj())
    c = [op.toarray() for op in fermion_operators(L)]
    C = np.empty((L, L), dtype=complex)
    F = np.empty((L, L), dtype=complex)
    for i in range(L):
        for j in range(L):
            C[i, j] = np.trace(rho @ c[i].conj().T @ c[j])
            F[i, j] = np.trace(rho @ c[j] @ c[i])
    return C, F


def dense_density(vector: np.ndarray, L: int) -> np.ndarray:
    return np.abs(vector) ** 2 @ occupation_table(L)


def subsystem_entropy_dense(vector: np.ndarray, L: int, subsystem: Tuple[int, int]) -> float:
    """连续子系统的约化密度矩阵熵"""
    start, stop = subsystem
    psi = vector.reshape((2 ** start, 2 ** (stop - start), 2 ** (L - stop)))
    reduced = np.einsum("aib,ajb->ij", psi, psi.conj())
    p = np.clip(eigvalsh(reduced), 0.0, 1.0)
    return float(-np.sum(xlogy(p, p)))


def wick_residual(vector: np.ndarray, L: int) -> float:
    """四点函数 ⟨c_i† c_j† c_k c_l⟩ 与 Wick 分解之差的最大值"""
    rho = np.outer(vector, vector.conj())
    c = [op.toarray() for op in fermion_operators(L)]
    cd = [op.conj().T for op in c]
    C, F = dense_moments(rho, L)
    # ⟨c_i† c_j†⟩ = conj(⟨c_j c_i⟩) = conj(F_ij)
    anomalous = F.conj()
    worst = 0.0
    for i in range(L):
        for j in range(L):
            for k in range(L):
                for l in range(L):
                    exact = np.trace(rho @ cd[i] @ cd[j] @ c[k] @ c[l])
                    wick = (anomalous[i, j] * F[l, k]
                            - C[i, k] * C[j, l]
                            + C[i, l] * C[j, k])
                    worst = max(worst, abs(exact - wick))
    return float(worst)


def _propagator_dense(params: ModelParams, dt: float, scheme: str) -> np.ndarray:
    H_nH = nonhermitian_dense(params)
    if scheme == "exact":
        return expm(-1j * H_nH * dt)
    return np.eye(H_nH.shape[0]) - 1j * H_nH * dt


def sse_step_dense(state: DenseState, dt: float, rng: np.random.Generator, params: ModelParams,
                   propagator: Optional[np.ndarray] = None,
                   scheme: str = "first_order") -> Tuple[DenseState, Optional[int]]:
    """稠密SSE一步：K₀ = 1 − (Γ̂/2 + iH)dt，跳跃通道 n_j

    与 step_euler 顺序相同：先按步起点的占据数判定跳跃，再传播 dt。
    """
    L = state.L
    _check_hilbert(L)
    if propagator is None:
        propagator = _propagator_dense(params, dt, scheme)
    table = occupation_table(L)
    occupation = np.abs(state.vector) ** 2 @ table
    probabilities = params.gamma * occupation * dt
    p_total = float(probabilities.sum())
    if p_total >= 1.0:
        raise StepSizeError(f"Total jump probability {p_total:.3g} per step is not below 1")

    vector, log_norm, site = state.vector, state.log_norm, None
    u = rng.random()
    if u < p_total:
        site = select_channel(probabilities, u)
        vector = table[:, site] * vector
        norm = np.sqrt(occupation[site])
        vector, log_norm = vector / norm, log_norm + np.log(norm)

    vector = propagator @ vector
    norm = np.linalg.norm(vector)
    return DenseState(vector=vector / norm, log_norm=log_norm + float(np.log(norm)), time=state.time + dt), site


def liouvillian(params: ModelParams) -> np.ndarray:
    """列堆叠约定下的 Lindblad 超算符"""
    _check_hilbert(params.L)
    H = hamiltonian_dense(params)
    dim = H.shape[0]
    identity = np.eye(dim)
    table = occupation_table(params.L)
    generator = -1j * (np.kron(identity, H) - np.kron(H.T, identity))
    for j in range(params.L):
        n = np.diag(table[:, j]).astype(complex)
        generator += params.gamma * (np.kron(n.conj(), n) - 0.5 * np.kron(identity, n) - 0.5 * np.kron(n.T, identity))
    return generator


def evolve_lindblad_dense(rho: np.ndarray, t: float, params: ModelParams) -> np.ndarray:
    """ρ(t) = e^{𝓛t} ρ(0)"""
    dim = rho.shape[0]
    vec = expm(liouvillian(params) * t) @ rho.reshape(-1, order="F")
    return vec.reshape((dim, dim), order="F")


def retarded_dense(params: ModelParams, t: float) -> np.ndarray:
    """G^R_ab(t) = −i⟨{Ψ_a(t), Ψ_b†}⟩，Ψ_a(t) 由伴随 Lindblad 演化"""
    L = params.L
    c = [op.toarray() for op in fermion_operators(L)]
    nambu = c + [op.conj().T for op in c]
    dim = 2 ** L
    # 伴随演化 = 生成元的共轭转置作用在向量化算符上
    adjoint = expm(liouvillian(params).conj().T * t)
    rho = np.eye(dim) / dim
    G = np.empty((2 * L, 2 * L), dtype=complex)
    for a in range(2 * L):
        evolved = (adjoint @ nambu[a].reshape(-1, order="F")).reshape((dim, dim), order="F")
        for b in range(2 * L):
            dagger = nambu[b].conj().T
            G[a, b] = -1j * np.trace(rho @ (evolved @ dagger + dagger @ evolved))
    return G


def _lift(op: np.ndarray, r: int, R: int) -> np.ndarray:
    """X^{(r)} = 1 ⊗ … ⊗ X ⊗ … ⊗ 1"""
    identity = np.eye(op.shape[0])
    lifted = np.array([[1.0 + 0j]])
    for s in range(R):
        lifted = np.kron(lifted, op if s == r else identity)
    return lifted


def _check_replicas(L: int, R: int, limit: int = MAX_REPLICA_SITES) -> None:
    if L * R > limit:
        raise MemoryGuardError(f"L*R = {L * R} exceeds the replica memory guard {limit}")


def replicate(rho: np.ndarray, R: int, time: float = 0.0) -> ReplicatedDensity:
    """ρ₀^{⊗R}"""
    L = int(np.log2(rho.shape[0]))
    _check_replicas(L, R)
    matrix = np.array([[1.0 + 0j]])
    for _ in range(R):
        matrix = np.kron(matrix, rho)
    return ReplicatedDensity(matrix=matrix, R=R, L=L, time=time)


@lru_cache(maxsize=32)
def _replicated_operators(params: ModelParams, R: int) -> Tuple[np.ndarray, Tuple[np.ndarray, ...]]:
    H_nH = nonhermitian_dense(params)
    H_R = sum(_lift(H_nH, r, R) for r in range(R))
    table = occupation_table(params.L)
    jumps = []
    for j in range(params.L):
        n = np.diag(table[:, j]).astype(complex)
        L_j = np.eye(H_R.shape[0], dtype=complex)
        for r in range(R):
            L_j = L_j @ _lift(n, r, R)
        jumps.append(L_j)
    return H_R, tuple(jumps)


def replicated_step(rho: ReplicatedDensity, dt: float, params: ModelParams) -> ReplicatedDensity:
    """ρ^R ← (1 − i dt H_nH^R) ρ^R (…)† + γ dt Σ_j L_j^R ρ^R L_j^R†"""
    _check_replicas(rho.L, rho.R)
    H_R, jumps = _replicated_operators(params, rho.R)
    K = np.eye(H_R.shape[0]) - 1j * dt * H_R
    matrix = K @ rho.matrix @ K.conj().T
    for L_j in jumps:
        matrix = matrix + params.gamma * dt * (L_j @ rho.matrix @ L_j.conj().T)
    return ReplicatedDensity(matrix=matrix, R=rho.R, L=rho.L, time=rho.time + dt)


def evolve_replicated(rho: ReplicatedDensity, t: float, dt: float, params: ModelParams,
                      richardson: bool = False) -> ReplicatedDensity:
    """重复一阶步直到时间 t；richardson=True 时返回 2ρ(dt/2) − ρ(dt)"""
    n_steps = int(round(t / dt))
    coarse = rho
    for _ in range(n_steps):
        coarse = replicated_step(coarse, dt, params)
    if not richardson:
        return coarse
    fine = rho
    for _ in range(2 * n_steps):
        fine = replicated_step(fine, 0.5 * dt, params)
    return ReplicatedDensity(matrix=2.0 * fine.matrix - coarse.matrix, R=rho.R, L=rho.L, time=fine.time)


def init_dense(initial: Union[str, Sequence[int], DenseState], params: ModelParams) -> DenseState:
    """与 init_state 相同的初态约定"""
    if isinstance(initial, DenseState):
        return initial
    if isinstance(initial, str) and initial == "ground_state":
        return gaussian_to_dense(init_state(params, initial))
    return product_dense(parse_occupations(initial, params.L))


class NoClickEvolution:
    """e^{−iH_nH s}ψ：可对角化时用本征分解，否则用矩阵指数"""

    def __init__(self, params: ModelParams):
        self.H_nH = nonhermitian_dense(params)
        values, vectors = eig(self.H_nH)
        self.diagonal = np.linalg.cond(vectors) < MAX_EIGVEC_CONDITION
        if self.diagonal:
            self.values, self.vectors, self.inverse = values, vectors, np.linalg.inv(vectors)

    def __call__(self, vector: np.ndarray, s: float) -> np.ndarray:
        if self.diagonal:
            return self.vectors @ (np.exp(-1j * self.values * s) * (self.inverse @ vector))
        return expm(-1j * self.H_nH * s) @ vector


def waiting_time_trajectory_dense(params: ModelParams, t_final: float, rng: np.random.Generator,
                                  initial: Union[str, Sequence[int], DenseState] = "neel",
                                  evolution: Optional[NoClickEvolution] = None) -> Tuple[DenseState, JumpRecord]:
    """连续时间的精确等待时间采样（稠密）"""
    _check_hilbert(params.L)
    evolution = evolution or NoClickEvolution(params)
    table = occupation_table(params.L)
    state = init_dense(initial, params)
    vector, log_norm, time = state.vector, state.log_norm, state.time
    events: List[Tuple[int, float]] = []

    while time < t_final:
        u = 1.0 - rng.random()
        remaining = t_final - time
        end = evolution(vector, remaining)
        survival = float(np.vdot(end, end).real)
        if survival >= u:
            norm = np.sqrt(survival)
            vector, log_norm, time = end / norm, log_norm + float(np.log(norm)), t_final
            break

        def excess(s, start=vector, threshold=u):
            moved = evolution(start, s)
            return float(np.vdot(moved, moved).real) - threshold

        # u 可取到 1：起点处存活概率已不超过阈值
        tau = brentq(excess, 0.0, remaining, xtol=1e-14, rtol=4 * np.finfo(float).eps) if excess(0.0) > 0.0 else 0.0
        tau = max(tau, np.spacing(max(time, 1.0)))
        moved = evolution(vector, tau)
        norm = np.linalg.norm(moved)
        vector, log_norm, time = moved / norm, log_norm + float(np.log(norm)), time + tau

        occupation = np.abs(vector) ** 2 @ table
        site = select_channel(occupation, rng.random() * occupation.sum())
        vector = table[:, site] * vector / np.sqrt(occupation[site])
        log_norm += 0.5 * float(np.log(occupation[site]))
        events.append((site + 1, time))

    record = JumpRecord(events=events, log_norm=log_norm, seed=0, scheme="exact_waiting_time",
                        t_final=t_final)
    return DenseState(vector=vector, log_norm=log_norm, time=time), record


def _replica_sample(config: TrajectoryConfig, index: int) -> Tuple[np.ndarray, float]:
    rng = trajectory_rng(config.master_seed, index)
    state, _ = waiting_time_trajectory_dense(config.params, config.t_final, rng, config.initial,
                                             _cached_evolution(config.params))
    return state.vector, state.log_norm


def _replica_sample_euler(config: TrajectoryConfig, index: int) -> Tuple[np.ndarray, float]:
    rng = trajectory_rng(config.master_seed, index)
    state = init_dense(config.initial, config.params)
    propagator = _cached_first_order(config.params, config.dt)
    for _ in range(int(round(config.t_final / config.dt))):
        state, _ = sse_step_dense(state, config.dt, rng, config.params, propagator)
    return state.vector, state.log_norm


@lru_cache(maxsize=8)
def _cached_evolution(params: ModelParams) -> NoClickEvolution:
    return NoClickEvolution(params)


@lru_cache(maxsize=8)
def _cached_first_order(params: ModelParams, dt: float) -> np.ndarray:
    return _propagator_dense(params, dt, "first_order")


REPLICA_SAMPLERS = {
    Scheme.EXACT_WAITING_TIME: _replica_sample,
    Scheme.EULER_POISSON: _replica_sample_euler,
}


def mc_replicated_average(config: TrajectoryConfig, R: int, n_traj: int, workers: int = 1,
                          progress: bool = False,
                          scheme: Scheme = Scheme.EXACT_WAITING_TIME) -> ReplicatedAverage:
    """Born 采样轨迹上 ρ^{⊗R}·P[𝒯]^{R−1} 的平均

    默认用连续时间等待时间采样；EULER_POISSON 为步长 dt 的稠密SSE，权重带 O(dt) 偏差。
    """
    L = config.params.L
    _check_replicas(L, R, MAX_MC_REPLICA_SITES)
    if n_traj < MIN_MC_TRAJECTORIES:
        raise ValueError(f"Invalid input: requires n_traj >= {MIN_MC_TRAJECTORIES}")
    if scheme not in REPLICA_SAMPLERS:
        raise ValueError(f"Invalid input: replica sampling supports {[s.value for s in REPLICA_SAMPLERS]}, "
                         f"got {Scheme(scheme).value}")
    logger.info(f"Sampling {n_traj} dense trajectories ({Scheme(scheme).value}) for the R={R} replicated average")

    samples = run_indexed(REPLICA_SAMPLERS[scheme], config, n_traj, workers, desc="replica samples",
                          progress=progress)
    dim = 2 ** (L * R)
    total = np.zeros((dim, dim), dtype=complex)
    total_sq = np.zeros((dim, dim))
    for vector, log_norm in samples:
        # 权重 P[𝒯]^{R−1}，P[𝒯] = ‖ψ̃‖²
        replicated = np.array([[1.0 + 0j]])
        for _ in range(R):
            replicated = np.kron(replicated, np.outer(vector, vector.conj()))
        sample = np.exp((R - 1) * 2.0 * log_norm) * replicated
        total += sample
        total_sq += np.abs(sample) ** 2

    mean = total / n_traj
    variance = np.maximum(total_sq - n_traj * np.abs(mean) ** 2, 0.0) / (n_traj - 1)
    density = ReplicatedDensity(matrix=mean, R=R, L=L, time=config.t_final)
    return ReplicatedAverage(density=density, stderr=np.sqrt(variance / n_traj), n_traj=n_traj)


def replay_record(record: JumpRecord, params: ModelParams,
                  initial: Union[str, Sequence[int], DenseState] = "neel") -> DenseState:
    """U_nH n_{x_M} … n_{x_1} U_nH |ψ₀⟩，跳跃间使用精确指数"""
    _check_hilbert(params.L)
    H_nH = nonhermitian_dense(params)
    table = occupation_table(params.L)
    state = init_dense(initial, params)
    vector, log_norm, time = state.vector, state.log_norm, state.time

    def advance(vector, log_norm, duration):
        vector = expm(-1j * H_nH * duration) @ vector
        norm = np.linalg.norm(vector)
        return vector / norm, log_norm + float(np.log(norm))

    for site, t in record.events:
        if t > time:
            vector, log_norm = advance(vector, log_norm, t - time)
            time = t
        occupation = float(np.abs(vector) ** 2 @ table[:, site - 1])
        if occupation < JUMP_TOLERANCE:
            raise ImpossibleRecordError(f"Record jump at site {site}, t={t} has weight {occupation:.3e}")
        vector = table[:, site - 1] * vector / np.sqrt(occupation)
        log_norm += 0.5 * np.log(occupation)
    if record.t_final > time:
        vector, log_norm = advance(vector, log_norm, record.t_final - time)
        time = record.t_final
    return DenseState(vector=vector, log_norm=log_norm, time=time)


def density_matrix_to_json(matrix: np.ndarray) -> Dict[str, Any]:
    """行优先、实虚交错"""
    flat = np.asarray(matrix).ravel(order="C")
    interleaved: List[float] = []
    for value in flat:
        interleaved.extend([float(value.real), float(value.imag)])
    return {"shape": list(matrix.shape), "data": interleaved}
