from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.integrate import quad
from scipy.linalg import eigh, eigvalsh, expm

from ..base.errors import ConvergenceError, IntegrationError
from ..physics.gaussian import GaussianState, InitialSpec, init_state, neel_occupations, parse_occupations
from ..physics.model import ModelParams, bdg_block, bdg_matrix, dispersion

SPECTRUM_WINDOW = 1e-8
STEADY_TOLERANCE = 1e-10


@dataclass
class MomentState:
    """单体矩 C_ij = ⟨c_i†c_j⟩, F_ij = ⟨c_j c_i⟩（允许混态）"""
    C: np.ndarray
    F: np.ndarray
    time: float = 0.0

    @property
    def L(self) -> int:
        return self.C.shape[0]

    @property
    def gamma_matrix(self) -> np.ndarray:
        """Γ = ⟨ΨΨ†⟩ = [[1 − Cᵀ, −F], [F*, C]]"""
        return np.block([[np.eye(self.L) - self.C.T, -self.F], [self.F.conj(), self.C]])

    @property
    def generalized_density(self) -> np.ndarray:
        return np.block([[self.C, self.F.conj().T], [self.F, np.eye(self.L) - self.C.T]])


@dataclass
class SaddleGreen:
    """鞍点推迟格林函数 G^R(q, ω)"""
    q: float
    omega: float
    G_R: np.ndarray
    lambda_R: int = 1
    lambda_A: int = -1

    @property
    def G_A(self) -> np.ndarray:
        return self.G_R.conj().T


def moments_from_gamma(gamma: np.ndarray, time: float = 0.0) -> MomentState:
    L = gamma.shape[0] // 2
    return MomentState(C=gamma[L:, L:].copy(), F=gamma[L:, :L].conj(), time=time)


def moments_from_gaussian(state: GaussianState) -> MomentState:
    return MomentState(C=state.C, F=state.F, time=state.time)


def moments_from_occupations(occupations: Sequence[int]) -> MomentState:
    occupations = np.asarray(occupations, dtype=float)
    L = len(occupations)
    return MomentState(C=np.diag(occupations).astype(complex), F=np.zeros((L, L), dtype=complex))


def init_moments(params: ModelParams, initial: InitialSpec = "neel") -> MomentState:
    """与 init_state 相同的初态约定"""
    if isinstance(initial, str) and initial == "ground_state":
        return moments_from_gaussian(init_state(params, initial))
    return moments_from_occupations(parse_occupations(initial, params.L))


def _dephasing_rates(L: int, gamma: float) -> np.ndarray:
    """Γ_ab 的退相位衰减率 γ(1 − q_a q_b δ_{s(a)s(b)})"""
    charge = np.concatenate([-np.ones(L), np.ones(L)])
    site = np.concatenate([np.arange(L), np.arange(L)])
    same_site = site[:, None] == site[None, :]
    return gamma * (1.0 - np.outer(charge, charge) * same_site)


def _generator(params: ModelParams):
    bdg = bdg_matrix(params).matrix
    rates = _dephasing_rates(params.L, params.gamma)

    def derivative(gamma: np.ndarray) -> np.ndarray:
        return -1j * (bdg @ gamma - gamma @ bdg) - rates * gamma

    return derivative


def default_dt_inner(params: ModelParams) -> float:
    scale = max(abs(params.J), params.gamma, abs(params.h), abs(params.eta))
    return 1e-3 / scale if scale > 0 else 1e-3


def _rk4(derivative, gamma: np.ndarray, h: float, n_steps: int) -> np.ndarray:
    for _ in range(n_steps):
        k1 = derivative(gamma)
        k2 = derivative(gamma + 0.5 * h * k1)
        k3 = derivative(gamma + 0.5 * h * k2)
        k4 = derivative(gamma + h * k3)
        gamma = gamma + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return gamma


def _check_spectrum(gamma: np.ndarray, time: float) -> None:
    spectrum = eigvalsh(0.5 * (gamma + gamma.conj().T))
    if spectrum.min() < -SPECTRUM_WINDOW or spectrum.max() > 1.0 + SPECTRUM_WINDOW:
        raise IntegrationError(
            f"Moment spectrum left [0, 1] at t={time:.6g}: [{spectrum.min():.3e}, {spectrum.max():.3e}]"
        )


def evolve_moments(state: MomentState, dt: float, params: ModelParams,
                   dt_inner: Optional[float] = None) -> MomentState:
    """矩方程 dΓ/dt = −i[𝐇, Γ] − R∘Γ 的RK4积分"""
    if dt <= 0:
        raise ValueError("Invalid input: requires dt > 0")
    dt_inner = dt_inner or default_dt_inner(params)
    n_steps = max(1, int(np.ceil(dt / dt_inner - 1e-9)))
    gamma = _rk4(_generator(params), state.gamma_matrix, dt / n_steps, n_steps)
    _check_spectrum(gamma, state.time + dt)
    return moments_from_gamma(gamma, time=state.time + dt)


def evolve_moments_series(state: MomentState, times: Sequence[float], params: ModelParams,
                          dt_inner: Optional[float] = None) -> List[MomentState]:
    """依次演化到各采样时刻"""
    series = []
    for t in times:
        if t > state.time:
            state = evolve_moments(state, t - state.time, params, dt_inner)
        series.append(state)
    return series


def steady_state(params: ModelParams, initial: Optional[MomentState] = None,
                 dt_inner: Optional[float] = None) -> MomentState:
    """积分至 ‖dΓ/dt‖_max < 1e−10"""
    if params.gamma == 0:
        raise ConvergenceError("No relaxation at gamma = 0: dynamics is unitary")

    state = initial or moments_from_occupations(neel_occupations(params.L))
    derivative = _generator(params)
    gamma = state.gamma_matrix
    scale = max(np.max(np.abs(np.linalg.eigvalsh(bdg_matrix(params).matrix))), params.gamma)
    h = dt_inner or 0.05 / scale
    chunk = max(1, int(np.ceil(1.0 / (params.gamma * h))))
    t, t_max = state.time, state.time + 1e3 / params.gamma

    residual = float(np.max(np.abs(derivative(gamma))))
    while residual >= STEADY_TOLERANCE:
        if t >= t_max:
            raise ConvergenceError(f"Steady state not reached by t={t:.6g}, residual {residual:.3e}",
                                   residual=residual)
        gamma = _rk4(derivative, gamma, h, chunk)
        t += h * chunk
        _check_spectrum(gamma, t)
        residual = float(np.max(np.abs(derivative(gamma))))

    logger.info(f"Steady state reached at t={t:.6g} with residual {residual:.3e}")
    return moments_from_gamma(gamma, time=t)


def green_retarded(params: ModelParams, q: float, omega: float) -> SaddleGreen:
    """G^R(q, ω) = (ω + iγ/2 − ℍ(q))⁻¹"""
    inverse = (omega + 0.5j * params.gamma) * np.eye(2) - bdg_block(params, q)
    a, b = inverse[0]
    c, d = inverse[1]
    det = a * d - b * c
    G_R = np.array([[d, -b], [-c, a]], dtype=complex) / det
    return SaddleGreen(q=q, omega=omega, G_R=G_R)


def green_poles(params: ModelParams, q: float) -> np.ndarray:
    """极点 ω = ±ξ_q − iγ/2"""
    xi = dispersion(params, q)
    return np.array([xi - 0.5j * params.gamma, -xi - 0.5j * params.gamma])


def retarded_propagator(params: ModelParams, t: float) -> np.ndarray:
    """实空间 G^R_ab(t) = −i⟨{Ψ_a(t), Ψ_b†}⟩ = −i e^{−i(𝐇 − iγ/2)t}"""
    bdg = bdg_matrix(params).matrix
    return -1j * expm(-1j * (bdg - 0.5j * params.gamma * np.eye(2 * params.L)) * t)


def retarded_time_domain(params: ModelParams, q: float, omega: float,
                         t_max: Optional[float] = None) -> np.ndarray:
    """∫_0^T dt e^{iωt}(−i)e^{−iℍ_eff(q)t} 的数值积分"""
    if params.gamma <= 0:
        raise ValueError("Invalid input: requires gamma > 0 for the time-domain integral")
    t_max = t_max or 60.0 / params.gamma
    energies, vectors = eigh(bdg_block(params, q))
    decay = 0.5 * params.gamma

    integrals = []
    for energy in energies:
        frequency = omega - energy
        real, _ = quad(lambda t: np.exp(-decay * t), 0.0, t_max, weight="cos", wvar=frequency,
                       epsabs=1e-13, epsrel=1e-12, limit=500)
        imag, _ = quad(lambda t: np.exp(-decay * t), 0.0, t_max, weight="sin", wvar=frequency,
                       epsabs=1e-13, epsrel=1e-12, limit=500)
        integrals.append(real + 1j * imag)
    return -1j * vectors @ np.diag(integrals) @ vectors.conj().T


def causality_winding(params: ModelParams, q: float, imag_range: Tuple[float, float] = None,
                      omega_max: Optional[float] = None, n_points: int = 4000) -> int:
    """det G^R⁻¹ 沿矩形边界的辐角绕数，等于矩形内的极点数"""
    xi = dispersion(params, q)
    omega_max = omega_max or 4.0 * (xi + params.gamma + 1.0)
    low, high = imag_range or (0.0, omega_max)
    corners = [complex(-omega_max, low), complex(omega_max, low),
               complex(omega_max, high), complex(-omega_max, high)]

    path = []
    for start, end in zip(corners, corners[1:] + corners[:1]):
        path.append(start + (end - start) * np.linspace(0.0, 1.0, n_points, endpoint=False))
    path = np.concatenate(path + [np.array([corners[0]])])

    det = (path + 0.5j * params.gamma) ** 2 - xi ** 2
    phase = np.unwrap(np.angle(det))
    return int(np.rint((phase[-1] - phase[0]) / (2.0 * np.pi)))


def green_rows(params: ModelParams, qs: Sequence[float], omegas: Sequence[float]) -> List[list]:
    """(q, ω, 4个复数元) 行"""
    rows = []
    for q in qs:
        for omega in omegas:
            G = green_retarded(params, q, omega).G_R
            row = [q, omega]
            for value in G.ravel():
                row.extend([value.real, value.imag])
            rows.append(row)
    return rows


def moment_rows(series: Sequence[MomentState]) -> List[list]:
    """(t, i, j, Re C, Im C, Re F, Im F) 行"""
    rows = []
    for state in series:
        for i in range(state.L):
            for j in range(state.L):
                c, f = state.C[i, j], state.F[i, j]
                rows.append([state.time, i + 1, j + 1, c.real, c.imag, f.real, f.imag])
    return rows
