import numpy as np
import pytest
from numpy.testing import assert_allclose

from monitored.base.errors import ConvergenceError
from monitored.dynamics.lindblad import (
    causality_winding,
    evolve_moments,
    evolve_moments_series,
    green_poles,
    green_retarded,
    green_rows,
    init_moments,
    moment_rows,
    moments_from_gaussian,
    moments_from_occupations,
    retarded_time_domain,
    steady_state,
)
from monitored.physics.gaussian import ground_state
from monitored.physics.model import ModelParams, bdg_block


@pytest.fixture
def params():
    """有能隙、有监测的小链"""
    return ModelParams(J=1.0, eta=0.5, h=0.3, gamma=0.7, L=4)


def test_moments_match_gaussian_gamma(params):
    """测试 (C, F) 重建的 Γ 与高斯态一致"""
    state = ground_state(params)
    moments = moments_from_gaussian(state)
    assert_allclose(moments.gamma_matrix, state.gamma_matrix, atol=1e-12)
    assert_allclose(moments.F, -moments.F.T, atol=1e-12)


def test_unitary_ground_state_is_stationary(params):
    """测试 γ=0 时基态的矩不随时间变化"""
    unitary = params.model_copy(update={"gamma": 0.0})
    start = moments_from_gaussian(ground_state(unitary))
    evolved = evolve_moments(start, 2.0, unitary)
    assert_allclose(evolved.C, start.C, atol=1e-10)
    assert_allclose(evolved.F, start.F, atol=1e-10)
    assert evolved.time == pytest.approx(2.0)


def test_pure_dephasing_decay(params):
    """测试无哈密顿量时非对角矩以 e^{−γt} 衰减、对角元不变"""
    start = moments_from_gaussian(ground_state(params))
    dephasing = ModelParams(J=0.0, eta=0.0, h=0.0, gamma=0.7, L=4)
    evolved = evolve_moments(start, 1.0, dephasing)
    off_diagonal = ~np.eye(4, dtype=bool)
    assert_allclose(np.diag(evolved.C), np.diag(start.C), atol=1e-12)
    assert_allclose(evolved.C[off_diagonal], start.C[off_diagonal] * np.exp(-0.7), atol=1e-10)
    assert_allclose(evolved.F, start.F * np.exp(-0.7), atol=1e-10)


def test_series_sampling(params):
    """测试依次演化到采样时刻"""
    series = evolve_moments_series(init_moments(params), (0.0, 0.5, 1.0), params)
    assert [s.time for s in series] == pytest.approx([0.0, 0.5, 1.0])
    assert_allclose(np.real(np.diag(series[0].C)), [1, 0, 1, 0])
    direct = evolve_moments(init_moments(params), 1.0, params)
    assert_allclose(series[-1].C, direct.C, atol=1e-10)
    rows = moment_rows(series)
    assert len(rows) == 3 * 16
    assert rows[0][:3] == [0.0, 1, 1]


def test_nonpositive_interval(params):
    """测试非正演化时间"""
    with pytest.raises(ValueError, match="dt > 0"):
        evolve_moments(init_moments(params), -1.0, params)


def test_steady_state_is_infinite_temperature(params):
    """测试 γ>0 的稳态为 C = 1/2, F = 0"""
    steady = steady_state(params)
    assert_allclose(steady.C, 0.5 * np.eye(4), atol=1e-7)
    assert_allclose(steady.F, np.zeros((4, 4)), atol=1e-7)


def test_steady_state_requires_monitoring(params):
    """测试 γ=0 时无稳态"""
    with pytest.raises(ConvergenceError, match="unitary"):
        steady_state(params.model_copy(update={"gamma": 0.0}))


def test_steady_state_without_hopping_keeps_occupations():
    """测试 J=η=0 时占据数守恒，任一占据数本征态都是稳态"""
    params = ModelParams(J=0.0, eta=0.0, h=1.0, gamma=1.0, L=4)
    steady = steady_state(params, initial=moments_from_occupations([1, 0, 1, 0]))
    assert_allclose(steady.C, np.diag([1.0, 0.0, 1.0, 0.0]), atol=1e-12)
    assert_allclose(steady.F, np.zeros((4, 4)), atol=1e-12)


def test_green_function_is_resolvent(params):
    """测试 G^R = (ω + iγ/2 − ℍ)⁻¹"""
    for q, omega in [(0.3, -1.2), (1.7, 0.4), (np.pi, 2.5)]:
        expected = np.linalg.inv((omega + 0.35j) * np.eye(2) - bdg_block(params, q))
        assert_allclose(green_retarded(params, q, omega).G_R, expected, atol=1e-12)


def test_green_function_matches_time_domain(params):
    """测试闭式 G^R 与时域积分的傅里叶变换一致"""
    for gamma in (0.3, 1.0):
        p = params.model_copy(update={"gamma": gamma})
        for q, omega in [(0.2, -2.0), (1.1, 0.3), (2.6, 1.5), (-0.9, 0.0)]:
            closed = green_retarded(p, q, omega).G_R
            assert_allclose(retarded_time_domain(p, q, omega), closed, atol=1e-6)


def test_green_function_without_pairing_is_diagonal(params):
    """测试 η=0 时 G^R 的非对角元严格为零"""
    no_pairing = params.model_copy(update={"eta": 0.0})
    for q in np.linspace(-np.pi, np.pi, 5):
        G = green_retarded(no_pairing, q, 0.7).G_R
        assert G[0, 1] == 0
        assert G[1, 0] == 0


def test_advanced_function(params):
    """测试 G^A = (G^R)†"""
    green = green_retarded(params, 0.5, 0.1)
    assert_allclose(green.G_A, green.G_R.conj().T)
    assert (green.lambda_R, green.lambda_A) == (1, -1)


def test_poles_lie_in_lower_half_plane(params):
    """测试极点位置与因果性"""
    for q in (0.0, 0.8, 2.0):
        poles = green_poles(params, q)
        assert_allclose(poles.imag, [-0.35, -0.35])
        for pole in poles:
            det = np.linalg.det((pole + 0.35j) * np.eye(2) - bdg_block(params, q))
            assert abs(det) < 1e-10
        assert causality_winding(params, q) == 0
        assert causality_winding(params, q, imag_range=(-1.0, 0.0)) == 2


def test_time_domain_requires_damping(params):
    """测试 γ=0 时时域积分不收敛"""
    with pytest.raises(ValueError, match="gamma > 0"):
        retarded_time_domain(params.model_copy(update={"gamma": 0.0}), 0.1, 0.2)


def test_green_rows(params):
    """测试格林函数输出行"""
    rows = green_rows(params, [0.0, 1.0], [0.5, 1.5, 2.5])
    assert len(rows) == 6
    assert len(rows[0]) == 2 + 8
