import numpy as np
import pytest
from numpy.testing import assert_allclose

from monitored.base.errors import InfiniteDiffusionError
from monitored.fieldtheory.nlsm import (
    POLE_MARGIN,
    FlowDirection,
    beta_flow,
    beta_function,
    closed_form_coupling,
    coefficients,
    flow_direction,
    flow_rows,
    pole_location,
)
from monitored.physics.model import ModelParams


@pytest.fixture
def params():
    """带配对项的受监测链"""
    return ModelParams(J=1.0, eta=0.5, h=0.2, gamma=0.7)


def test_coefficients(params):
    """测试 D·γ = v₀² 与刚度"""
    coeffs = coefficients(params, rho=0.3)
    assert coeffs.D * coeffs.gamma == pytest.approx(coeffs.v0_squared, rel=1e-14)
    assert coeffs.nu == pytest.approx(4 * 0.3 * 0.7)
    assert coeffs.stiffness == pytest.approx(2 * 0.3 * 0.7 * np.sqrt(coeffs.v0_squared) / 0.7)
    assert coeffs.g_B == pytest.approx(1.0 / coeffs.stiffness)
    report = coeffs.to_report()
    assert report["g_B_convention"].startswith("g_B = 1 /")


def test_coefficients_anchor():
    """测试 J=1, η=0, h=0 时 D·γ = 2"""
    coeffs = coefficients(ModelParams(J=1.0, eta=0.0, h=0.0, gamma=0.5))
    assert coeffs.D == pytest.approx(4.0, abs=1e-5)


def test_empty_or_full_filling_has_no_stiffness(params):
    """测试 ρ=0 时刚度为零、g_B 发散"""
    coeffs = coefficients(params, rho=0.0)
    assert coeffs.stiffness == 0.0
    assert coeffs.g_B == float("inf")


def test_coefficients_errors(params):
    """测试 γ=0 与非法 ρ"""
    with pytest.raises(InfiniteDiffusionError, match="gamma = 0"):
        coefficients(params.model_copy(update={"gamma": 0.0}))
    with pytest.raises(ValueError, match="0 <= rho <= 1"):
        coefficients(params, rho=1.5)


def test_beta_function_sign():
    """测试 β 函数符号由 R − 2 决定"""
    assert beta_function(0.3, 1.0) < 0
    assert beta_function(0.3, 2.0) == 0.0
    assert beta_function(0.3, 3.0) > 0
    assert flow_direction(1.5) == FlowDirection.WEAK
    assert flow_direction(2.0) == FlowDirection.MARGINAL
    assert flow_direction(3.0) == FlowDirection.STRONG


def test_pole_location():
    """测试极点仅在 R > 2 时存在"""
    assert pole_location(0.1, 3.0) == pytest.approx(80 * np.pi)
    assert pole_location(0.1, 2.0) is None
    assert pole_location(0.1, 1.0) is None
    assert pole_location(0.0, 3.0) is None


def test_flow_matches_closed_form():
    """测试 RK4 与解析解一致，R=1 单调下降"""
    flow = beta_flow(0.1, 1.0, 8 * np.pi, 2000)
    assert flow.closed_form_residual <= 1e-10
    assert flow.g[-1] == pytest.approx(0.1 / 1.1, abs=1e-10)
    assert np.all(np.diff(flow.g) < 0)
    assert flow.direction == FlowDirection.WEAK
    assert not flow.truncated


@pytest.mark.parametrize("R, direction", [(1.0, FlowDirection.WEAK), (1.5, FlowDirection.WEAK),
                                          (2.0, FlowDirection.MARGINAL), (3.0, FlowDirection.STRONG)])
def test_flow_trichotomy(R, direction):
    """测试 R < 2、R = 2、R > 2 的流向"""
    flow = beta_flow(0.2, R, 5.0, 500)
    assert flow.direction == direction
    if direction == FlowDirection.MARGINAL:
        assert_allclose(flow.g, 0.2)
    elif direction == FlowDirection.WEAK:
        assert flow.g[-1] < 0.2
    else:
        assert flow.g[-1] > 0.2


def test_flow_truncated_before_pole():
    """测试在极点前截断并与解析解对照"""
    flow = beta_flow(1.0, 3.0, 30.0, 10000)
    assert flow.pole == pytest.approx(8 * np.pi)
    assert flow.truncated
    assert flow.lnL[-1] == pytest.approx(POLE_MARGIN * 8 * np.pi)
    assert flow.g[-1] == pytest.approx(closed_form_coupling(1.0, 3.0, flow.lnL[-1]), rel=1e-8)
    assert flow.g[-1] == pytest.approx(10.0, rel=1e-8)


def test_flow_validation():
    """测试流参数校验"""
    with pytest.raises(ValueError, match="g0 >= 0"):
        beta_flow(-0.1, 1.0, 1.0, 10)
    with pytest.raises(ValueError, match="steps >= 1"):
        beta_flow(0.1, 1.0, 1.0, 0)
    with pytest.raises(ValueError, match="lnL_max > 0"):
        beta_flow(0.1, 1.0, 0.0, 10)


def test_flow_rows():
    """测试 (lnL, g) 行"""
    rows = flow_rows(beta_flow(0.1, 3.0, 1.0, 4))
    assert len(rows) == 5
    assert rows[0] == [0.0, 0.1]
    assert rows[-1][0] == pytest.approx(1.0)
