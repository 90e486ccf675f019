from fractions import Fraction

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.stats import special_ortho_group

from monitored.base.errors import ConstraintViolation
from monitored.fieldtheory.symmetry import (
    PRINTED_TABLES,
    SCENARIOS,
    STRUCTURAL,
    Cell,
    ConstraintScenario,
    CountPolynomial,
    build_rotation,
    classify_scenario,
    conjugation_sign,
    count_polynomial,
    free_parameter_count,
    match_group,
    nullspace_oracle,
    pauli_product,
    products_commute,
    saddle_density_identities,
    scenario_name,
    sector_table,
    table_discrepancies,
    verify_rotation_construction,
)


@pytest.fixture
def rng():
    """固定种子的随机数生成器"""
    return np.random.default_rng(2024)


def test_pauli_product_ordering():
    """测试 σ⊗τ 的张量积顺序"""
    sigma_x = np.array([[0, 1], [1, 0]])
    assert_allclose(pauli_product("x", "0"), np.kron(sigma_x, np.eye(2)))
    assert products_commute(("x", "z"), ("y", "x"))
    assert not products_commute(("x", "0"), ("z", "0"))


def test_conjugation_sign_matches_matrices():
    """测试 C·B*·C = s·B 的符号规则"""
    C = pauli_product("x", "x")
    for sigma in "0xyz":
        for tau in "0xyz":
            B = pauli_product(sigma, tau)
            assert_allclose(C @ B.conj() @ C, conjugation_sign(sigma, tau) * B)


def test_structural_table():
    """测试无约束时的扇区表与 o(4R) 维数"""
    table = sector_table(STRUCTURAL)
    assert Cell.ZERO not in table.cells.values()
    assert table.cells[("z", "z")] == Cell.ANTISYM_REAL
    assert table.cells[("z", "0")] == Cell.SYM_IMAG
    polynomial = count_polynomial(table)
    assert str(polynomial) == "8R^2 - 2R"
    discrepancies = table_discrepancies(table, PRINTED_TABLES["structural"])
    assert discrepancies == [{"cell": "sigma_z x tau_z", "computed": "A,R", "printed": "S,I"}]


def test_scenario_tables_match_printed():
    """测试三个情形的扇区表（含鞍点）"""
    for name, scenario in SCENARIOS.items():
        assert table_discrepancies(sector_table(scenario), PRINTED_TABLES[name]) == []
        assert table_discrepancies(sector_table(scenario.with_saddle()), PRINTED_TABLES[f"{name}_saddle"]) == []
        assert scenario_name(scenario.with_saddle()) == name


@pytest.mark.parametrize("name, full, saddle", [
    ("u1", "2R^2", "R^2"),
    ("general", "R^2 - R", "(1/2)R^2 - (1/2)R"),
    ("pairing", "2R^2 - R", "R^2"),
])
def test_count_polynomials(name, full, saddle):
    """测试 N_f(R) 多项式"""
    scenario = SCENARIOS[name]
    assert str(count_polynomial(sector_table(scenario))) == full
    assert str(count_polynomial(sector_table(scenario.with_saddle()))) == saddle


@pytest.mark.parametrize("name", ["u1", "general", "pairing"])
def test_nullspace_oracle_agrees_with_counting(name):
    """测试数值零空间维数与参数计数一致"""
    for variant in (SCENARIOS[name], SCENARIOS[name].with_saddle()):
        table = sector_table(variant)
        for R in (1, 2, 3):
            assert nullspace_oracle(variant, R) == free_parameter_count(table, R)


def test_nullspace_oracle_range():
    """测试零空间预言机的 R 范围"""
    with pytest.raises(ValueError, match="1 <= R <= 3"):
        nullspace_oracle(STRUCTURAL, 4)


@pytest.mark.parametrize("name, az_class, manifold, dimension", [
    ("u1", "AIII", "SU(R)", "R^2 - 1"),
    ("general", "DIII", "SO(R)", "(1/2)R^2 - (1/2)R"),
    ("pairing", "D", "SO(2R)/U(R)", "R^2 - R"),
])
def test_classification(name, az_class, manifold, dimension):
    """测试 AZ 类与目标流形"""
    result = classify_scenario(SCENARIOS[name])
    assert result.classified
    assert result.az_class == az_class
    assert result.manifold == manifold
    assert result.manifold_dimension == dimension
    report = result.to_report()
    assert report["scenario"] == name
    assert report["class"] == az_class


def test_pairing_count_discrepancy_is_reported():
    """测试配对情形 N_f 与印刷值的差异被记录"""
    result = classify_scenario(SCENARIOS["pairing"])
    counts = [d for d in result.discrepancies if d.get("count") == "pairing"]
    assert counts == [{"count": "pairing", "computed": "2R^2 - R", "printed": "2R^2 - 2"}]


def test_unclassified_scenario():
    """测试无匹配群时不分类"""
    result = classify_scenario(STRUCTURAL)
    assert not result.classified
    assert result.to_report()["class"] == "unclassified"
    assert result.to_report()["scenario"] == "custom"


def test_match_group():
    """测试按维数匹配群"""
    assert match_group(CountPolynomial(Fraction(2), Fraction(0))) == "U(R)xU(R)"
    assert match_group(CountPolynomial(Fraction(2), Fraction(-1))) == "O(2R)"
    assert match_group(CountPolynomial(Fraction(3), Fraction(0))) is None


def test_free_parameter_count_range():
    """测试 R ≥ 1"""
    with pytest.raises(ValueError, match="R >= 1"):
        free_parameter_count(sector_table(SCENARIOS["u1"]), 0)


def test_rotation_construction(rng):
    """测试随机 𝓥₊, 𝓥₋ ∈ SO(3) 满足全部约束且不保持鞍点"""
    for _ in range(100):
        report = verify_rotation_construction(3, rng)
        assert max(report.residuals.values()) <= 1e-10
        assert not report.commutes_with_saddle


def test_rotation_commutes_with_saddle_iff_equal(rng):
    """测试 𝓥₊ = 𝓥₋ 时旋转与鞍点对易"""
    V = special_ortho_group.rvs(4, random_state=rng)
    report = verify_rotation_construction(4, V_plus=V, V_minus=V)
    assert report.commutes_with_saddle
    assert report.saddle_residual <= 1e-12


def test_rotation_violation_labels():
    """测试非正交输入破坏 C0"""
    with pytest.raises(ConstraintViolation, match="C0") as excinfo:
        verify_rotation_construction(2, V_plus=2.0 * np.eye(2), V_minus=np.eye(2))
    assert excinfo.value.labels == ["C0"]


def test_rotation_requires_two_replicas():
    """测试 R < 2"""
    with pytest.raises(ValueError, match="R >= 2"):
        verify_rotation_construction(1)


def test_build_rotation_blocks():
    """测试 𝓡 的块结构"""
    rotation = build_rotation(np.eye(2), -np.eye(2))
    assert_allclose(rotation, np.kron(pauli_product("x", "0"), np.eye(2)))


def test_saddle_density_identities(rng):
    """测试鞍点迹恒等式"""
    for rho in rng.uniform(0.0, 1.0, 100):
        residuals = saddle_density_identities(rho)
        assert max(residuals.values()) <= 1e-12
    with pytest.raises(ValueError, match="0 <= rho <= 1"):
        saddle_density_identities(1.5)


def test_custom_scenario_name():
    """测试非命名情形"""
    assert scenario_name(ConstraintScenario(J_nonzero=False, eta_nonzero=False)) is None
