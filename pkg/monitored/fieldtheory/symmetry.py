from dataclasses import dataclass, field, replace
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from loguru import logger
from scipy.linalg import svdvals
from scipy.stats import special_ortho_group

from ..base.errors import ConstraintViolation

PAULI_LABELS = ("0", "x", "y", "z")
PAULI = {
    "0": np.eye(2, dtype=complex),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}
# 约定：4×4 块为 σ(Keldysh) ⊗ τ(Nambu)，复制指标在最右
CONJUGATION = ("x", "x")
COMMUTANTS = {
    "C2": ("x", "z"),
    "C3": ("0", "z"),
    "C4": ("0", "y"),
    "saddle": ("z", "0"),
}
NULLSPACE_THRESHOLD = 1e-9
GAP_RATIO_WARNING = 10.0
ROTATION_TOLERANCE = 1e-10
CHECK_REPLICAS = range(1, 7)


class Cell(str, Enum):
    ZERO = ""
    ANTISYM_REAL = "A,R"
    SYM_IMAG = "S,I"


def pauli_product(sigma: str, tau: str) -> np.ndarray:
    return np.kron(PAULI[sigma], PAULI[tau])


def _anticommute(a: str, b: str) -> bool:
    return a != "0" and b != "0" and a != b


def products_commute(first: Tuple[str, str], second: Tuple[str, str]) -> bool:
    """两个 Pauli 积对易当且仅当反对易因子个数为偶数"""
    flips = sum(_anticommute(a, b) for a, b in zip(first, second))
    return flips % 2 == 0


def conjugation_sign(sigma: str, tau: str) -> int:
    """C·B*·C = s·B 中的 s，C = σ_x⊗τ_x"""
    sign = 1
    for factor, conj in zip((sigma, tau), CONJUGATION):
        # 复共轭只翻转 σ_y；与 σ_x 的共轭翻转 σ_y、σ_z
        if factor == "y":
            sign *= -1
        if _anticommute(factor, conj):
            sign *= -1
    return sign


@dataclass(frozen=True)
class ConstraintScenario:
    """约束情形：由哈密顿量中非零项决定"""
    J_nonzero: bool = True
    eta_nonzero: bool = True
    gamma_nonzero: bool = True
    saddle_invariance: bool = False

    @property
    def commutants(self) -> List[str]:
        labels = []
        if self.gamma_nonzero:
            labels.append("C2")
        if self.J_nonzero:
            labels.append("C3")
        if self.eta_nonzero:
            labels.append("C4")
        if self.saddle_invariance:
            labels.append("saddle")
        return labels

    def with_saddle(self, saddle_invariance: bool = True) -> "ConstraintScenario":
        return replace(self, saddle_invariance=saddle_invariance)


SCENARIOS = {
    "u1": ConstraintScenario(J_nonzero=True, eta_nonzero=False),
    "general": ConstraintScenario(J_nonzero=True, eta_nonzero=True),
    "pairing": ConstraintScenario(J_nonzero=False, eta_nonzero=True),
}


def scenario_name(scenario: ConstraintScenario) -> Optional[str]:
    base = scenario.with_saddle(False)
    for name, candidate in SCENARIOS.items():
        if candidate == base:
            return name
    return None


@dataclass
class CountPolynomial:
    """N_f(R) = a R² + b R（精确有理系数）"""
    quadratic: Fraction = Fraction(0)
    linear: Fraction = Fraction(0)

    def __call__(self, R: int) -> Fraction:
        return self.quadratic * R * R + self.linear * R

    def __add__(self, other: "CountPolynomial") -> "CountPolynomial":
        return CountPolynomial(self.quadratic + other.quadratic, self.linear + other.linear)

    def __sub__(self, other: "CountPolynomial") -> "CountPolynomial":
        return CountPolynomial(self.quadratic - other.quadratic, self.linear - other.linear)

    def __str__(self) -> str:
        terms = []
        for coefficient, power in ((self.quadratic, "R^2"), (self.linear, "R")):
            if coefficient == 0:
                continue
            magnitude = abs(coefficient)
            text = power if magnitude == 1 else f"{magnitude}{power}" if magnitude.denominator == 1 \
                else f"({magnitude}){power}"
            sign = "-" if coefficient < 0 else "+"
            terms.append((sign, text))
        if not terms:
            return "0"
        first_sign, first = terms[0]
        out = ("-" if first_sign == "-" else "") + first
        for sign, text in terms[1:]:
            out += f" {sign} {text}"
        return out


CELL_COUNTS = {
    Cell.ZERO: CountPolynomial(),
    Cell.ANTISYM_REAL: CountPolynomial(Fraction(1, 2), Fraction(-1, 2)),
    Cell.SYM_IMAG: CountPolynomial(Fraction(1, 2), Fraction(1, 2)),
}


@dataclass
class SectorTable:
    """σ_i⊗τ_j 扇区表"""
    cells: Dict[Tuple[str, str], Cell]
    scenario: Optional[ConstraintScenario] = None

    def to_strings(self) -> List[List[str]]:
        """按行 τ、列 σ 排列"""
        return [[self.cells[(sigma, tau)].value for sigma in PAULI_LABELS] for tau in PAULI_LABELS]


@dataclass
class GroupCandidate:
    name: str
    dimension: CountPolynomial


@dataclass
class ClassResult:
    """对称性分类结果"""
    scenario: ConstraintScenario
    G_table: SectorTable
    H_table: SectorTable
    n_f_G: CountPolynomial
    n_f_H: CountPolynomial
    G: Optional[str] = None
    H: Optional[str] = None
    manifold: Optional[str] = None
    az_class: Optional[str] = None
    manifold_dimension: Optional[str] = None
    discrepancies: List[Dict[str, Any]] = field(default_factory=list)

    @property
    def classified(self) -> bool:
        return self.az_class is not None

    def to_report(self) -> Dict[str, Any]:
        return {
            "scenario": scenario_name(self.scenario) or "custom",
            "flags": {
                "J_nonzero": self.scenario.J_nonzero,
                "eta_nonzero": self.scenario.eta_nonzero,
                "gamma_nonzero": self.scenario.gamma_nonzero,
            },
            "table": self.G_table.to_strings(),
            "saddle_table": self.H_table.to_strings(),
            "N_f": str(self.n_f_G),
            "N_f_saddle": str(self.n_f_H),
            "G": self.G,
            "H": self.H,
            "manifold": self.manifold,
            "manifold_dimension": self.manifold_dimension,
            "class": self.az_class if self.classified else "unclassified",
            "discrepancies": self.discrepancies,
        }


GROUP_CANDIDATES = [
    GroupCandidate("U(R)xU(R)", CountPolynomial(Fraction(2), Fraction(0))),
    GroupCandidate("U(R)", CountPolynomial(Fraction(1), Fraction(0))),
    GroupCandidate("O(R)xO(R)", CountPolynomial(Fraction(1), Fraction(-1))),
    GroupCandidate("O(R)", CountPolynomial(Fraction(1, 2), Fraction(-1, 2))),
    GroupCandidate("O(2R)", CountPolynomial(Fraction(2), Fraction(-1))),
]

# (G, H) -> (流形, AZ类, dim G − dim H, 行列式约束去掉的维数)
CLASS_LOOKUP = {
    ("U(R)xU(R)", "U(R)"): ("SU(R)", "AIII", CountPolynomial(Fraction(1), Fraction(0)), 1),
    ("O(R)xO(R)", "O(R)"): ("SO(R)", "DIII", CountPolynomial(Fraction(1, 2), Fraction(-1, 2)), 0),
    ("O(2R)", "U(R)"): ("SO(2R)/U(R)", "D", CountPolynomial(Fraction(1), Fraction(-1)), 0),
}


def _printed(rows: List[List[str]]) -> Dict[Tuple[str, str], Cell]:
    return {(sigma, tau): Cell(rows[t][s])
            for t, tau in enumerate(PAULI_LABELS) for s, sigma in enumerate(PAULI_LABELS)}


# 文献中印刷的扇区表（行 τ_0,τ_x,τ_y,τ_z；列 σ_0,σ_x,σ_y,σ_z）
PRINTED_TABLES = {
    "structural": _printed([["A,R", "A,R", "A,R", "S,I"],
                            ["A,R", "A,R", "A,R", "S,I"],
                            ["A,R", "A,R", "A,R", "S,I"],
                            ["S,I", "S,I", "S,I", "S,I"]]),
    "u1": _printed([["A,R", "A,R", "", ""], ["", "", "", ""], ["", "", "", ""], ["S,I", "S,I", "", ""]]),
    "u1_saddle": _printed([["A,R", "", "", ""], ["", "", "", ""], ["", "", "", ""], ["S,I", "", "", ""]]),
    "general": _printed([["A,R", "A,R", "", ""], ["", "", "", ""], ["", "", "", ""], ["", "", "", ""]]),
    "general_saddle": _printed([["A,R", "", "", ""], ["", "", "", ""], ["", "", "", ""], ["", "", "", ""]]),
    "pairing": _printed([["A,R", "A,R", "", ""], ["", "", "", ""], ["", "", "A,R", "S,I"], ["", "", "", ""]]),
    "pairing_saddle": _printed([["A,R", "", "", ""], ["", "", "", ""], ["", "", "", "S,I"], ["", "", "", ""]]),
}

PRINTED_COUNTS = {
    "u1": CountPolynomial(Fraction(2), Fraction(0)),
    "u1_saddle": CountPolynomial(Fraction(1), Fraction(0)),
    "general": CountPolynomial(Fraction(1), Fraction(-1)),
    "general_saddle": CountPolynomial(Fraction(1, 2), Fraction(-1, 2)),
    # 印刷值 2R² − 2 不是 R 的齐次多项式，单独记录
    "pairing": "2R^2 - 2",
    "pairing_saddle": CountPolynomial(Fraction(1), Fraction(0)),
}

STRUCTURAL = ConstraintScenario(J_nonzero=False, eta_nonzero=False, gamma_nonzero=False)


def sector_table(scenario: ConstraintScenario) -> SectorTable:
    """每个 σ_i⊗τ_j 扇区的 W_ij 约束"""
    active = [COMMUTANTS[label] for label in scenario.commutants]
    cells = {}
    for sigma in PAULI_LABELS:
        for tau in PAULI_LABELS:
            if any(not products_commute((sigma, tau), m) for m in active):
                cells[(sigma, tau)] = Cell.ZERO
            elif conjugation_sign(sigma, tau) > 0:
                cells[(sigma, tau)] = Cell.ANTISYM_REAL
            else:
                cells[(sigma, tau)] = Cell.SYM_IMAG
    return SectorTable(cells=cells, scenario=scenario)


def count_polynomial(table: SectorTable) -> CountPolynomial:
    total = CountPolynomial()
    for cell in table.cells.values():
        total = total + CELL_COUNTS[cell]
    return total


def free_parameter_count(table: SectorTable, R: int) -> int:
    if R < 1:
        raise ValueError("Invalid input: requires R >= 1")
    value = count_polynomial(table)(R)
    return int(value)


def table_discrepancies(table: SectorTable, printed: Dict[Tuple[str, str], Cell]) -> List[Dict[str, str]]:
    """与印刷表不一致的格子"""
    return [
        {"cell": f"sigma_{sigma} x tau_{tau}", "computed": table.cells[(sigma, tau)].value or "blank",
         "printed": printed[(sigma, tau)].value or "blank"}
        for sigma in PAULI_LABELS for tau in PAULI_LABELS
        if table.cells[(sigma, tau)] != printed[(sigma, tau)]
    ]


def match_group(polynomial: CountPolynomial) -> Optional[str]:
    """在 R = 1..6 上比较维数"""
    for candidate in GROUP_CANDIDATES:
        if all(candidate.dimension(R) == polynomial(R) for R in CHECK_REPLICAS):
            return candidate.name
    return None


def _count_discrepancies(name: str, computed: CountPolynomial) -> List[Dict[str, Any]]:
    printed = PRINTED_COUNTS.get(name)
    if printed is None:
        return []
    if isinstance(printed, CountPolynomial):
        if all(printed(R) == computed(R) for R in CHECK_REPLICAS):
            return []
    return [{"count": name, "computed": str(computed), "printed": str(printed)}]


def classify_scenario(scenario: ConstraintScenario) -> ClassResult:
    """G 表、H 表与维数匹配给出 G/H 及 AZ 类"""
    base = scenario.with_saddle(False)
    G_table, H_table = sector_table(base), sector_table(base.with_saddle(True))
    n_f_G, n_f_H = count_polynomial(G_table), count_polynomial(H_table)
    result = ClassResult(scenario=base, G_table=G_table, H_table=H_table, n_f_G=n_f_G, n_f_H=n_f_H)

    name = scenario_name(base)
    if name is not None:
        for key, table, count in ((name, G_table, n_f_G), (f"{name}_saddle", H_table, n_f_H)):
            result.discrepancies.extend({"table": key, **d} for d in table_discrepancies(table, PRINTED_TABLES[key]))
            result.discrepancies.extend(_count_discrepancies(key, count))

    G, H = match_group(n_f_G), match_group(n_f_H)
    if (G, H) not in CLASS_LOOKUP:
        logger.warning(f"Unclassified scenario: N_f(G) = {n_f_G}, N_f(H) = {n_f_H}")
        return result

    manifold, az_class, dimension, determinant_offset = CLASS_LOOKUP[(G, H)]
    difference = n_f_G - n_f_H
    for R in CHECK_REPLICAS:
        if difference(R) != dimension(R):
            raise ConstraintViolation(f"Dimension of {manifold} inconsistent with N_f(G) - N_f(H) at R={R}",
                                      labels=["dimension"])
    result.G, result.H, result.manifold, result.az_class = G, H, manifold, az_class
    result.manifold_dimension = str(difference) + (f" - {determinant_offset}" if determinant_offset else "")
    logger.info(f"Scenario {name or 'custom'} classified as {az_class} with manifold {manifold}")
    return result


def _antihermitian_basis(n: int) -> List[np.ndarray]:
    basis = []
    for p in range(n):
        diagonal = np.zeros((n, n), dtype=complex)
        diagonal[p, p] = 1j
        basis.append(diagonal)
        for q in range(p + 1, n):
            real = np.zeros((n, n), dtype=complex)
            real[p, q], real[q, p] = 1.0, -1.0
            imag = np.zeros((n, n), dtype=complex)
            imag[p, q], imag[q, p] = 1j, 1j
            basis.extend([real, imag])
    return basis


def constraint_operator(scenario: ConstraintScenario, R: int) -> np.ndarray:
    """反厄米生成元上的实线性约束算子"""
    replica = np.eye(R)
    C = np.kron(pauli_product(*CONJUGATION), replica)
    commutants = [np.kron(pauli_product(*COMMUTANTS[label]), replica) for label in scenario.commutants]
    columns = []
    for X in _antihermitian_basis(4 * R):
        images = [C @ X.conj() @ C - X] + [X @ M - M @ X for M in commutants]
        flat = np.concatenate([image.ravel() for image in images])
        columns.append(np.concatenate([flat.real, flat.imag]))
    return np.column_stack(columns)


def nullspace_oracle(scenario: ConstraintScenario, R: int) -> int:
    """约束算子的数值零空间维数"""
    if R < 1 or R > 3:
        raise ValueError("Invalid input: requires 1 <= R <= 3")
    operator = constraint_operator(scenario, R)
    singular = svdvals(operator)
    threshold = NULLSPACE_THRESHOLD * singular.max()
    rank = int(np.sum(singular > threshold))

    above = singular[singular > threshold]
    below = singular[singular <= threshold]
    if len(above) and len(below) and below.max() > 0:
        ratio = above.min() / below.max()
        if ratio < GAP_RATIO_WARNING:
            logger.warning(f"Nullspace threshold gap ratio {ratio:.3g} is below {GAP_RATIO_WARNING}")
    return operator.shape[1] - rank


@dataclass
class RotationReport:
    """显式旋转构造的约束残差"""
    R: int
    residuals: Dict[str, float]
    saddle_residual: float
    commutes_with_saddle: bool
    rotation: np.ndarray


def build_rotation(V_plus: np.ndarray, V_minus: np.ndarray) -> np.ndarray:
    """𝓡 = σ_0⊗τ_0⊗a + σ_x⊗τ_0⊗b，a = (𝓥₊+𝓥₋)/2，b = (𝓥₊−𝓥₋)/2"""
    a = 0.5 * (V_plus + V_minus)
    b = 0.5 * (V_plus - V_minus)
    return np.kron(pauli_product("0", "0"), a) + np.kron(pauli_product("x", "0"), b)


def rotation_residuals(rotation: np.ndarray, R: int) -> Tuple[Dict[str, float], float]:
    replica = np.eye(R)
    C = np.kron(pauli_product(*CONJUGATION), replica)
    residuals = {
        "C0": float(np.max(np.abs(rotation.conj().T @ rotation - np.eye(4 * R)))),
        "C1": float(np.max(np.abs(C @ rotation.conj() @ C - rotation))),
    }
    for label in ("C2", "C3", "C4"):
        M = np.kron(pauli_product(*COMMUTANTS[label]), replica)
        residuals[label] = float(np.max(np.abs(rotation @ M - M @ rotation)))
    saddle = np.kron(pauli_product(*COMMUTANTS["saddle"]), replica)
    return residuals, float(np.max(np.abs(rotation @ saddle - saddle @ rotation)))


def verify_rotation_construction(R: int, rng: Optional[np.random.Generator] = None,
                                 V_plus: Optional[np.ndarray] = None,
                                 V_minus: Optional[np.ndarray] = None) -> RotationReport:
    """由随机 𝓥₊, 𝓥₋ ∈ SO(R) 构造 𝓡 并检验 C0–C4"""
    if R < 2:
        raise ValueError("Invalid input: requires R >= 2")
    if V_plus is None:
        V_plus = special_ortho_group.rvs(R, random_state=rng)
    if V_minus is None:
        V_minus = special_ortho_group.rvs(R, random_state=rng)

    rotation = build_rotation(np.asarray(V_plus, dtype=float), np.asarray(V_minus, dtype=float))
    residuals, saddle_residual = rotation_residuals(rotation, R)
    violated = [label for label, value in residuals.items() if value > ROTATION_TOLERANCE]
    if violated:
        raise ConstraintViolation(f"Rotation violates {', '.join(violated)}", labels=violated)
    return RotationReport(R=R, residuals=residuals, saddle_residual=saddle_residual,
                          commutes_with_saddle=saddle_residual <= ROTATION_TOLERANCE, rotation=rotation)


def saddle_density_identities(rho: float) -> Dict[str, float]:
    """Q₀ = (1−2ρ)T_zz + 2√(ρ(1−ρ)) σ_x⊗τ_z 的迹恒等式残差"""
    if not 0.0 <= rho <= 1.0:
        raise ValueError("Invalid input: requires 0 <= rho <= 1")
    T_zz = pauli_product("z", "z")
    Q0 = (1.0 - 2.0 * rho) * T_zz + 2.0 * np.sqrt(rho * (1.0 - rho)) * pauli_product("x", "z")
    trace = float(np.real(np.trace(Q0 @ T_zz)))
    nu = 4.0 * rho * (1.0 - rho)
    return {
        "square": float(np.max(np.abs(Q0 @ Q0 - np.eye(4)))),
        "density": abs(rho - (0.5 - trace / 8.0)),
        "one_minus_nu": abs(2.0 * (1.0 - nu) - trace ** 2 / 8.0),
        "minus_two_nu": abs(-2.0 * nu - (trace ** 2 / 8.0 - 2.0)),
    }
