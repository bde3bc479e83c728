from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple, Union

if TYPE_CHECKING:
    from .expr import Expr


Point = Tuple[Union[Fraction, float], Union[Fraction, float]]


class Mode(str, Enum):

    EXACT = "exact"
    FLOAT = "float"


class VerdictKind(str, Enum):

    ZERO = "zero"
    NONZERO = "nonzero"
    INCONCLUSIVE = "inconclusive"


class WebOperator(str, Enum):
    # похідні вздовж репера тканини

    D1 = "d1"
    D2 = "d2"
    DELTA = "delta"


class Branch(str, Enum):

    GENERIC = "generic"
    SINGULAR = "singular"
    MIXED = "mixed"


class Command(str, Enum):

    ANALYZE = "analyze"
    DERIVE = "derive"
    GENERATE = "generate"
    CHECK_FORMS = "check-forms"


class EmitTarget(str, Enum):

    H = "H"
    P = "P"
    Q = "Q"
    DELTA = "delta"
    KL = "KL"
    R = "R"


@dataclass(frozen=True)
class Domain:
    # замкнений прямокутник [x0,x1]x[y0,y1]

    x0: Fraction
    x1: Fraction
    y0: Fraction
    y1: Fraction

    def center(self) -> Tuple[Fraction, Fraction]:
        return (self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2

    def __str__(self) -> str:
        def fmt(v: Fraction) -> str:
            return str(v.numerator) if v.denominator == 1 else str(float(v))

        return f"[{fmt(self.x0)},{fmt(self.x1)}]x[{fmt(self.y0)},{fmt(self.y1)}]"


DEFAULT_DOMAIN = Domain(Fraction(1), Fraction(2), Fraction(1), Fraction(2))


@dataclass(frozen=True)
class SamplePlan:

    samples: int = 24                  # N >= 20
    seed: int = 0
    tol: float = 1e-9                  # поріг нуля
    margin: float = 1e-6               # відступ від особливих множин
    max_iterations: int = 8            # межа продовжень
    rank_tol: float = 1e-8             # відносний поріг чисельного рангу
    residual_tol: float = 1e-6         # поріг нев'язки сумісності
    mode: Mode = Mode.FLOAT
    domain: Domain = DEFAULT_DOMAIN
    exclusions: Tuple["Expr", ...] = ()


@dataclass(frozen=True)
class ZeroVerdict:

    kind: VerdictKind
    witness: Optional[Point] = None
    value: Optional[float] = None
    proof: bool = False                # вердикт доведено нормальною формою
    residual: float = 0.0              # max |значення| на вибірці
    samples: int = 0
    failures: int = 0

    @property
    def is_zero(self) -> bool:
        return self.kind is VerdictKind.ZERO

    @property
    def is_nonzero(self) -> bool:
        return self.kind is VerdictKind.NONZERO

    @property
    def is_inconclusive(self) -> bool:
        return self.kind is VerdictKind.INCONCLUSIVE


@dataclass(frozen=True)
class WebSpec:

    f: "Expr"                          # функція тканини
    b: "Expr"                          # базисний інваріант
    domain: Domain
    mode: Mode
    plan: SamplePlan
    phi: Optional["Expr"] = None       # твірна функція, якщо є


# 1-форма a dx + c dy
Form = Tuple["Expr", "Expr"]


@dataclass(frozen=True)
class FormQuadruple:

    forms: Tuple[Form, Form, Form, Form]

    def __getitem__(self, index: int) -> Form:
        return self.forms[index]


@dataclass(frozen=True)
class SolutionAnsatz:
    # s1(x), s2(y) і w(f), вже складене з f

    s1: "Expr"
    s2: "Expr"
    w_of_f: "Expr"


@dataclass(frozen=True)
class SPrimeRelation:
    # P * s1'(x) + s2'(y) = Q

    P: "Expr"
    Q: "Expr"
    provenance: Dict[str, "Expr"] = field(default_factory=dict, compare=False, hash=False)
    from_generating_function: bool = False


@dataclass(frozen=True)
class Row:
    # sum(coefficients[k-1] * W_k) + constant = 0

    coefficients: Tuple["Expr", ...]
    constant: "Expr"

    @property
    def size(self) -> int:
        return len(self.coefficients)


@dataclass(frozen=True)
class BranchVerdict:

    branch: Optional[Branch]           # None, якщо вердикт щодо Δ непевний
    delta: "Expr"
    delta_verdict: ZeroVerdict
    p1: Optional["Expr"] = None
    p2: Optional["Expr"] = None


@dataclass
class ConstraintSystem:

    branch: Branch
    unknowns: int                      # m = 4 (загальний) або 3 (особливий)
    base_rows: List[Row]
    raw_conditions: List["Expr"] = field(default_factory=list)   # J1/J2 або J3 до нормування
    leading_coefficients: List["Expr"] = field(default_factory=list)
    extra_rows: List[Row] = field(default_factory=list)
    stabilized: bool = False
    iterations: int = 0
    notes: List[str] = field(default_factory=list)

    def monic_coefficients(self, index: int) -> Tuple["Expr", ...]:
        """Коефіцієнти (c_0, c_1, ..., c_{m-1}) рядка без старшого члена."""
        row = self.base_rows[index]
        return (row.constant,) + row.coefficients[:-1]


@dataclass(frozen=True)
class DimensionResult:

    dim_w: Optional[int]               # None -> Inconclusive
    rank: int                          # ранг базису рядків
    residual: float
    samples: int
    failures: int
    system: ConstraintSystem

    @property
    def inconclusive(self) -> bool:
        return self.dim_w is None


@dataclass(frozen=True)
class Condition:

    name: str
    verdict: ZeroVerdict


@dataclass
class RankReport:

    branch: Optional[Branch]
    delta_verdict: ZeroVerdict
    dim_w: Optional[int]
    base_dim: int
    rank: int
    solvable: bool
    maximal: bool
    conditions: List[Condition] = field(default_factory=list)
    residual: float = 0.0
    samples: int = 0
    inconclusive: bool = False
    relation: Optional[SPrimeRelation] = None
    system: Optional[ConstraintSystem] = None
    notes: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class JetTable:

    point: Point
    order: int
    entries: Dict[Tuple[int, int], Union[Fraction, float]]

    def __getitem__(self, index: Tuple[int, int]) -> Union[Fraction, float]:
        return self.entries[index]


@dataclass
class RunConfig:

    command: Command
    f: Optional[str] = None
    b: Optional[str] = None
    phi: Optional[str] = None
    forms: Optional[Tuple[Tuple[str, str], ...]] = None
    domain: Domain = DEFAULT_DOMAIN
    mode: Mode = Mode.FLOAT
    samples: int = 24
    tol: float = 1e-9
    seed: int = 0
    emit: Optional[EmitTarget] = None
    json: bool = False
    timing: bool = False
    out: Optional[str] = None


@dataclass(frozen=True)
class RunOutcome:

    exit_code: int
    output: str = ""
    error: str = ""
