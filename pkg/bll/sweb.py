from __future__ import annotations

import logging
from collections import Counter
from dataclasses import replace
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import sympy

from .calculus import (
    WSymbolContext,
    affine_split,
    derivative,
    diff,
    evaluate_at,
    evaluate_normal,
    is_zero,
    normal_form,
    sample_points,
    sign_at_center,
    sign_violation,
    simplify,
    web_derivative,
)
from .exceptions import (
    DegenerateWebError,
    EvaluationError,
    MixedBranchError,
    RepeatedDirectionError,
    ValidationError,
)
from .expr import (
    ONE,
    ZERO,
    X,
    Y,
    Expr,
    Function,
    W,
    add,
    const,
    div,
    exp,
    function_arguments,
    is_w_free,
    log,
    mul,
    neg,
    power,
    sub,
    substitute,
)
from .models import (
    DEFAULT_DOMAIN,
    Branch,
    BranchVerdict,
    Condition,
    ConstraintSystem,
    DimensionResult,
    Domain,
    Form,
    FormQuadruple,
    Mode,
    Point,
    RankReport,
    Row,
    SamplePlan,
    SolutionAnsatz,
    SPrimeRelation,
    WebOperator,
    WebSpec,
    ZeroVerdict,
)


logger = logging.getLogger(__name__)

MIN_SAMPLES = 20
GENERIC_UNKNOWNS = 4
SINGULAR_UNKNOWNS = 3
GENERIC_BASE_DIM = 2
SINGULAR_BASE_DIM = 3
MAX_RANK = 6

# контекст для виразів без W
_PLAIN = WSymbolContext(ZERO)


# ========================== Побудова тканини ==========================

def web_frame(f: Expr) -> Tuple[Expr, Expr]:
    """Спрощені f_x, f_y."""
    ctx = WSymbolContext(f)
    return simplify(diff(f, "x", ctx)), simplify(diff(f, "y", ctx))


def _require_sign_constant(e: Expr, label: str, plan: SamplePlan) -> None:
    if normal_form(e).is_zero:
        raise DegenerateWebError(f"{label} тотожно дорівнює нулю.")
    witness = sign_violation(e, plan)
    if witness is not None:
        raise DegenerateWebError(
            f"{label} обертається в нуль або змінює знак в області (точка {_point_text(witness)})."
        )


def _require_positive(e: Expr, label: str, plan: SamplePlan) -> None:
    _require_sign_constant(e, label, plan)
    if sign_at_center(e, plan) < 0:
        raise DegenerateWebError(f"{label} від'ємний в області.")


def _point_text(point: Point) -> str:
    return f"({float(point[0]):.6g}, {float(point[1]):.6g})"


def _check_branch_cuts(exprs: Sequence[Expr], plan: SamplePlan) -> None:
    for e in exprs:
        for arg in function_arguments(e, Function.LOG):
            _require_positive(arg, f"Аргумент log '{arg}'", plan)
        for arg in function_arguments(e, Function.SQRT):
            _require_positive(arg, f"Аргумент sqrt '{arg}'", plan)


def _check_identities(forms: FormQuadruple, b: Expr) -> None:
    (a1, c1), (a2, c2), (a3, c3), (a4, c4) = forms.forms
    identities = (
        add(add(a3, a1), a2),
        add(add(c3, c1), c2),
        add(add(a4, a1), mul(b, a2)),
        add(add(c4, c1), mul(b, c2)),
    )
    if not all(normal_form(e).is_zero for e in identities):
        raise DegenerateWebError("Нормована четвірка форм не задовольняє структурні тотожності.")


def build_web(
    f: Expr,
    b: Expr,
    domain: Domain = DEFAULT_DOMAIN,
    mode: Mode = Mode.FLOAT,
    plan: Optional[SamplePlan] = None,
    phi: Optional[Expr] = None,
) -> WebSpec:
    if not (is_w_free(f) and is_w_free(b)):
        raise ValidationError("f і b не можуть містити W-невідомих.")
    if not (domain.x0 < domain.x1 and domain.y0 < domain.y1):
        raise ValidationError(f"Некоректна область {domain}.")
    plan = replace(plan or SamplePlan(), mode=mode, domain=domain, exclusions=())
    if plan.samples < MIN_SAMPLES:
        raise ValidationError(f"Кількість точок вибірки має бути не меншою за {MIN_SAMPLES}.")

    _check_branch_cuts((f, b), plan)
    fx, fy = web_frame(f)
    b = simplify(b)
    b_minus_one = simplify(sub(b, ONE))
    for e, label in ((fx, "f_x"), (fy, "f_y"), (b, "b"), (b_minus_one, "b - 1")):
        _require_sign_constant(e, label, plan)

    spec = WebSpec(f=f, b=b, domain=domain, mode=mode, plan=replace(plan, exclusions=(fx, fy, b, b_minus_one)), phi=phi)
    _check_identities(normalized_forms(spec), b)
    logger.debug("Тканина f=%s, b=%s на %s", f, b, domain)
    return spec


def from_generating_function(
    phi: Expr,
    domain: Domain = DEFAULT_DOMAIN,
    mode: Mode = Mode.FLOAT,
    plan: Optional[SamplePlan] = None,
) -> WebSpec:
    """Координатна S-тканина: f = Φ_x, b = Φ_xx Φ_yy / Φ_xy^2."""
    if not is_w_free(phi):
        raise ValidationError("Твірна функція не може містити W-невідомих.")
    phi_x, phi_xx, phi_xy, phi_yy = _generating_partials(phi)
    if normal_form(phi_xy).is_zero:
        raise DegenerateWebError("Φ_xy тотожно дорівнює нулю: четверте шарування вироджується.")
    if normal_form(phi_xx).is_zero or normal_form(phi_yy).is_zero:
        raise DegenerateWebError("Φ_xx або Φ_yy тотожно дорівнює нулю: b = 0.")
    b = simplify(div(mul(phi_xx, phi_yy), power(phi_xy, const(Fraction(2)))))
    return build_web(simplify(phi_x), b, domain, mode, plan, phi=phi)


def _generating_partials(phi: Expr) -> Tuple[Expr, Expr, Expr, Expr]:
    phi_x = diff(phi, "x", _PLAIN)
    phi_y = diff(phi, "y", _PLAIN)
    return (
        phi_x,
        simplify(diff(phi_x, "x", _PLAIN)),
        simplify(diff(phi_x, "y", _PLAIN)),
        simplify(diff(phi_y, "y", _PLAIN)),
    )


def normalized_forms(spec: WebSpec) -> FormQuadruple:
    fx, fy = web_frame(spec.f)
    return FormQuadruple((
        (neg(fx), ZERO),
        (ZERO, neg(fy)),
        (fx, fy),
        (fx, simplify(mul(spec.b, fy))),
    ))


def generating_forms(phi: Expr) -> FormQuadruple:
    """Ненормована четвірка (dx, dy, dΦ_x, dΦ_y)."""
    _, phi_xx, phi_xy, phi_yy = _generating_partials(phi)
    return FormQuadruple(((ONE, ZERO), (ZERO, ONE), (phi_xx, phi_xy), (phi_xy, phi_yy)))


# ============================ S-умова =================================

def _wedge(first: Form, second: Form) -> Expr:
    return sub(mul(first[0], second[1]), mul(first[1], second[0]))


def verify_s_condition(forms: FormQuadruple, plan: SamplePlan) -> ZeroVerdict:
    """Вердикт щодо коефіцієнта ω3∧ω1 + ω4∧ω2."""
    for index, (a, c) in enumerate(forms.forms, start=1):
        for point in sample_points(plan):
            try:
                a_value = abs(float(evaluate_at(a, (float(point[0]), float(point[1])))))
                c_value = abs(float(evaluate_at(c, (float(point[0]), float(point[1])))))
            except (EvaluationError, ZeroDivisionError, OverflowError):
                raise DegenerateWebError(f"Форму ω{index} неможливо обчислити в точці {_point_text(point)}.") from None
            if a_value < plan.margin and c_value < plan.margin:
                raise DegenerateWebError(f"Форма ω{index} зникає в точці {_point_text(point)}.")
    coefficient = add(_wedge(forms[2], forms[0]), _wedge(forms[3], forms[1]))
    return is_zero(coefficient, plan)


Covector = Tuple[Union[Fraction, float], Union[Fraction, float]]


def cross_ratio(covectors: Sequence[Covector]) -> Union[Fraction, float]:
    """CR(t1,t2;t3,t4) для нахилів t_i = c_i/a_i; нескінченний нахил допускається."""
    if len(covectors) != 4:
        raise ValidationError("Потрібно рівно чотири ковектори.")
    exact = all(isinstance(v, (Fraction, int)) for pair in covectors for v in pair)

    def bracket(u: int, v: int):
        (au, cu), (av, cv) = covectors[u], covectors[v]
        return au * cv - av * cu

    scale = max(abs(float(v)) for pair in covectors for v in pair) or 1.0
    for u in range(4):
        for v in range(u + 1, 4):
            value = bracket(u, v)
            if (exact and value == 0) or (not exact and abs(float(value)) <= 1e-14 * scale * scale):
                raise RepeatedDirectionError(f"Напрями {u + 1} і {v + 1} збігаються.")
    numerator = bracket(0, 2) * bracket(1, 3)
    denominator = bracket(1, 2) * bracket(0, 3)
    if exact:
        return Fraction(numerator) / Fraction(denominator)
    return float(numerator) / float(denominator)


def cross_ratio_at(forms: FormQuadruple, point: Point, mode: Mode = Mode.FLOAT) -> Union[Fraction, float]:
    covectors = [(evaluate_at(a, point, mode), evaluate_at(c, point, mode)) for a, c in forms.forms]
    return cross_ratio(covectors)


# ====================== Співвідношення для s' =========================

def compute_H(spec: WebSpec) -> Expr:
    fx, fy = web_frame(spec.f)
    fxy = diff(fx, "y", WSymbolContext(spec.f))
    return simplify(div(fxy, mul(fx, fy)))


def derive_sprime_relation(spec: WebSpec) -> SPrimeRelation:
    """P s1'(x) + s2'(y) = Q після нормування коефіцієнта при s2' до одиниці."""
    ctx = WSymbolContext(spec.f)
    f, b = spec.f, spec.b
    fx, fy = web_frame(f)
    fxx = diff(fx, "x", ctx)
    fyy = diff(fy, "y", ctx)
    H = compute_H(spec)
    b1 = web_derivative(b, WebOperator.D1, f, ctx)
    two = const(Fraction(2))
    rhs = add(
        add(div(mul(b, fxx), power(fx, two)), div(fyy, power(fy, two))),
        sub(sub(b1, mul(two, mul(b, H))), mul(sub(b, ONE), W(1))),
    )
    P = simplify(div(mul(b, fy), fx))
    Q = simplify(mul(fy, rhs))
    try:
        coefficients, _ = affine_split(Q, 1)
    except ValueError as error:
        raise DegenerateWebError(f"Q не афінне відносно W1: {error}") from None
    provenance = {
        "s1_coefficient": simplify(div(b, fx)),
        "s2_coefficient": simplify(div(ONE, fy)),
        "rhs": simplify(rhs),
        "b1": simplify(b1),
        "H": H,
        "W1_coefficient": coefficients[0],
    }
    logger.debug("P = %s, Q = %s", P, Q)
    return SPrimeRelation(P=P, Q=Q, provenance=provenance, from_generating_function=spec.phi is not None)


def compute_delta(rel: SPrimeRelation) -> Expr:
    P = rel.P
    px = derivative(P, "x", _PLAIN)
    py = derivative(P, "y", _PLAIN)
    pxy = derivative(px, "y", _PLAIN)
    return simplify(sub(mul(px, py), mul(P, pxy)))


def classify_branch(spec: WebSpec, rel: SPrimeRelation, plan: Optional[SamplePlan] = None) -> BranchVerdict:
    plan = _plan_for(spec, plan)
    delta = compute_delta(rel)
    verdict = is_zero(delta, plan)
    if verdict.is_inconclusive:
        logger.warning("Вердикт щодо Δ непевний (%d збоїв з %d)", verdict.failures, verdict.samples)
        return BranchVerdict(None, delta, verdict)

    if verdict.is_zero:
        p1, p2 = _split_pivot(rel.P, spec.domain)
        check = is_zero(sub(rel.P, mul(p1, p2)), plan)
        if check.is_zero:
            logger.debug("Особлива гілка: p1 = %s, p2 = %s", p1, p2)
            return BranchVerdict(Branch.SINGULAR, delta, verdict, p1, p2)
        logger.warning("Δ = 0, але P не розкладається на p1(x) p2(y)")
        return BranchVerdict(Branch.MIXED, delta, verdict)

    witness = sign_violation(delta, plan)
    if witness is not None:
        mixed = replace(verdict, witness=witness)
        return BranchVerdict(Branch.MIXED, delta, mixed)
    logger.debug("Загальна гілка: Δ = %s", delta)
    return BranchVerdict(Branch.GENERIC, delta, verdict)


def _split_pivot(P: Expr, domain: Domain) -> Tuple[Expr, Expr]:
    x0, y0 = (const(c) for c in domain.center())
    p1 = simplify(substitute(P, Y, y0))
    at_center = simplify(substitute(p1, X, x0))
    p2 = simplify(div(substitute(P, X, x0), at_center))
    return p1, p2


def _plan_for(spec: WebSpec, plan: Optional[SamplePlan]) -> SamplePlan:
    if plan is None:
        return spec.plan
    if not plan.exclusions:
        return replace(plan, exclusions=spec.plan.exclusions)
    return plan


# ========================= Системи для w ==============================

def _monic_row(condition: Expr, unknowns: int, label: str, system: ConstraintSystem, plan: SamplePlan) -> Row:
    coefficients, constant = affine_split(condition, unknowns)
    lead = coefficients[-1]
    system.leading_coefficients.append(lead)
    lead_verdict = is_zero(lead, plan)
    if lead_verdict.is_zero:
        message = f"Старший коефіцієнт при W{unknowns} у {label} тотожно нульовий; рядок знижено в порядку."
        logger.warning(message)
        system.notes.append(message)
        return _normalize_top(Row(coefficients, constant))
    if lead_verdict.is_inconclusive:
        system.notes.append(f"Вердикт щодо старшого коефіцієнта {label} непевний.")
    return Row(
        tuple(simplify(div(c, lead)) for c in coefficients[:-1]) + (ONE,),
        simplify(div(constant, lead)),
    )


def _normalize_top(row: Row) -> Row:
    for lead in reversed(row.coefficients):
        if not normal_form(lead).is_zero:
            return Row(
                tuple(simplify(div(c, lead)) for c in row.coefficients),
                simplify(div(row.constant, lead)),
            )
    return row


def derive_generic_system(spec: WebSpec, rel: SPrimeRelation, plan: Optional[SamplePlan] = None) -> ConstraintSystem:
    plan = _plan_for(spec, plan)
    ctx = WSymbolContext(spec.f)
    P, Q = rel.P, rel.Q
    px = derivative(P, "x", ctx)
    py = derivative(P, "y", ctx)
    pxy = derivative(px, "y", ctx)
    qx = derivative(Q, "x", ctx)
    qxy = derivative(qx, "y", ctx)
    delta = compute_delta(rel)

    # s1' = E1, s1'' = E2
    e1 = simplify(div(sub(mul(py, qx), mul(P, qxy)), delta))
    e2 = simplify(div(sub(mul(px, qxy), mul(pxy, qx)), delta))
    j1 = derivative(e1, "y", ctx)
    j2 = simplify(sub(e2, derivative(e1, "x", ctx)))

    system = ConstraintSystem(Branch.GENERIC, GENERIC_UNKNOWNS, [], raw_conditions=[j1, j2])
    system.base_rows.append(_monic_row(j1, GENERIC_UNKNOWNS, "J1", system, plan))
    system.base_rows.append(_monic_row(j2, GENERIC_UNKNOWNS, "J2", system, plan))
    lead1, lead2 = system.leading_coefficients
    if not (normal_form(lead1).is_zero or normal_form(lead2).is_zero):
        system.notes.append(f"Відношення старших коефіцієнтів J1/J2: {simplify(div(lead1, lead2))}")
    return system


def derive_singular_system(
    spec: WebSpec,
    rel: SPrimeRelation,
    p1: Expr,
    p2: Expr,
    plan: Optional[SamplePlan] = None,
) -> ConstraintSystem:
    """Умова розв'язності p1 s1' + s2'/p2 = G: (G)_xy = 0."""
    plan = _plan_for(spec, plan)
    ctx = WSymbolContext(spec.f)
    g = simplify(div(rel.Q, p2))
    j3 = derivative(derivative(g, "x", ctx), "y", ctx)
    system = ConstraintSystem(Branch.SINGULAR, SINGULAR_UNKNOWNS, [], raw_conditions=[j3])
    system.base_rows.append(_monic_row(j3, SINGULAR_UNKNOWNS, "J3", system, plan))
    return system


# ==================== Розмірність простору розв'язків =================

def _row_entries(row: Row) -> Tuple[Expr, ...]:
    return row.coefficients + (row.constant,)


def _is_zero_expr(e: Expr) -> bool:
    return normal_form(e).is_zero


def _reduce(row: Row, rule: Optional[Row]) -> Row:
    lead = row.coefficients[-1]
    if rule is None or _is_zero_expr(lead):
        return row
    coefficients = tuple(
        simplify(sub(c, mul(lead, r))) for c, r in zip(row.coefficients[:-1], rule.coefficients[:-1])
    )
    return Row(coefficients + (ZERO,), simplify(sub(row.constant, mul(lead, rule.constant))))


def _delta_row(row: Row, f: Expr) -> Row:
    ctx = WSymbolContext(f)
    return Row(
        tuple(simplify(web_derivative(c, WebOperator.DELTA, f, ctx)) for c in row.coefficients),
        simplify(web_derivative(row.constant, WebOperator.DELTA, f, ctx)),
    )


def _prolong_row(row: Row, f: Expr) -> Row:
    # -d1(W_k) = W_{k+1}; старший коефіцієнт уже нульовий
    ctx = WSymbolContext(f)

    def transversal(c: Expr) -> Expr:
        return neg(web_derivative(c, WebOperator.D1, f, ctx))

    coefficients = []
    for k, c in enumerate(row.coefficients):
        shifted = row.coefficients[k - 1] if k > 0 else ZERO
        coefficients.append(simplify(add(transversal(c), shifted)))
    return Row(tuple(coefficients), simplify(transversal(row.constant)))


class _RowPool:
    """Базис рядків за функціональним рангом на вибірці точок."""

    def __init__(self, unknowns: int, points: Sequence[Point], plan: SamplePlan, exact: bool):
        self.unknowns = unknowns
        self.points = points
        self.plan = plan
        self.exact = exact
        self.rows: List[Row] = []
        self.values: List[np.ndarray] = []
        self.valid = np.ones(len(points), dtype=bool)
        self._rank: Optional[int] = None

    @property
    def failures(self) -> int:
        return int(np.count_nonzero(~self.valid))

    def _evaluate(self, row: Row) -> np.ndarray:
        mode = Mode.EXACT if self.exact else Mode.FLOAT
        values = np.zeros((len(self.points), self.unknowns + 1), dtype=object if self.exact else float)
        for p, point in enumerate(self.points):
            env = {"x": point[0], "y": point[1]} if self.exact else {"x": float(point[0]), "y": float(point[1])}
            try:
                for k, e in enumerate(_row_entries(row)):
                    values[p, k] = evaluate_normal(e, env, mode)[0]
            except (EvaluationError, ZeroDivisionError, OverflowError):
                self.valid[p] = False
        return values

    def _matrix(self, stack: Sequence[np.ndarray], p: int, width: int) -> np.ndarray:
        matrix = np.array([values[p, :width] for values in stack], dtype=object if self.exact else float)
        if self.exact or not len(matrix):
            return matrix
        norms = np.linalg.norm(matrix, axis=1)
        norms[norms == 0.0] = 1.0
        return matrix / norms[:, None]

    def _point_rank(self, matrix: np.ndarray) -> int:
        if not len(matrix):
            return 0
        if self.exact:
            return sympy.Matrix(matrix.tolist()).rank()
        singular = np.linalg.svd(matrix, compute_uv=False)
        if not singular.size or singular[0] == 0.0:
            return 0
        return int(np.sum(singular > self.plan.rank_tol * singular[0]))

    def ranks(self, stack: Sequence[np.ndarray], width: int) -> List[Tuple[int, int]]:
        return [
            (p, self._point_rank(self._matrix(stack, p, width)))
            for p in range(len(self.points))
            if self.valid[p]
        ]

    def generic_rank(self, stack: Sequence[np.ndarray], width: int) -> int:
        ranks = [rank for _, rank in self.ranks(stack, width)]
        if not ranks:
            return 0
        if self.exact:
            return max(ranks)
        counts = Counter(ranks)
        return max(counts, key=lambda rank: (counts[rank], rank))

    def offer(self, row: Row) -> bool:
        if all(_is_zero_expr(e) for e in _row_entries(row)):
            return False
        width = self.unknowns + 1
        failures = self.failures
        values = self._evaluate(row)
        if self._rank is None or self.failures != failures:
            # нові невалідні точки змінюють ранг наявних рядків
            self._rank = self.generic_rank(self.values, width)
        after = self.generic_rank(self.values + [values], width)
        if after <= self._rank:
            return False
        self.rows.append(row)
        self.values.append(values)
        self._rank = after
        return True

    @property
    def homogeneous_rank(self) -> int:
        return self.generic_rank(self.values, self.unknowns)

    def consistency_residual(self) -> float:
        """Максимальна нев'язка найменших квадратів у точках загального рангу."""
        m = self.unknowns
        generic = self.homogeneous_rank
        residual = 0.0
        for p, rank in self.ranks(self.values, m):
            if rank != generic:
                continue
            matrix = self._matrix(self.values, p, m + 1)
            if self.exact:
                if sympy.Matrix(matrix.tolist()).rank() > sympy.Matrix(matrix[:, :m].tolist()).rank():
                    residual = max(residual, 1.0)
                continue
            a, c = matrix[:, :m], matrix[:, m]
            solution, *_ = np.linalg.lstsq(a, -c, rcond=None)
            residual = max(residual, float(np.linalg.norm(a @ solution + c)))
        return residual


def _all_rational(system: ConstraintSystem) -> bool:
    return all(
        not normal_form(e).has_atoms
        for row in system.base_rows
        for e in _row_entries(row)
    )


def w_dimension(system: ConstraintSystem, spec: WebSpec, plan: Optional[SamplePlan] = None) -> DimensionResult:
    plan = _plan_for(spec, plan)
    m = system.unknowns
    rank_plan = replace(plan, exclusions=plan.exclusions + tuple(system.leading_coefficients))
    points = sample_points(rank_plan)
    exact = plan.mode is Mode.EXACT and _all_rational(system)
    pool = _RowPool(m, points, plan, exact)

    rule: Optional[Row] = None
    frontier: List[Tuple[Row, bool]] = []

    def admit(row: Row) -> None:
        nonlocal rule
        is_rule = False
        if rule is None and not _is_zero_expr(row.coefficients[-1]):
            row = _normalize_top(row)
            rule = row
            is_rule = True
        else:
            row = _reduce(row, rule)
        if pool.offer(row):
            frontier.append((row, is_rule))
            if not is_rule:
                system.extra_rows.append(row)
        elif is_rule:
            rule = None

    for base in system.base_rows:
        admit(base)

    iterations = 0
    while frontier:
        if iterations >= plan.max_iterations:
            logger.warning("Продовження не стабілізувалося за %d ітерацій", iterations)
            system.iterations = iterations
            system.notes.append(f"Продовження не стабілізувалося за {iterations} ітерацій.")
            return DimensionResult(None, pool.homogeneous_rank, 0.0, len(points), pool.failures, system)
        iterations += 1
        current, frontier = frontier, []
        for row, is_rule in current:
            admit(_delta_row(row, spec.f))
            if not is_rule:
                admit(_prolong_row(row, spec.f))
        logger.debug("Ітерація %d: %d рядків у базисі", iterations, len(pool.rows))

    system.stabilized = True
    system.iterations = iterations
    r = pool.homogeneous_rank
    if len(points) < MIN_SAMPLES // 2 or pool.failures * 2 > len(points):
        system.notes.append("Замало придатних точок для оцінки рангу.")
        return DimensionResult(None, r, 0.0, len(points), pool.failures, system)
    if r == 0:
        system.notes.append("Система не накладає умов на w.")
        return DimensionResult(None, r, 0.0, len(points), pool.failures, system)

    residual = pool.consistency_residual()
    if residual > plan.residual_tol:
        logger.debug("Система несумісна: нев'язка %.3g", residual)
        return DimensionResult(-1, r, residual, len(points), pool.failures, system)
    dim_w = 1 + m - r
    logger.debug("rank рядків = %d, dim W = %d", r, dim_w)
    return DimensionResult(dim_w, r, residual, len(points), pool.failures, system)


# ============================ Ранг і максимальність ===================

def _derive_system(spec: WebSpec, rel: SPrimeRelation, branch: BranchVerdict, plan: SamplePlan) -> ConstraintSystem:
    if branch.branch is Branch.GENERIC:
        return derive_generic_system(spec, rel, plan)
    return derive_singular_system(spec, rel, branch.p1, branch.p2, plan)


def refuse_mixed(branch: BranchVerdict) -> None:
    witness = branch.delta_verdict.witness
    where = f" (точка {_point_text(witness)})" if witness is not None else ""
    raise MixedBranchError(
        f"Δ = {branch.delta} зникає на частині області{where}; звузьте область аналізу.",
        witness,
    )


def maximality_conditions(system: ConstraintSystem, spec: WebSpec, plan: SamplePlan) -> List[Condition]:
    ctx = WSymbolContext(spec.f)
    conditions: List[Condition] = []
    if system.branch is Branch.GENERIC:
        k_coefficients = system.monic_coefficients(0)
        l_coefficients = system.monic_coefficients(1)
        for i, (k, l) in enumerate(zip(k_coefficients, l_coefficients)):
            conditions.append(Condition(f"K{i}=L{i}", is_zero(sub(k, l), plan)))
        for i, k in enumerate(k_coefficients):
            conditions.append(Condition(f"delta(K{i})=0", is_zero(web_derivative(k, WebOperator.DELTA, spec.f, ctx), plan)))
    else:
        for i, r in enumerate(system.monic_coefficients(0)):
            conditions.append(Condition(f"delta(R{i})=0", is_zero(web_derivative(r, WebOperator.DELTA, spec.f, ctx), plan)))
    return conditions


def check_maximal(spec: WebSpec, plan: Optional[SamplePlan] = None) -> Tuple[bool, List[Condition]]:
    plan = _plan_for(spec, plan)
    rel = derive_sprime_relation(spec)
    branch = classify_branch(spec, rel, plan)
    if branch.branch is None:
        return False, [Condition("delta", branch.delta_verdict)]
    if branch.branch is Branch.MIXED:
        refuse_mixed(branch)
    system = _derive_system(spec, rel, branch, plan)
    conditions = maximality_conditions(system, spec, plan)
    return all(c.verdict.is_zero for c in conditions), conditions


def compute_rank(spec: WebSpec, plan: Optional[SamplePlan] = None) -> RankReport:
    plan = _plan_for(spec, plan)
    rel = derive_sprime_relation(spec)
    branch = classify_branch(spec, rel, plan)
    if branch.branch is None:
        return RankReport(
            branch=None,
            delta_verdict=branch.delta_verdict,
            dim_w=None,
            base_dim=0,
            rank=0,
            solvable=False,
            maximal=False,
            samples=branch.delta_verdict.samples,
            inconclusive=True,
            relation=rel,
            notes=["Неможливо вирішити, чи Δ тотожно нульове."],
        )
    if branch.branch is Branch.MIXED:
        refuse_mixed(branch)

    system = _derive_system(spec, rel, branch, plan)
    base_dim = GENERIC_BASE_DIM if branch.branch is Branch.GENERIC else SINGULAR_BASE_DIM
    dimension = w_dimension(system, spec, plan)
    conditions = maximality_conditions(system, spec, plan)
    solvable = dimension.dim_w is not None and dimension.dim_w >= 0
    rank = base_dim + dimension.dim_w if solvable else 0
    if rank > MAX_RANK:
        raise DegenerateWebError(f"Отримано ранг {rank} > {MAX_RANK}: система не скінченного типу.")
    logger.debug("Гілка %s: dim W = %s, ранг %d", branch.branch.value, dimension.dim_w, rank)
    return RankReport(
        branch=branch.branch,
        delta_verdict=branch.delta_verdict,
        dim_w=dimension.dim_w,
        base_dim=base_dim,
        rank=rank,
        solvable=solvable,
        maximal=rank == MAX_RANK,
        conditions=conditions,
        residual=dimension.residual,
        samples=dimension.samples,
        inconclusive=dimension.inconclusive,
        relation=rel,
        system=system,
        notes=list(system.notes),
    )


# ===================== Рівняння Самуельсона для анзацу ================

def _log_abs(e: Expr, plan: SamplePlan) -> Expr:
    return log(e if sign_at_center(e, plan) > 0 else neg(e))


def _potentials(spec: WebSpec, ansatz: SolutionAnsatz) -> Tuple[Expr, Expr, Expr, Expr]:
    fx, fy = web_frame(spec.f)
    sigma1 = add(neg(_log_abs(fx, spec.plan)), ansatz.s1)
    sigma2 = add(neg(_log_abs(fy, spec.plan)), ansatz.s2)
    tau1 = ansatz.w_of_f
    tau2 = sub(add(sigma1, tau1), sigma2)
    return sigma1, sigma2, tau1, tau2


def samuelson_residuals(spec: WebSpec, ansatz: SolutionAnsatz) -> Tuple[Expr, Expr, Expr, Expr]:
    f, b = spec.f, spec.b
    ctx = WSymbolContext(f)

    def d(e: Expr, which: WebOperator) -> Expr:
        return web_derivative(e, which, f, ctx)

    sigma1, sigma2, tau1, _ = _potentials(spec, ansatz)
    H = compute_H(spec)
    b1 = d(b, WebOperator.D1)
    two = const(Fraction(2))
    last = add(
        add(mul(b, d(sigma1, WebOperator.D1)), mul(sub(b, ONE), d(tau1, WebOperator.D2))),
        add(sub(d(sigma2, WebOperator.D2), mul(two, mul(b, H))), b1),
    )
    return (
        simplify(sub(d(sigma1, WebOperator.D2), H)),
        simplify(sub(d(sigma2, WebOperator.D1), H)),
        simplify(sub(d(tau1, WebOperator.D2), d(tau1, WebOperator.D1))),
        simplify(last),
    )


def scaled_forms(spec: WebSpec, ansatz: SolutionAnsatz) -> FormQuadruple:
    potentials = _potentials(spec, ansatz)
    forms = []
    for potential, (a, c) in zip(potentials, normalized_forms(spec).forms):
        scale = exp(potential)
        forms.append((mul(scale, a), mul(scale, c)))
    return FormQuadruple(tuple(forms))


def closedness_defects(forms: FormQuadruple) -> Tuple[Expr, ...]:
    """d(a dx + c dy) = (c_x - a_y) dx∧dy; повертає a_y - c_x для кожної форми."""
    return tuple(
        simplify(sub(diff(a, "y", _PLAIN), diff(c, "x", _PLAIN)))
        for a, c in forms.forms
    )
