from __future__ import annotations

import logging
import math
import random
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import sympy
from sympy.polys.fields import field

from .exceptions import (
    DegenerateWebError,
    DivisionByZeroError,
    EvaluationError,
    ExactnessError,
    WOrderOverflowError,
)
from .expr import (
    MAX_W_ORDER,
    ONE,
    ZERO,
    BinaryOp,
    BinaryOperator,
    Bindings,
    Expr,
    Function,
    FunctionCall,
    NumericLiteral,
    UnaryOp,
    Variable,
    WIndeterminate,
    add,
    as_number,
    call,
    const,
    div,
    evaluate,
    format_expr,
    log,
    mul,
    neg,
    power,
    sub,
    w_orders,
)
from .models import Mode, Point, SamplePlan, VerdictKind, WebOperator, ZeroVerdict


logger = logging.getLogger(__name__)

Number = Union[Fraction, float]


@dataclass(frozen=True)
class WSymbolContext:
    # W_k у виразах означає w^{(k)}, складене з base

    base: Expr


# ========================= Диференціювання ============================

def _variable(var: Union[str, Variable]) -> Variable:
    name = var.name if isinstance(var, Variable) else var
    if name not in ("x", "y"):
        raise ValueError(f"Диференціювати можна лише за x або y, отримано '{name}'")
    return Variable(name)


def diff(e: Expr, var: Union[str, Variable], ctx: WSymbolContext) -> Expr:
    return _diff(e, _variable(var), ctx.base)


@lru_cache(maxsize=32768)
def _diff(e: Expr, var: Variable, base: Expr) -> Expr:
    if isinstance(e, NumericLiteral):
        return ZERO
    if isinstance(e, Variable):
        return ONE if e == var else ZERO
    if isinstance(e, WIndeterminate):
        d_base = _diff(base, var, base)
        if normal_form(d_base).is_zero:
            return ZERO
        if e.order + 1 > MAX_W_ORDER:
            raise WOrderOverflowError(e.order + 1)
        # правило ланцюжка: d(W_k) = W_{k+1} * d(base)
        return mul(WIndeterminate(e.order + 1), d_base)
    if isinstance(e, UnaryOp):
        return neg(_diff(e.operand, var, base))
    if isinstance(e, BinaryOp):
        a, b = e.left, e.right
        if e.op is BinaryOperator.ADD:
            return add(_diff(a, var, base), _diff(b, var, base))
        if e.op is BinaryOperator.SUB:
            return sub(_diff(a, var, base), _diff(b, var, base))
        if e.op is BinaryOperator.MUL:
            return add(mul(_diff(a, var, base), b), mul(a, _diff(b, var, base)))
        if e.op is BinaryOperator.DIV:
            da, db = _diff(a, var, base), _diff(b, var, base)
            return sub(div(da, b), div(mul(a, db), power(b, const(Fraction(2)))))
        return _diff_power(a, b, var, base)
    if isinstance(e, FunctionCall):
        u = e.arg
        du = _diff(u, var, base)
        if e.name is Function.EXP:
            return mul(e, du)
        if e.name is Function.LOG:
            return div(du, u)
        if e.name is Function.SIN:
            return mul(call(Function.COS, u), du)
        if e.name is Function.COS:
            return neg(mul(call(Function.SIN, u), du))
        return div(du, mul(const(Fraction(2)), e))
    raise TypeError(f"Невідомий вузол {e!r}")


def _diff_power(a: Expr, b: Expr, var: Variable, base: Expr) -> Expr:
    da = _diff(a, var, base)
    n = as_number(b)
    if n is not None:
        return mul(mul(const(n), power(a, const(n - 1))), da)
    db = _diff(b, var, base)
    # a^b * (b' log a + b a'/a)
    return mul(power(a, b), add(mul(db, log(a)), div(mul(b, da), a)))


@lru_cache(maxsize=256)
def _frame_denominators(f: Expr) -> Tuple[Expr, Expr]:
    ctx = WSymbolContext(f)
    fx = simplify(diff(f, "x", ctx))
    fy = simplify(diff(f, "y", ctx))
    if fx == ZERO or fy == ZERO:
        raise DegenerateWebError("f_x або f_y тотожно дорівнює нулю.")
    return fx, fy


def web_derivative(
    e: Expr,
    which: WebOperator,
    f: Expr,
    ctx: Optional[WSymbolContext] = None,
) -> Expr:
    """d1 = -f_x^{-1} d/dx, d2 = -f_y^{-1} d/dy, delta = d1 - d2."""
    ctx = ctx or WSymbolContext(f)
    fx, fy = _frame_denominators(f)
    if which is WebOperator.D1:
        return neg(div(derivative(e, "x", ctx), fx))
    if which is WebOperator.D2:
        return neg(div(derivative(e, "y", ctx), fy))
    return sub(
        web_derivative(e, WebOperator.D1, f, ctx),
        web_derivative(e, WebOperator.D2, f, ctx),
    )


# ========================== Нормальна форма ===========================

Monomial = Tuple[int, ...]


@dataclass(frozen=True)
class NormalForm:
    # numerator / denominator над генераторами gens; знаменник зведений

    gens: Tuple[Expr, ...]
    numerator: Tuple[Tuple[Monomial, Fraction], ...]
    denominator: Tuple[Tuple[Monomial, Fraction], ...]
    expr: Expr

    @property
    def is_zero(self) -> bool:
        return not self.numerator

    @property
    def has_atoms(self) -> bool:
        return any(not isinstance(g, (Variable, WIndeterminate)) for g in self.gens)


def _rewrite_call(name: Function, arg: Expr) -> Optional[Expr]:
    value = as_number(arg)
    if name is Function.EXP:
        if value == 0:
            return ONE
        if isinstance(arg, FunctionCall) and arg.name is Function.LOG:
            return arg.arg
    elif name is Function.LOG:
        if value == 1:
            return ZERO
        if isinstance(arg, FunctionCall) and arg.name is Function.EXP:
            return arg.arg
    elif name is Function.SIN:
        if value == 0:
            return ZERO
    elif name is Function.COS:
        if value == 0:
            return ONE
    elif name is Function.SQRT and value is not None and value >= 0:
        num, den = value.numerator, value.denominator
        rn, rd = math.isqrt(num), math.isqrt(den)
        if rn * rn == num and rd * rd == den:
            return const(Fraction(rn, rd))
    return None


def _gen_key(g: Expr) -> Tuple[int, int, str]:
    if isinstance(g, Variable):
        return 0, 0 if g.name == "x" else 1, g.name
    if isinstance(g, WIndeterminate):
        return 1, g.order, ""
    return 2, 0, format_expr(g)


def _monomial_expr(gens: Sequence[Expr], monom: Monomial) -> List[Expr]:
    factors: List[Expr] = []
    for gen, exponent in zip(gens, monom):
        if exponent == 1:
            factors.append(gen)
        elif exponent > 1:
            factors.append(BinaryOp(BinaryOperator.POW, gen, NumericLiteral(Fraction(exponent))))
    return factors


def _term_expr(gens: Sequence[Expr], monom: Monomial, coeff: Fraction, lead: bool) -> Tuple[bool, Expr]:
    factors = _monomial_expr(gens, monom)
    magnitude = abs(coeff)
    negative = coeff < 0
    if not factors:
        factors = [const(magnitude)]
    elif magnitude != 1:
        factors.insert(0, const(magnitude))
    if negative and lead:
        # мінус першого доданка йде на крайній лівий множник
        factors[0] = UnaryOp(factors[0])
    result = factors[0]
    for factor in factors[1:]:
        result = BinaryOp(BinaryOperator.MUL, result, factor)
    return negative, result


def _polynomial_expr(gens: Sequence[Expr], terms: Sequence[Tuple[Monomial, Fraction]]) -> Expr:
    if not terms:
        return ZERO
    _, result = _term_expr(gens, terms[0][0], terms[0][1], lead=True)
    for monom, coeff in terms[1:]:
        negative, term = _term_expr(gens, monom, coeff, lead=False)
        op = BinaryOperator.SUB if negative else BinaryOperator.ADD
        result = BinaryOp(op, result, term)
    return result


# ------------------- поле раціональних функцій ------------------------

_BASE_GENS: Tuple[Expr, ...] = (Variable("x"), Variable("y")) + tuple(
    WIndeterminate(k) for k in range(MAX_W_ORDER + 1)
)


@lru_cache(maxsize=64)
def _rational_field(atom_count: int):
    names = ["x", "y"] + [f"W{k}" for k in range(MAX_W_ORDER + 1)] + [f"_a{i}" for i in range(atom_count)]
    K, *gens = field(",".join(names), sympy.QQ)
    return K, tuple(gens)


def _chain(e: BinaryOp) -> List[Tuple[int, Expr]]:
    # лівий ланцюжок a + b - c + ... як список доданків зі знаками
    terms: List[Tuple[int, Expr]] = []
    node: Expr = e
    while isinstance(node, BinaryOp) and node.op in (BinaryOperator.ADD, BinaryOperator.SUB):
        terms.append((1 if node.op is BinaryOperator.ADD else -1, node.right))
        node = node.left
    terms.append((1, node))
    terms.reverse()
    return terms


def _fraction(coeff) -> Fraction:
    return Fraction(int(coeff.numerator), int(coeff.denominator))


class _FieldConverter:
    """Вирази як елементи поля Q(x, y, W0..W6, атоми)."""

    def __init__(self, roots: Sequence[Expr]):
        self._plan: Dict[Expr, Tuple[str, object]] = {}
        atoms = set()
        stack = list(roots)
        while stack:
            node = stack.pop()
            if node in self._plan:
                continue
            kind, payload = self._classify(node)
            self._plan[node] = (kind, payload)
            if kind == "atom":
                atoms.add(payload)
            else:
                stack.extend(self._operands(node, kind, payload))
        self.atoms: Tuple[Expr, ...] = tuple(sorted(atoms, key=_gen_key))
        self.field, field_gens = _rational_field(len(self.atoms))
        self.gens: Tuple[Expr, ...] = _BASE_GENS + self.atoms
        self._gen_of = dict(zip(self.gens, field_gens))
        self._values: Dict[Expr, object] = {}

    @staticmethod
    def _classify(e: Expr) -> Tuple[str, object]:
        if isinstance(e, NumericLiteral):
            return "const", e.value
        if isinstance(e, (Variable, WIndeterminate)):
            if isinstance(e, WIndeterminate) and e.order > MAX_W_ORDER:
                raise WOrderOverflowError(e.order)
            return "gen", e
        if isinstance(e, UnaryOp):
            return "neg", None
        if isinstance(e, BinaryOp):
            if e.op in (BinaryOperator.ADD, BinaryOperator.SUB):
                return "sum", _chain(e)
            if e.op is BinaryOperator.MUL:
                return "mul", None
            if e.op is BinaryOperator.DIV:
                return "div", None
            exponent = simplify(e.right)
            n = as_number(exponent)
            if n is not None and n.denominator == 1:
                return "pow", int(n)
            return "atom", BinaryOp(BinaryOperator.POW, simplify(e.left), exponent)
        if isinstance(e, FunctionCall):
            arg = simplify(e.arg)
            rewritten = _rewrite_call(e.name, arg)
            if rewritten is not None:
                return "alias", rewritten
            return "atom", FunctionCall(e.name, arg)
        raise TypeError(f"Невідомий вузол {e!r}")

    @staticmethod
    def _operands(e: Expr, kind: str, payload) -> List[Expr]:
        if kind == "neg":
            return [e.operand]
        if kind == "sum":
            return [term for _, term in payload]
        if kind in ("mul", "div"):
            return [e.left, e.right]
        if kind == "pow":
            return [e.left]
        if kind == "alias":
            return [payload]
        return []

    def generator(self, g: Expr):
        return self._gen_of[g]

    def element(self, root: Expr):
        values = self._values
        stack: List[Tuple[Expr, bool]] = [(root, False)]
        while stack:
            node, ready = stack.pop()
            if node in values:
                continue
            kind, payload = self._plan[node]
            if not ready:
                stack.append((node, True))
                stack.extend((child, False) for child in self._operands(node, kind, payload) if child not in values)
                continue
            try:
                values[node] = self._combine(node, kind, payload)
            except ZeroDivisionError:
                raise DivisionByZeroError(f"Вираз '{format_expr(node)}' тотожно ділить на нуль.") from None
        return values[root]

    def _combine(self, e: Expr, kind: str, payload):
        values = self._values
        if kind == "const":
            return self.field.ground_new(sympy.QQ(payload.numerator, payload.denominator))
        if kind == "gen":
            return self._gen_of[e]
        if kind == "atom":
            return self._gen_of[payload]
        if kind == "alias":
            return values[payload]
        if kind == "neg":
            return -values[e.operand]
        if kind == "sum":
            return self._sum(payload)
        left = values[e.left]
        if kind == "mul":
            return left * values[e.right]
        if kind == "div":
            right = values[e.right]
            if not right:
                raise ZeroDivisionError
            return left / right
        if payload < 0 and not left:
            raise ZeroDivisionError
        return left ** payload

    def _sum(self, terms: Sequence[Tuple[int, Expr]]):
        # поліноміальні доданки складаються без скорочень
        ring = self.field.ring
        polynomial: Dict[Monomial, object] = {}
        fractions = []
        for sign, term in terms:
            value = self._values[term]
            if value.denom.is_ground:
                scale = sign / value.denom.LC
                for monom, coeff in value.numer.items():
                    polynomial[monom] = polynomial.get(monom, 0) + coeff * scale
            else:
                fractions.append(value if sign > 0 else -value)
        total = self.field.new(ring.from_dict(polynomial))
        for value in fractions:
            total = total + value
        return total

    def normal(self, value) -> NormalForm:
        numer, denom = value.numer, value.denom
        if not numer:
            return NormalForm((), (), (((), Fraction(1)),), ZERO)
        used = sorted({
            i
            for poly in (numer, denom)
            for monom in poly.keys()
            for i, exponent in enumerate(monom)
            if exponent
        })
        gens = tuple(self.gens[i] for i in used)

        def terms(poly) -> List[Tuple[Monomial, Fraction]]:
            result = [(tuple(monom[i] for i in used), _fraction(coeff)) for monom, coeff in poly.items()]
            # grlex за спаданням
            result.sort(key=lambda term: (sum(term[0]), term[0]), reverse=True)
            return result

        num_terms, den_terms = terms(numer), terms(denom)
        lead = den_terms[0][1]
        num_terms = [(m, c / lead) for m, c in num_terms]
        den_terms = [(m, c / lead) for m, c in den_terms]

        if not gens:
            number = num_terms[0][1]
            return NormalForm((), (((), number),), (((), Fraction(1)),), const(number))

        numerator_expr = _polynomial_expr(gens, num_terms)
        if len(den_terms) == 1 and den_terms[0][1] == 1 and not any(den_terms[0][0]):
            expr = numerator_expr
        else:
            expr = BinaryOp(BinaryOperator.DIV, numerator_expr, _polynomial_expr(gens, den_terms))
        return NormalForm(gens, tuple(num_terms), tuple(den_terms), expr)


@lru_cache(maxsize=16384)
def normal_form(e: Expr) -> NormalForm:
    converter = _FieldConverter((e,))
    return converter.normal(converter.element(e))


def derivative(e: Expr, var: Union[str, Variable], ctx: WSymbolContext) -> Expr:
    """simplify(diff(e, var, ctx)), обчислене в полі раціональних функцій."""
    return _derivative(e, _variable(var), ctx.base)


@lru_cache(maxsize=16384)
def _derivative(e: Expr, var: Variable, base: Expr) -> Expr:
    converter = _FieldConverter((e, base))
    if converter.atoms:
        return simplify(_diff(e, var, base))
    value = converter.element(e)
    gen = converter.generator(var)
    result = value.diff(gen)
    base_d = converter.element(base).diff(gen)
    if base_d:
        for order in sorted(w_orders(e)):
            partial = value.diff(converter.generator(WIndeterminate(order)))
            if not partial:
                continue
            if order + 1 > MAX_W_ORDER:
                raise WOrderOverflowError(order + 1)
            # d(W_k) = W_{k+1} * d(base)
            result = result + partial * converter.generator(WIndeterminate(order + 1)) * base_d
    return converter.normal(result).expr


def simplify(e: Expr) -> Expr:
    """Канонічна раціональна нормальна форма, трансцендентні піддерева стають атомами."""
    return normal_form(e).expr


def affine_split(e: Expr, max_order: int) -> Tuple[Tuple[Expr, ...], Expr]:
    """Розклад e = sum c_k W_k + c_0 для k = 1..max_order."""
    nf = normal_form(e)
    w_index = {i: g.order for i, g in enumerate(nf.gens) if isinstance(g, WIndeterminate)}
    if any(order == 0 or order > max_order for order in w_index.values()):
        raise ValueError(f"Вираз містить W поза діапазоном 1..{max_order}")
    buckets: Dict[int, List[Tuple[Monomial, Fraction]]] = {}
    for monom, coeff in nf.numerator:
        w_degree = sum(monom[i] for i in w_index)
        if w_degree > 1:
            raise ValueError("Вираз не афінний відносно W")
        order = 0
        stripped = list(monom)
        for i, order_k in w_index.items():
            if monom[i]:
                order = order_k
                stripped[i] = 0
        buckets.setdefault(order, []).append((tuple(stripped), coeff))
    denominator = _polynomial_expr(nf.gens, nf.denominator)

    def part(order: int) -> Expr:
        terms = buckets.get(order)
        if not terms:
            return ZERO
        return simplify(div(_polynomial_expr(nf.gens, terms), denominator))

    return tuple(part(k) for k in range(1, max_order + 1)), part(0)


# ======================== Обчислення у точках =========================

def _point_env(point: Point, w_values: Optional[Bindings] = None) -> Bindings:
    env: Bindings = {"x": point[0], "y": point[1]}
    if w_values:
        env.update(w_values)
    return env


def evaluate_normal(e: Expr, env: Bindings, mode: Mode = Mode.FLOAT) -> Tuple[Number, Number]:
    """Значення виразу і масштаб (сума модулів доданків чисельника) через нормальну форму."""
    nf = normal_form(e)
    if mode is Mode.EXACT and nf.has_atoms:
        raise ExactnessError("Вираз містить трансцендентні атоми.")
    gen_values = [evaluate(g, env, mode) for g in nf.gens]

    def poly_value(terms) -> Tuple[Number, Number]:
        total = Fraction(0) if mode is Mode.EXACT else 0.0
        scale = Fraction(0) if mode is Mode.EXACT else 0.0
        for monom, coeff in terms:
            term = coeff if mode is Mode.EXACT else float(coeff)
            for value, exponent in zip(gen_values, monom):
                if exponent:
                    term = term * value ** exponent
            total += term
            scale += abs(term)
        return total, scale

    num, num_scale = poly_value(nf.numerator)
    den, _ = poly_value(nf.denominator)
    if den == 0:
        raise DivisionByZeroError(f"Знаменник '{format_expr(e)}' обертається в нуль.")
    return num / den, num_scale / abs(den)


def evaluate_at(e: Expr, point: Point, mode: Mode = Mode.FLOAT, w_values: Optional[Bindings] = None) -> Number:
    value, _ = evaluate_normal(e, _point_env(point, w_values), mode)
    return value


# ============================= Вибірки ================================

_GRID = 1000


@lru_cache(maxsize=512)
def sample_points(plan: SamplePlan) -> Tuple[Point, ...]:
    """Детермінований набір раціональних точок усередині області (поза виключеннями)."""
    rng = random.Random(plan.seed)
    domain = plan.domain
    points: List[Point] = []
    attempts = 0
    while len(points) < plan.samples and attempts < 50 * plan.samples:
        attempts += 1
        x = domain.x0 + (domain.x1 - domain.x0) * Fraction(rng.randint(1, _GRID - 1), _GRID)
        y = domain.y0 + (domain.y1 - domain.y0) * Fraction(rng.randint(1, _GRID - 1), _GRID)
        if _excluded((x, y), plan):
            continue
        if (x, y) not in points:
            points.append((x, y))
    if len(points) < plan.samples:
        logger.warning("Отримано лише %d з %d точок вибірки", len(points), plan.samples)
    return tuple(points)


def _excluded(point: Point, plan: SamplePlan) -> bool:
    env = _point_env((float(point[0]), float(point[1])))
    for locus in plan.exclusions:
        try:
            value, _ = evaluate_normal(locus, env, Mode.FLOAT)
        except (EvaluationError, ZeroDivisionError, OverflowError):
            return True
        if abs(value) < plan.margin:
            return True
    return False


def grid_points(plan: SamplePlan, size: int = 9) -> Tuple[Point, ...]:
    domain = plan.domain
    points = []
    for i in range(size):
        for j in range(size):
            x = domain.x0 + (domain.x1 - domain.x0) * Fraction(i, size - 1)
            y = domain.y0 + (domain.y1 - domain.y0) * Fraction(j, size - 1)
            points.append((x, y))
    return tuple(points)


def _w_sample(rng: random.Random) -> Bindings:
    return {f"W{k}": Fraction(rng.randint(-20, 20), 7) for k in range(MAX_W_ORDER + 1)}


def _rational_witness(e: Expr, plan: SamplePlan) -> ZeroVerdict:
    # ненульова раціональна нормальна форма: вердикт доведено, точка лише ілюструє
    points = sample_points(plan)
    rng = random.Random(plan.seed + 7919)
    failures = 0
    for point in points:
        env = _point_env(point, _w_sample(rng))
        try:
            value, _ = evaluate_normal(e, env, Mode.EXACT)
        except (EvaluationError, ZeroDivisionError):
            failures += 1
            continue
        if value != 0:
            return ZeroVerdict(
                VerdictKind.NONZERO,
                witness=point,
                value=float(value),
                proof=True,
                residual=abs(float(value)),
                samples=len(points),
                failures=failures,
            )
    return ZeroVerdict(VerdictKind.NONZERO, proof=True, samples=len(points), failures=failures)


def is_zero(e: Expr, plan: SamplePlan) -> ZeroVerdict:
    nf = normal_form(e)
    if nf.is_zero:
        return ZeroVerdict(VerdictKind.ZERO, proof=True)
    if not nf.has_atoms:
        return _rational_witness(e, plan)

    points = sample_points(plan)
    rng = random.Random(plan.seed + 7919)
    failures = 0
    residual = 0.0
    for point in points:
        w_values = _w_sample(rng)
        env = _point_env((float(point[0]), float(point[1])), w_values)
        try:
            value, scale = evaluate_normal(e, env, Mode.FLOAT)
        except (EvaluationError, ZeroDivisionError, OverflowError):
            failures += 1
            continue
        magnitude = abs(float(value))
        residual = max(residual, magnitude)
        if magnitude > plan.tol * (1.0 + float(scale)):
            return ZeroVerdict(
                VerdictKind.NONZERO,
                witness=point,
                value=float(value),
                residual=residual,
                samples=len(points),
                failures=failures,
            )
    if not points or failures * 2 > len(points):
        return ZeroVerdict(VerdictKind.INCONCLUSIVE, residual=residual, samples=len(points), failures=failures)
    return ZeroVerdict(VerdictKind.ZERO, residual=residual, samples=len(points), failures=failures)


def sign_violation(e: Expr, plan: SamplePlan) -> Optional[Point]:
    """Точка, де e майже нуль або змінює знак (вибірка + сітка на замкненій області), або None."""
    sign = 0
    for point in sample_points(plan) + grid_points(plan):
        try:
            value = float(evaluate_at(e, (float(point[0]), float(point[1]))))
        except (EvaluationError, ZeroDivisionError, OverflowError):
            return point
        if abs(value) < plan.margin:
            return point
        current = 1 if value > 0 else -1
        if sign == 0:
            sign = current
        elif current != sign:
            return point
    return None


def sign_at_center(e: Expr, plan: SamplePlan) -> int:
    value = float(evaluate_at(e, tuple(float(c) for c in plan.domain.center())))
    return 1 if value > 0 else -1
