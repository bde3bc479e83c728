from __future__ import annotations

import math
import re
from dataclasses import dataclass, fields
from enum import Enum
from fractions import Fraction
from typing import Dict, Iterator, List, Optional, Set, Tuple, Union

from .exceptions import (
    DivisionByZeroError,
    DomainError,
    ExactnessError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownIdentifierError,
)
from .models import Mode


VARIABLES = ("x", "y")
MAX_W_ORDER = 6

Number = Union[Fraction, float]
Bindings = Dict[str, Number]


class BinaryOperator(str, Enum):

    ADD = "+"
    SUB = "-"
    MUL = "*"
    DIV = "/"
    POW = "^"


class Function(str, Enum):

    EXP = "exp"
    LOG = "log"
    SIN = "sin"
    COS = "cos"
    SQRT = "sqrt"


class Expr:
    """Незмінне дерево виразу. Рівність структурна."""

    __slots__ = ()

    def __add__(self, other) -> "Expr":
        return add(self, as_expr(other))

    def __radd__(self, other) -> "Expr":
        return add(as_expr(other), self)

    def __sub__(self, other) -> "Expr":
        return sub(self, as_expr(other))

    def __rsub__(self, other) -> "Expr":
        return sub(as_expr(other), self)

    def __mul__(self, other) -> "Expr":
        return mul(self, as_expr(other))

    def __rmul__(self, other) -> "Expr":
        return mul(as_expr(other), self)

    def __truediv__(self, other) -> "Expr":
        return div(self, as_expr(other))

    def __rtruediv__(self, other) -> "Expr":
        return div(as_expr(other), self)

    def __pow__(self, other) -> "Expr":
        return power(self, as_expr(other))

    def __neg__(self) -> "Expr":
        return neg(self)

    def __str__(self) -> str:
        return format_expr(self)


def _node_hash(self) -> int:
    # хеш обчислюється один раз на вузол
    cached = self.__dict__.get("_hash")
    if cached is None:
        cached = hash((type(self).__name__,) + tuple(getattr(self, f.name) for f in fields(self)))
        object.__setattr__(self, "_hash", cached)
    return cached


def _node_eq(self, other) -> bool:
    if self is other:
        return True
    if type(self) is not type(other) or hash(self) != hash(other):
        return False
    return all(getattr(self, f.name) == getattr(other, f.name) for f in fields(self))


def _hash_children(self) -> None:
    # діти вже мають хеш, тож глибина рекурсії стала
    _node_hash(self)


@dataclass(frozen=True)
class NumericLiteral(Expr):

    value: Fraction

    __hash__ = _node_hash

    def __post_init__(self):
        if self.value < 0:
            raise ValueError("Числовий літерал не може бути від'ємним; використовуйте UnaryOp.")


@dataclass(frozen=True)
class Variable(Expr):

    name: str

    __hash__ = _node_hash


@dataclass(frozen=True)
class WIndeterminate(Expr):
    # W_k = w^{(k)}(f)

    order: int

    __hash__ = _node_hash


@dataclass(frozen=True, eq=False)
class UnaryOp(Expr):
    # єдиний унарний оператор: заперечення

    operand: Expr

    __hash__ = _node_hash
    __eq__ = _node_eq
    __post_init__ = _hash_children


@dataclass(frozen=True, eq=False)
class BinaryOp(Expr):

    op: BinaryOperator
    left: Expr
    right: Expr

    __hash__ = _node_hash
    __eq__ = _node_eq
    __post_init__ = _hash_children


@dataclass(frozen=True, eq=False)
class FunctionCall(Expr):

    name: Function
    arg: Expr

    __hash__ = _node_hash
    __eq__ = _node_eq
    __post_init__ = _hash_children


X = Variable("x")
Y = Variable("y")
ZERO = NumericLiteral(Fraction(0))
ONE = NumericLiteral(Fraction(1))


def W(order: int) -> WIndeterminate:
    return WIndeterminate(order)


# ===================== Конструктори зі згортанням =====================

def as_expr(value) -> Expr:
    if isinstance(value, Expr):
        return value
    if isinstance(value, (int, Fraction)):
        return const(Fraction(value))
    if isinstance(value, float):
        return const(Fraction(value).limit_denominator(10 ** 12))
    raise TypeError(f"Неможливо перетворити {value!r} на вираз")


def const(value: Fraction) -> Expr:
    value = Fraction(value)
    if value < 0:
        return UnaryOp(const(-value))
    if value.denominator == 1 or _is_terminating(value):
        return NumericLiteral(value)
    return BinaryOp(
        BinaryOperator.DIV,
        NumericLiteral(Fraction(value.numerator)),
        NumericLiteral(Fraction(value.denominator)),
    )


def as_number(e: Expr) -> Optional[Fraction]:
    """Значення, якщо вираз є числовою константою у формі, яку будує const()."""
    if isinstance(e, NumericLiteral):
        return e.value
    if isinstance(e, UnaryOp):
        inner = as_number(e.operand)
        return None if inner is None else -inner
    if isinstance(e, BinaryOp) and e.op is BinaryOperator.DIV:
        if isinstance(e.left, NumericLiteral) and isinstance(e.right, NumericLiteral):
            if e.right.value != 0:
                return e.left.value / e.right.value
    return None


def add(a: Expr, b: Expr) -> Expr:
    na, nb = as_number(a), as_number(b)
    if na is not None and nb is not None:
        return const(na + nb)
    if na == 0:
        return b
    if nb == 0:
        return a
    if isinstance(b, UnaryOp):
        return BinaryOp(BinaryOperator.SUB, a, b.operand)
    return BinaryOp(BinaryOperator.ADD, a, b)


def sub(a: Expr, b: Expr) -> Expr:
    na, nb = as_number(a), as_number(b)
    if na is not None and nb is not None:
        return const(na - nb)
    if nb == 0:
        return a
    if na == 0:
        return neg(b)
    if a == b:
        return ZERO
    return BinaryOp(BinaryOperator.SUB, a, b)


def mul(a: Expr, b: Expr) -> Expr:
    na, nb = as_number(a), as_number(b)
    if na is not None and nb is not None:
        return const(na * nb)
    if na == 0 or nb == 0:
        return ZERO
    if na == 1:
        return b
    if nb == 1:
        return a
    if na == -1:
        return neg(b)
    if nb == -1:
        return neg(a)
    return BinaryOp(BinaryOperator.MUL, a, b)


def div(a: Expr, b: Expr) -> Expr:
    na, nb = as_number(a), as_number(b)
    if nb == 0:
        raise DivisionByZeroError("Ділення на нульову константу.")
    if na is not None and nb is not None:
        return const(na / nb)
    if na == 0:
        return ZERO
    if nb == 1:
        return a
    return BinaryOp(BinaryOperator.DIV, a, b)


def neg(a: Expr) -> Expr:
    na = as_number(a)
    if na is not None:
        return const(-na)
    if isinstance(a, UnaryOp):
        return a.operand
    return UnaryOp(a)


def power(base: Expr, exponent: Expr) -> Expr:
    nb, ne = as_number(base), as_number(exponent)
    if ne == 0:
        return ONE
    if ne == 1:
        return base
    if nb is not None and ne is not None and ne.denominator == 1:
        if nb == 0 and ne < 0:
            raise DivisionByZeroError("Нуль у від'ємному степені.")
        return const(nb ** int(ne))
    return BinaryOp(BinaryOperator.POW, base, exponent)


def call(name: Function, arg: Expr) -> Expr:
    return FunctionCall(name, arg)


def exp(arg: Expr) -> Expr:
    return call(Function.EXP, arg)


def log(arg: Expr) -> Expr:
    return call(Function.LOG, arg)


# ============================== Парсер ================================

_TOKEN_RE = re.compile(r"\s*(?:(\d+\.\d*|\.\d+|\d+)|([a-z]+)|(\S))")


@dataclass(frozen=True)
class _Token:

    kind: str      # "num", "ident", "op", "end"
    text: str
    position: int


def _tokenize(text: str) -> List[_Token]:
    tokens: List[_Token] = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            # лише пробіли до кінця
            break
        number, ident, other = match.groups()
        start = match.start(match.lastindex)
        if number is not None:
            tokens.append(_Token("num", number, start))
        elif ident is not None:
            tokens.append(_Token("ident", ident, start))
        elif other in "+-*/^(),":
            tokens.append(_Token("op", other, start))
        else:
            raise ExprSyntaxError(f"Неочікуваний символ '{other}'", start)
        pos = match.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


def _parse_number(text: str) -> Fraction:
    # десятковий літерал за розрядами: 1.5 -> 3/2
    if "." not in text:
        return Fraction(int(text))
    whole, frac = text.split(".")
    digits = (whole or "0") + frac
    return Fraction(int(digits), 10 ** len(frac))


class _Parser:

    def __init__(self, text: str):
        self._tokens = _tokenize(text)
        self._index = 0

    @property
    def _current(self) -> _Token:
        return self._tokens[self._index]

    def _advance(self) -> _Token:
        token = self._current
        self._index += 1
        return token

    def _expect(self, text: str) -> None:
        token = self._current
        if token.kind != "op" or token.text != text:
            raise ExprSyntaxError(f"Очікувалось '{text}'", token.position)
        self._advance()

    def parse(self) -> Expr:
        if self._current.kind == "end":
            raise ExprSyntaxError("Порожній вираз", 0)
        result = self._sum()
        if self._current.kind != "end":
            raise ExprSyntaxError(f"Зайвий токен '{self._current.text}'", self._current.position)
        return result

    def _sum(self) -> Expr:
        left = self._product()
        while self._current.kind == "op" and self._current.text in "+-":
            op = BinaryOperator(self._advance().text)
            left = BinaryOp(op, left, self._product())
        return left

    def _product(self) -> Expr:
        left = self._unary()
        while self._current.kind == "op" and self._current.text in "*/":
            op = BinaryOperator(self._advance().text)
            left = BinaryOp(op, left, self._unary())
        return left

    def _unary(self) -> Expr:
        if self._current.kind == "op" and self._current.text == "-":
            self._advance()
            return UnaryOp(self._unary())
        return self._power()

    def _power(self) -> Expr:
        base = self._atom()
        if self._current.kind == "op" and self._current.text == "^":
            self._advance()
            # правоасоціативно; показник може мати унарний мінус
            return BinaryOp(BinaryOperator.POW, base, self._unary())
        return base

    def _atom(self) -> Expr:
        token = self._current
        if token.kind == "num":
            self._advance()
            return NumericLiteral(_parse_number(token.text))
        if token.kind == "ident":
            self._advance()
            if token.text in VARIABLES:
                return Variable(token.text)
            try:
                name = Function(token.text)
            except ValueError:
                raise UnknownIdentifierError(token.text, token.position) from None
            self._expect("(")
            arg = self._sum()
            if self._current.kind == "op" and self._current.text == ",":
                raise ExprSyntaxError("Функція приймає один аргумент", self._current.position)
            self._expect(")")
            return FunctionCall(name, arg)
        if token.kind == "op" and token.text == "(":
            self._advance()
            inner = self._sum()
            self._expect(")")
            return inner
        if token.kind == "end":
            raise ExprSyntaxError("Неочікуваний кінець виразу", token.position)
        raise ExprSyntaxError(f"Неочікуваний токен '{token.text}'", token.position)


def parse(text: str) -> Expr:
    return _Parser(text).parse()


# ============================== Друк ==================================

_PREC_SUM, _PREC_PRODUCT, _PREC_UNARY, _PREC_POWER, _PREC_ATOM = 1, 2, 3, 4, 5


def _precedence(e: Expr) -> int:
    if isinstance(e, BinaryOp):
        if e.op in (BinaryOperator.ADD, BinaryOperator.SUB):
            return _PREC_SUM
        if e.op in (BinaryOperator.MUL, BinaryOperator.DIV):
            return _PREC_PRODUCT
        return _PREC_POWER
    if isinstance(e, UnaryOp):
        return _PREC_UNARY
    return _PREC_ATOM


def _is_terminating(value: Fraction) -> bool:
    den = value.denominator
    for p in (2, 5):
        while den % p == 0:
            den //= p
    return den == 1


def _format_number(value: Fraction) -> str:
    if value.denominator == 1:
        return str(value.numerator)
    if _is_terminating(value):
        places = 0
        scaled = value
        while scaled.denominator != 1:
            scaled *= 10
            places += 1
        digits = str(scaled.numerator).rjust(places + 1, "0")
        return f"{digits[:-places]}.{digits[-places:]}"
    # не десятковий літерал; друкується як частка
    return f"{value.numerator}/{value.denominator}"


def _wrap(e: Expr, needs_parens: bool) -> str:
    text = format_expr(e)
    return f"({text})" if needs_parens else text


def format_expr(e: Expr) -> str:
    if isinstance(e, NumericLiteral):
        return _format_number(e.value)
    if isinstance(e, Variable):
        return e.name
    if isinstance(e, WIndeterminate):
        return f"W{e.order}"
    if isinstance(e, FunctionCall):
        return f"{e.name.value}({format_expr(e.arg)})"
    if isinstance(e, UnaryOp):
        return "-" + _wrap(e.operand, _precedence(e.operand) <= _PREC_UNARY)
    if isinstance(e, BinaryOp):
        prec = _precedence(e)
        if e.op is BinaryOperator.POW:
            left = _wrap(e.left, _precedence(e.left) <= _PREC_POWER)
            right = _wrap(e.right, _precedence(e.right) < _PREC_UNARY)
            return f"{left}^{right}"
        left = _wrap(e.left, _precedence(e.left) < prec)
        right = _wrap(e.right, _precedence(e.right) <= prec)
        if prec == _PREC_SUM:
            return f"{left} {e.op.value} {right}"
        return f"{left}{e.op.value}{right}"
    raise TypeError(f"Невідомий вузол {e!r}")


# =========================== Обхід дерева =============================

def children(e: Expr) -> Tuple[Expr, ...]:
    if isinstance(e, UnaryOp):
        return (e.operand,)
    if isinstance(e, BinaryOp):
        return (e.left, e.right)
    if isinstance(e, FunctionCall):
        return (e.arg,)
    return ()


def walk(e: Expr) -> Iterator[Expr]:
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(children(node))


def free_symbols(e: Expr) -> Set[str]:
    names: Set[str] = set()
    for node in walk(e):
        if isinstance(node, Variable):
            names.add(node.name)
        elif isinstance(node, WIndeterminate):
            names.add(format_expr(node))
    return names


def w_orders(e: Expr) -> Set[int]:
    return {node.order for node in walk(e) if isinstance(node, WIndeterminate)}


def is_w_free(e: Expr) -> bool:
    return not w_orders(e)


def is_rational(e: Expr) -> bool:
    """Чи є вираз раціональною функцією (без трансцендентних вузлів)."""
    for node in walk(e):
        if isinstance(node, FunctionCall):
            return False
        if isinstance(node, BinaryOp) and node.op is BinaryOperator.POW:
            exponent = as_number(node.right)
            if exponent is None or exponent.denominator != 1:
                return False
    return True


def function_arguments(e: Expr, name: Function) -> List[Expr]:
    return [node.arg for node in walk(e) if isinstance(node, FunctionCall) and node.name is name]


def substitute(e: Expr, target: Expr, replacement: Expr) -> Expr:
    if not isinstance(target, (Variable, WIndeterminate)):
        raise TypeError("Підставляти можна лише змінну або W-невідому.")
    return _substitute(e, target, replacement)


def _substitute(e: Expr, target: Expr, replacement: Expr) -> Expr:
    if e == target:
        return replacement
    if isinstance(e, UnaryOp):
        return UnaryOp(_substitute(e.operand, target, replacement))
    if isinstance(e, BinaryOp):
        return BinaryOp(
            e.op,
            _substitute(e.left, target, replacement),
            _substitute(e.right, target, replacement),
        )
    if isinstance(e, FunctionCall):
        return FunctionCall(e.name, _substitute(e.arg, target, replacement))
    return e


# ============================ Обчислення ==============================

def evaluate(e: Expr, env: Bindings, mode: Mode = Mode.FLOAT) -> Number:
    if mode is Mode.EXACT:
        exact_env = {k: _to_fraction(v) for k, v in env.items()}
        return _eval_exact(e, exact_env)
    float_env = {k: float(v) for k, v in env.items()}
    return _eval_float(e, float_env)


def _to_fraction(value: Number) -> Fraction:
    if isinstance(value, Fraction):
        return value
    return Fraction(value)


def _lookup(e: Expr, env: Bindings):
    key = e.name if isinstance(e, Variable) else format_expr(e)
    if key not in env:
        raise UnboundVariableError(key)
    return env[key]


def _exact_sqrt(value: Fraction) -> Optional[Fraction]:
    num, den = value.numerator, value.denominator
    rn, rd = math.isqrt(num), math.isqrt(den)
    if rn * rn == num and rd * rd == den:
        return Fraction(rn, rd)
    return None


def _eval_exact(e: Expr, env: Dict[str, Fraction]) -> Fraction:
    if isinstance(e, NumericLiteral):
        return e.value
    if isinstance(e, (Variable, WIndeterminate)):
        return _lookup(e, env)
    if isinstance(e, UnaryOp):
        return -_eval_exact(e.operand, env)
    if isinstance(e, BinaryOp):
        left = _eval_exact(e.left, env)
        right = _eval_exact(e.right, env)
        if e.op is BinaryOperator.ADD:
            return left + right
        if e.op is BinaryOperator.SUB:
            return left - right
        if e.op is BinaryOperator.MUL:
            return left * right
        if e.op is BinaryOperator.DIV:
            if right == 0:
                raise DivisionByZeroError(f"Ділення на нуль у '{format_expr(e)}'.")
            return left / right
        if right.denominator != 1:
            raise ExactnessError("Нецілий показник степеня у точному режимі.")
        if left == 0 and right < 0:
            raise DivisionByZeroError(f"Нуль у від'ємному степені у '{format_expr(e)}'.")
        return left ** int(right)
    if isinstance(e, FunctionCall):
        arg = _eval_exact(e.arg, env)
        if e.name is Function.LOG:
            if arg <= 0:
                raise DomainError("Логарифм недодатного числа.")
            if arg == 1:
                return Fraction(0)
        elif e.name is Function.SQRT:
            if arg < 0:
                raise DomainError("Корінь з від'ємного числа.")
            root = _exact_sqrt(arg)
            if root is not None:
                return root
        elif arg == 0:
            if e.name is Function.EXP or e.name is Function.COS:
                return Fraction(1)
            return Fraction(0)
        raise ExactnessError(f"'{format_expr(e)}' не має точного раціонального значення.")
    raise TypeError(f"Невідомий вузол {e!r}")


def _eval_float(e: Expr, env: Dict[str, float]) -> float:
    if isinstance(e, NumericLiteral):
        return float(e.value)
    if isinstance(e, (Variable, WIndeterminate)):
        return _lookup(e, env)
    if isinstance(e, UnaryOp):
        return -_eval_float(e.operand, env)
    if isinstance(e, BinaryOp):
        left = _eval_float(e.left, env)
        if e.op is BinaryOperator.POW:
            return _float_power(left, e, env)
        right = _eval_float(e.right, env)
        if e.op is BinaryOperator.ADD:
            return left + right
        if e.op is BinaryOperator.SUB:
            return left - right
        if e.op is BinaryOperator.MUL:
            return left * right
        if right == 0.0:
            raise DivisionByZeroError(f"Ділення на нуль у '{format_expr(e)}'.")
        return left / right
    if isinstance(e, FunctionCall):
        arg = _eval_float(e.arg, env)
        try:
            if e.name is Function.EXP:
                return math.exp(arg)
            if e.name is Function.LOG:
                if arg <= 0.0:
                    raise DomainError("Логарифм недодатного числа.")
                return math.log(arg)
            if e.name is Function.SQRT:
                if arg < 0.0:
                    raise DomainError("Корінь з від'ємного числа.")
                return math.sqrt(arg)
            if e.name is Function.SIN:
                return math.sin(arg)
            return math.cos(arg)
        except OverflowError:
            raise DomainError(f"Переповнення у '{format_expr(e)}'.") from None
    raise TypeError(f"Невідомий вузол {e!r}")


def _float_power(base: float, e: BinaryOp, env: Dict[str, float]) -> float:
    exact_exponent = as_number(e.right)
    if exact_exponent is not None and exact_exponent.denominator == 1:
        n = int(exact_exponent)
        if base == 0.0 and n < 0:
            raise DivisionByZeroError(f"Нуль у від'ємному степені у '{format_expr(e)}'.")
        try:
            return base ** n
        except OverflowError:
            raise DomainError(f"Переповнення у '{format_expr(e)}'.") from None
    return _real_power(base, _eval_float(e.right, env), e)


def _real_power(base: float, exponent: float, e: Expr) -> float:
    if base < 0.0:
        raise DomainError(f"Парний корінь з від'ємного числа у '{format_expr(e)}'.")
    if base == 0.0:
        if exponent > 0.0:
            return 0.0
        raise DivisionByZeroError(f"Нуль у недодатному степені у '{format_expr(e)}'.")
    try:
        return math.exp(exponent * math.log(base))
    except OverflowError:
        raise DomainError(f"Переповнення у '{format_expr(e)}'.") from None
