from __future__ import annotations

import math
from fractions import Fraction
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from .exceptions import DomainError, PoleError, ValidationError
from .expr import (
    BinaryOp,
    BinaryOperator,
    Expr,
    Function,
    FunctionCall,
    NumericLiteral,
    UnaryOp,
    Variable,
    WIndeterminate,
    as_number,
    is_rational,
    is_w_free,
)
from .models import JetTable, Point

Scalar = Union[Fraction, float]

MAX_JET_ORDER = 6


class Jet:
    """Обрізаний многочлен Тейлора за (dx, dy): coeffs[i, j] при dx^i dy^j, i + j <= order."""

    def __init__(self, coeffs: np.ndarray, order: int, exact: bool):
        self.coeffs = coeffs
        self.order = order
        self.exact = exact

    # ----- конструктори -----

    @classmethod
    def zeros(cls, order: int, exact: bool) -> "Jet":
        if exact:
            coeffs = np.full((order + 1, order + 1), Fraction(0), dtype=object)
        else:
            coeffs = np.zeros((order + 1, order + 1), dtype=float)
        return cls(coeffs, order, exact)

    @classmethod
    def constant(cls, value: Scalar, order: int, exact: bool) -> "Jet":
        jet = cls.zeros(order, exact)
        jet.coeffs[0, 0] = value
        return jet

    @classmethod
    def variable(cls, value: Scalar, axis: int, order: int, exact: bool) -> "Jet":
        jet = cls.constant(value, order, exact)
        if order >= 1:
            jet.coeffs[(1, 0) if axis == 0 else (0, 1)] = Fraction(1) if exact else 1.0
        return jet

    # ----- арифметика -----

    @property
    def value(self) -> Scalar:
        return self.coeffs[0, 0]

    def _like(self, coeffs: np.ndarray) -> "Jet":
        return Jet(coeffs, self.order, self.exact)

    def __add__(self, other: "Jet") -> "Jet":
        return self._like(self.coeffs + other.coeffs)

    def __sub__(self, other: "Jet") -> "Jet":
        return self._like(self.coeffs - other.coeffs)

    def __neg__(self) -> "Jet":
        return self._like(-self.coeffs)

    def __mul__(self, other: "Jet") -> "Jet":
        result = Jet.zeros(self.order, self.exact)
        a, b, out = self.coeffs, other.coeffs, result.coeffs
        m = self.order
        for i in range(m + 1):
            for j in range(m + 1 - i):
                total = out[i, j]
                for p in range(i + 1):
                    for q in range(j + 1):
                        total = total + a[p, q] * b[i - p, j - q]
                out[i, j] = total
        return result

    def compose(self, taylor: List[Scalar]) -> "Jet":
        """g(u) = sum taylor[k] (u - u0)^k за схемою Горнера."""
        nilpotent = self._like(self.coeffs.copy())
        nilpotent.coeffs[0, 0] = Fraction(0) if self.exact else 0.0
        result = Jet.constant(taylor[self.order], self.order, self.exact)
        for k in range(self.order - 1, -1, -1):
            result = result * nilpotent
            result.coeffs[0, 0] = result.coeffs[0, 0] + taylor[k]
        return result

    def reciprocal(self) -> "Jet":
        u0 = self.value
        if u0 == 0:
            raise PoleError("Полюс: ділення на ряд з нульовим вільним членом.")
        one = Fraction(1) if self.exact else 1.0
        taylor = [(-1) ** k * one / u0 ** (k + 1) for k in range(self.order + 1)]
        return self.compose(taylor)

    def __truediv__(self, other: "Jet") -> "Jet":
        return self * other.reciprocal()

    def integer_power(self, n: int) -> "Jet":
        if n < 0:
            return self.reciprocal().integer_power(-n)
        result = Jet.constant(Fraction(1) if self.exact else 1.0, self.order, self.exact)
        base = self
        while n:
            if n & 1:
                result = result * base
            base = base * base
            n >>= 1
        return result

    # ----- елементарні функції (лише числовий шлях) -----

    def exp(self) -> "Jet":
        u0 = float(self.value)
        try:
            e0 = math.exp(u0)
        except OverflowError:
            raise DomainError("Переповнення exp.") from None
        return self._float().compose([e0 / math.factorial(k) for k in range(self.order + 1)])

    def log(self) -> "Jet":
        u0 = float(self.value)
        if u0 <= 0.0:
            raise DomainError("Логарифм недодатного числа.")
        taylor = [math.log(u0)] + [(-1) ** (k + 1) / (k * u0 ** k) for k in range(1, self.order + 1)]
        return self._float().compose(taylor)

    def sin(self) -> "Jet":
        u0 = float(self.value)
        taylor = [math.sin(u0 + k * math.pi / 2) / math.factorial(k) for k in range(self.order + 1)]
        return self._float().compose(taylor)

    def cos(self) -> "Jet":
        u0 = float(self.value)
        taylor = [math.cos(u0 + k * math.pi / 2) / math.factorial(k) for k in range(self.order + 1)]
        return self._float().compose(taylor)

    def real_power(self, alpha: float) -> "Jet":
        u0 = float(self.value)
        if u0 < 0.0:
            raise DomainError("Парний корінь з від'ємного числа.")
        if u0 == 0.0:
            raise PoleError("Нецілий степінь у нулі не має ряду Тейлора.")
        taylor = []
        binomial = 1.0
        for k in range(self.order + 1):
            taylor.append(binomial * u0 ** (alpha - k))
            binomial *= (alpha - k) / (k + 1)
        return self._float().compose(taylor)

    def _float(self) -> "Jet":
        if not self.exact:
            return self
        return Jet(self.coeffs.astype(float), self.order, False)


# ============================ Обчислення ==============================

def _lift(jet: Jet, other: Jet) -> Tuple[Jet, Jet]:
    if jet.exact == other.exact:
        return jet, other
    return jet._float(), other._float()


def _binary(op: Callable[[Jet, Jet], Jet], a: Jet, b: Jet) -> Jet:
    a, b = _lift(a, b)
    return op(a, b)


def _jet(e: Expr, point: Tuple[Scalar, Scalar], order: int, exact: bool) -> Jet:
    if isinstance(e, NumericLiteral):
        return Jet.constant(e.value if exact else float(e.value), order, exact)
    if isinstance(e, Variable):
        axis = 0 if e.name == "x" else 1
        return Jet.variable(point[axis], axis, order, exact)
    if isinstance(e, WIndeterminate):
        raise ValidationError("Струменева оцінка не підтримує W-невідомі.")
    if isinstance(e, UnaryOp):
        return -_jet(e.operand, point, order, exact)
    if isinstance(e, BinaryOp):
        left = _jet(e.left, point, order, exact)
        if e.op is BinaryOperator.POW:
            return _power(left, e.right, point, order, exact)
        right = _jet(e.right, point, order, exact)
        if e.op is BinaryOperator.ADD:
            return _binary(Jet.__add__, left, right)
        if e.op is BinaryOperator.SUB:
            return _binary(Jet.__sub__, left, right)
        if e.op is BinaryOperator.MUL:
            return _binary(Jet.__mul__, left, right)
        return _binary(Jet.__truediv__, left, right)
    if isinstance(e, FunctionCall):
        arg = _jet(e.arg, point, order, exact)
        if e.name is Function.EXP:
            return arg.exp()
        if e.name is Function.LOG:
            return arg.log()
        if e.name is Function.SIN:
            return arg.sin()
        if e.name is Function.COS:
            return arg.cos()
        return arg.real_power(0.5)
    raise TypeError(f"Невідомий вузол {e!r}")


def _power(base: Jet, exponent: Expr, point, order: int, exact: bool) -> Jet:
    n = as_number(exponent)
    if n is not None and n.denominator == 1:
        return base.integer_power(int(n))
    if n is not None:
        return base.real_power(float(n))
    # a^b = exp(b log a)
    return (_jet(exponent, point, order, False) * base._float().log()).exp()


def jet_eval(e: Expr, point: Point, m: int, exact: Optional[bool] = None) -> JetTable:
    """Усі мішані похідні d^i/dx^i d^j/dy^j (i + j <= m) у точці."""
    if not is_w_free(e):
        raise ValidationError("Струменева оцінка вимагає виразу без W.")
    if not 0 <= m <= MAX_JET_ORDER:
        raise ValidationError(f"Порядок струменя має бути в межах 0..{MAX_JET_ORDER}.")
    if exact is None:
        exact = all(isinstance(c, (Fraction, int)) for c in point) and is_rational(e)
    coords = tuple(Fraction(c) for c in point) if exact else tuple(float(c) for c in point)
    jet = _jet(e, coords, m, exact)
    entries = {}
    for i in range(m + 1):
        for j in range(m + 1 - i):
            coefficient = jet.coeffs[i, j]
            entries[(i, j)] = coefficient * math.factorial(i) * math.factorial(j)
    return JetTable(point=tuple(coords), order=m, entries=entries)
