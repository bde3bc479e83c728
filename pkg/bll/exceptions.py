from __future__ import annotations

from typing import Optional


class SWebError(Exception):

    pass


class ValidationError(SWebError):
    # некоректна конфігурація або аргументи

    pass


class NotFoundError(SWebError):

    pass


class ExprSyntaxError(ValidationError):

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (позиція {position})")
        self.position = position


class UnknownIdentifierError(ExprSyntaxError):

    def __init__(self, name: str, position: int):
        super().__init__(f"Невідомий ідентифікатор '{name}'", position)
        self.name = name


# ===== Помилки обчислення =====

class EvaluationError(SWebError):

    pass


class DivisionByZeroError(EvaluationError):

    pass


class DomainError(EvaluationError):

    pass


class ExactnessError(EvaluationError):
    # трансцендентний вузол без точного значення

    pass


class UnboundVariableError(EvaluationError):

    def __init__(self, name: str):
        super().__init__(f"Змінна '{name}' не має значення.")
        self.name = name


class PoleError(EvaluationError):

    pass


class WOrderOverflowError(SWebError):

    def __init__(self, order: int):
        super().__init__(f"Порядок W{order} перевищує допустимий максимум 6.")
        self.order = order


# ===== Помилки тканини =====

class DegenerateWebError(SWebError):

    pass


class MixedBranchError(DegenerateWebError):

    def __init__(self, message: str, witness: Optional[tuple] = None):
        super().__init__(message)
        self.witness = witness


class RepeatedDirectionError(SWebError):

    pass
