import random
import unittest
from fractions import Fraction

from bll.expr import (
    BinaryOp,
    BinaryOperator,
    Function,
    FunctionCall,
    NumericLiteral,
    UnaryOp,
    Variable,
    W,
    X,
    Y,
    evaluate,
    format_expr,
    free_symbols,
    is_rational,
    parse,
    substitute,
)
from bll.exceptions import (
    DivisionByZeroError,
    DomainError,
    ExactnessError,
    ExprSyntaxError,
    UnboundVariableError,
    UnknownIdentifierError,
)
from bll.models import Mode


class ExprParseTests(unittest.TestCase):

    def test_parse_respects_precedence(self):
        # Act
        e = parse("x + y*2")

        # Assert
        self.assertEqual(e, BinaryOp(BinaryOperator.ADD, X, BinaryOp(BinaryOperator.MUL, Y, NumericLiteral(Fraction(2)))))

    def test_power_is_right_associative(self):
        # Act
        e = parse("x^2^3")

        # Assert
        self.assertEqual(e.op, BinaryOperator.POW)
        self.assertEqual(e.left, X)
        self.assertEqual(e.right, BinaryOp(BinaryOperator.POW, NumericLiteral(Fraction(2)), NumericLiteral(Fraction(3))))

    def test_unary_minus_binds_looser_than_power(self):
        # -x^2 = -(x^2), але -x*y = (-x)*y
        self.assertEqual(parse("-x^2"), UnaryOp(BinaryOp(BinaryOperator.POW, X, NumericLiteral(Fraction(2)))))
        self.assertEqual(parse("-x*y"), BinaryOp(BinaryOperator.MUL, UnaryOp(X), Y))

    def test_decimal_literal_is_exact(self):
        self.assertEqual(parse("1.5"), NumericLiteral(Fraction(3, 2)))
        self.assertEqual(parse(".25"), NumericLiteral(Fraction(1, 4)))

    def test_syntax_error_reports_position(self):
        # Act + Assert
        with self.assertRaises(ExprSyntaxError) as ctx:
            parse("x +* y")
        self.assertEqual(ctx.exception.position, 3)

    def test_unknown_identifier(self):
        with self.assertRaises(UnknownIdentifierError) as ctx:
            parse("tan(x)")
        self.assertEqual(ctx.exception.name, "tan")

    def test_w_is_not_accepted_in_user_input(self):
        with self.assertRaises(ExprSyntaxError):
            parse("W1 + x")

    def test_unbalanced_parentheses(self):
        with self.assertRaises(ExprSyntaxError):
            parse("(x + y")
        with self.assertRaises(ExprSyntaxError):
            parse("")


class ExprFormatTests(unittest.TestCase):

    def test_format_round_trips_through_parse(self):
        # Arrange
        texts = ["x + y*2", "3/(x + y - 1)", "-x^2", "exp(-(x + y))", "x - (y - 1)", "(x*y)^2", "x^-1"]

        for text in texts:
            with self.subTest(text=text):
                # Act
                printed = format_expr(parse(text))

                # Assert
                self.assertEqual(parse(printed), parse(text))

    def test_format_canonical_spacing(self):
        self.assertEqual(format_expr(parse("x+y * 2")), "x + y*2")
        self.assertEqual(format_expr(parse("3/( x+y-1 )")), "3/(x + y - 1)")

    def test_w_prints_with_order(self):
        self.assertEqual(format_expr(W(3) * X), "W3*x")


class ExprEvaluateTests(unittest.TestCase):

    def test_exact_evaluation_uses_fractions(self):
        # Act
        value = evaluate(parse("x/y + 1"), {"x": Fraction(1), "y": Fraction(2)}, Mode.EXACT)

        # Assert
        self.assertEqual(value, Fraction(3, 2))

    def test_exact_transcendental_needs_special_value(self):
        self.assertEqual(evaluate(parse("exp(x)"), {"x": Fraction(0)}, Mode.EXACT), Fraction(1))
        self.assertEqual(evaluate(parse("sqrt(x)"), {"x": Fraction(9, 4)}, Mode.EXACT), Fraction(3, 2))
        with self.assertRaises(ExactnessError):
            evaluate(parse("exp(x)"), {"x": Fraction(1)}, Mode.EXACT)

    def test_float_errors(self):
        with self.assertRaises(DomainError):
            evaluate(parse("log(x)"), {"x": -1.0})
        with self.assertRaises(DivisionByZeroError):
            evaluate(parse("1/(x - 1)"), {"x": 1.0})
        with self.assertRaises(UnboundVariableError):
            evaluate(parse("x + y"), {"x": 1.0})

    def test_w_binding(self):
        self.assertAlmostEqual(evaluate(W(2) * X, {"x": 2.0, "W2": 1.5}), 3.0)


class ExprTraversalTests(unittest.TestCase):

    def test_free_symbols_and_rationality(self):
        e = parse("x*exp(y)")
        self.assertEqual(free_symbols(e), {"x", "y"})
        self.assertFalse(is_rational(e))
        self.assertTrue(is_rational(parse("x^2/(y - 1)")))
        self.assertFalse(is_rational(parse("x^0.5")))

    def test_substitute_variable(self):
        # Act
        e = substitute(parse("x^2 + y"), Variable("x"), parse("y + 1"))

        # Assert
        self.assertEqual(evaluate(e, {"y": 2.0}), 11.0)


class ExprPropertyTests(unittest.TestCase):
    # випадкові дерева глибини до 8

    TREES = 300

    def _tree(self, rng: random.Random, depth: int, leaves):
        if depth == 0 or rng.random() < 0.2:
            return rng.choice(leaves)
        kind = rng.randrange(7)
        if kind < 4:
            op = [BinaryOperator.ADD, BinaryOperator.SUB, BinaryOperator.MUL, BinaryOperator.DIV][kind]
            return BinaryOp(op, self._tree(rng, depth - 1, leaves), self._tree(rng, depth - 1, leaves))
        if kind == 4:
            return BinaryOp(BinaryOperator.POW, self._tree(rng, depth - 1, leaves), self._tree(rng, depth - 1, leaves))
        if kind == 5:
            return UnaryOp(self._tree(rng, depth - 1, leaves))
        return FunctionCall(rng.choice(list(Function)), self._tree(rng, depth - 1, leaves))

    def test_format_then_parse_round_trip(self):
        # Arrange
        rng = random.Random(5)
        leaves = [X, Y] + [NumericLiteral(Fraction(n, 4)) for n in (0, 1, 2, 6, 13)]

        for _ in range(self.TREES):
            e = self._tree(rng, 8, leaves)
            text = format_expr(e)
            with self.subTest(text=text):
                # Act + Assert
                self.assertEqual(parse(text), e)

    def test_float_and_exact_evaluation_agree(self):
        # Arrange: додатні дерева без віднімання, щоб не було скорочень
        rng = random.Random(9)
        leaves = [X, Y] + [NumericLiteral(Fraction(n, 2)) for n in (1, 2, 3, 4)]
        exact_env = {"x": Fraction(3, 2), "y": Fraction(5, 4)}
        float_env = {"x": 1.5, "y": 1.25}

        def tree(depth: int):
            if depth == 0 or rng.random() < 0.2:
                return rng.choice(leaves)
            kind = rng.randrange(4)
            if kind == 3:
                exponent = NumericLiteral(Fraction(2)) if rng.random() < 0.5 else UnaryOp(NumericLiteral(Fraction(1)))
                return BinaryOp(BinaryOperator.POW, tree(depth - 1), exponent)
            op = [BinaryOperator.ADD, BinaryOperator.MUL, BinaryOperator.DIV][kind]
            return BinaryOp(op, tree(depth - 1), tree(depth - 1))

        for _ in range(self.TREES):
            e = tree(8)
            with self.subTest(text=format_expr(e)):
                # Act
                exact = evaluate(e, exact_env, Mode.EXACT)
                approx = evaluate(e, float_env)

                # Assert
                self.assertLessEqual(abs(approx - float(exact)), 1e-12 * abs(float(exact)))

    def test_substitute_with_itself_is_identity(self):
        rng = random.Random(13)
        leaves = [X, Y, W(1), W(2), NumericLiteral(Fraction(3))]
        for _ in range(self.TREES):
            e = self._tree(rng, 8, leaves)
            for target in (X, Y, W(1)):
                with self.subTest(text=format_expr(e), target=format_expr(target)):
                    self.assertEqual(substitute(e, target, target), e)


if __name__ == "__main__":
    unittest.main()
