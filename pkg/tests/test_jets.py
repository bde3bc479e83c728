import math
import random
import unittest
from fractions import Fraction

from bll.calculus import WSymbolContext, derivative, evaluate_normal, simplify
from bll.exceptions import DomainError, PoleError, ValidationError
from bll.expr import ZERO, W, X, Y, add, const, evaluate, format_expr, mul, parse, power
from bll.jets import MAX_JET_ORDER, jet_eval


class JetTests(unittest.TestCase):

    def test_exp_of_sum_has_unit_jet(self):
        # Act
        table = jet_eval(parse("exp(x + y)"), (0.0, 0.0), 3)

        # Assert
        for (i, j), value in table.entries.items():
            with self.subTest(i=i, j=j):
                self.assertAlmostEqual(value, 1.0, places=12)

    def test_polynomial_jet_is_exact(self):
        # Arrange
        point = (Fraction(1), Fraction(2))

        # Act
        table = jet_eval(parse("x^2*y"), point, 3)

        # Assert
        self.assertEqual(table[(0, 0)], Fraction(2))
        self.assertEqual(table[(1, 0)], Fraction(4))
        self.assertEqual(table[(0, 1)], Fraction(1))
        self.assertEqual(table[(2, 0)], Fraction(4))
        self.assertEqual(table[(1, 1)], Fraction(2))
        self.assertEqual(table[(2, 1)], Fraction(2))
        self.assertEqual(table[(3, 0)], Fraction(0))

    def test_reciprocal_series(self):
        # d^k/dx^k 1/x = (-1)^k k! / x^(k+1)
        table = jet_eval(parse("1/x"), (Fraction(2), Fraction(1)), 4)
        for k in range(5):
            self.assertEqual(table[(k, 0)], Fraction((-1) ** k * math.factorial(k), 2 ** (k + 1)))

    def test_pole(self):
        with self.assertRaises(PoleError):
            jet_eval(parse("1/x"), (Fraction(0), Fraction(1)), 2)

    def test_log_outside_domain(self):
        with self.assertRaises(DomainError):
            jet_eval(parse("log(x)"), (-1.0, 0.0), 2)

    def test_w_is_rejected(self):
        with self.assertRaises(ValidationError):
            jet_eval(W(1), (1.0, 1.0), 2)


class DerivativeOracleTests(unittest.TestCase):
    # символьні похідні проти струменів

    EXPRESSIONS = [
        "x^2*y + sin(x*y)",
        "exp(x)/(1 + y^2)",
        "log(x + y)*sqrt(x)",
        "x^y",
        "cos(x - y)^3/(x + 2)",
        "(x*y - 1)/(x^2 + y^2)",
        "1/(x + y)",
        "x^3*y^2 - 4*x*y + 7",
        "(x - y)/(x + y)",
        "y/(x^2 + 1)",
        "(x^2 + y)/(x*y + 1)",
        "x*y/(1 + x + y)",
        "1/(x*y)",
        "(x + 2*y)^4/(x + 1)",
        "exp(x*y)",
        "sin(x)*cos(y)",
        "log(x*y + 1)",
        "sqrt(x + y)",
        "x^1.5*y",
        "(x^2 - y^2)/(x^2 + y^2 + 1)",
    ]
    POINTS = [(1.1 + 0.04 * k, 1.85 - 0.035 * k) for k in range(20)]
    ORDER = MAX_JET_ORDER

    def _partials(self, e):
        # d^(i+j) e / dx^i dy^j, кожен крок у нормальній формі
        ctx = WSymbolContext(ZERO)
        table = {(0, 0): simplify(e)}
        for total in range(1, self.ORDER + 1):
            for i in range(total + 1):
                j = total - i
                if i > 0:
                    table[(i, j)] = derivative(table[(i - 1, j)], "x", ctx)
                else:
                    table[(i, j)] = derivative(table[(i, j - 1)], "y", ctx)
        return table

    def test_partials_agree(self):
        for text in self.EXPRESSIONS:
            partials = self._partials(parse(text))
            for point in self.POINTS:
                with self.subTest(text=text, point=point):
                    # Act
                    table = jet_eval(parse(text), point, self.ORDER)

                    # Assert
                    env = {"x": point[0], "y": point[1]}
                    for key, expected in table.entries.items():
                        actual, scale = evaluate_normal(partials[key], env)
                        self.assertLess(abs(actual - expected), 1e-7 * (1.0 + scale + abs(expected)), key)

    def test_random_polynomials_exactly(self):
        # Arrange
        rng = random.Random(17)

        def falling(n: int, k: int) -> int:
            return math.factorial(n) // math.factorial(n - k) if k <= n else 0

        for _ in range(20):
            terms = [
                (Fraction(rng.randint(-9, 9), rng.randint(1, 5)), rng.randint(0, 4), rng.randint(0, 4))
                for _ in range(rng.randint(1, 6))
            ]
            e = ZERO
            for c, a, b in terms:
                e = add(e, mul(const(c), mul(power(X, const(a)), power(Y, const(b)))))
            point = (Fraction(rng.randint(1, 9), rng.randint(1, 4)), Fraction(rng.randint(-9, 9), rng.randint(1, 4)))

            # Act
            table = jet_eval(e, point, 5)

            # Assert
            x, y = point
            for (i, j), value in table.entries.items():
                expected = sum(
                    (c * falling(a, i) * falling(b, j) * x ** (a - i) * y ** (b - j) for c, a, b in terms if i <= a and j <= b),
                    Fraction(0),
                )
                with self.subTest(polynomial=format_expr(e), i=i, j=j):
                    self.assertEqual(value, expected)

    def test_central_differences(self):
        # Arrange
        h1, h2 = 1e-5, 1e-4
        for text in ["sin(x*y) + x^2", "exp(x - y)/(1 + x*y)", "log(x + 2*y)*sqrt(x)", "x^y"]:
            e = parse(text)

            def f(x: float, y: float) -> float:
                return evaluate(e, {"x": x, "y": y})

            for point in [(1.2, 1.7), (1.5, 1.5), (1.9, 1.1)]:
                x, y = point

                # Act
                table = jet_eval(e, point, 2)
                fx = (f(x + h1, y) - f(x - h1, y)) / (2 * h1)
                fy = (f(x, y + h1) - f(x, y - h1)) / (2 * h1)
                fxx = (f(x + h2, y) - 2 * f(x, y) + f(x - h2, y)) / h2 ** 2
                fxy = (f(x + h2, y + h2) - f(x + h2, y - h2) - f(x - h2, y + h2) + f(x - h2, y - h2)) / (4 * h2 ** 2)

                # Assert
                with self.subTest(text=text, point=point):
                    self.assertLess(abs(table[(1, 0)] - fx), 1e-7 * (1.0 + abs(fx)))
                    self.assertLess(abs(table[(0, 1)] - fy), 1e-7 * (1.0 + abs(fy)))
                    self.assertLess(abs(table[(2, 0)] - fxx), 1e-5 * (1.0 + abs(fxx)))
                    self.assertLess(abs(table[(1, 1)] - fxy), 1e-5 * (1.0 + abs(fxy)))


if __name__ == "__main__":
    unittest.main()
