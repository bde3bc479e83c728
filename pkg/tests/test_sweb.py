import os
import random
import time
import unittest
from dataclasses import replace
from fractions import Fraction

from bll import sweb
from bll.calculus import evaluate_at, is_zero, normal_form, sample_points
from bll.exceptions import (
    DegenerateWebError,
    EvaluationError,
    MixedBranchError,
    RepeatedDirectionError,
    WOrderOverflowError,
)
from bll.expr import ONE, ZERO, W, as_number, const, format_expr, mul, neg, parse, sub, substitute
from bll.jets import jet_eval
from bll.models import (
    Branch,
    Domain,
    FormQuadruple,
    Mode,
    SamplePlan,
    SolutionAnsatz,
    SPrimeRelation,
)


def _domain(x0, x1, y0, y1) -> Domain:
    return Domain(Fraction(x0), Fraction(x1), Fraction(y0), Fraction(y1))


def _same(first, second, plan: SamplePlan) -> bool:
    return is_zero(sub(first, second), plan).is_zero


class WebConstructionTests(unittest.TestCase):

    def test_build_web_validates_frame(self):
        with self.assertRaises(DegenerateWebError):
            sweb.build_web(parse("x^2"), parse("2"))
        with self.assertRaises(DegenerateWebError):
            sweb.build_web(parse("x + y"), parse("1"))
        with self.assertRaises(DegenerateWebError):
            sweb.build_web(parse("x + y"), parse("x - 1.5"))

    def test_build_web_checks_log_arguments(self):
        with self.assertRaises(DegenerateWebError):
            sweb.build_web(parse("x + log(y - 1.5)"), parse("2"))

    def test_excluded_loci_are_recorded(self):
        # Act
        spec = sweb.build_web(parse("x*y"), parse("x + y"))

        # Assert
        self.assertEqual(len(spec.plan.exclusions), 4)
        self.assertEqual(spec.plan.domain, spec.domain)

    def test_from_generating_function(self):
        # Arrange
        cases = [
            ("x^2/2 + x*y + y^2", "x + y", "2"),
            ("x^3/6 + x*y + y^3/6", "x^2/2 + y", "x*y"),
        ]

        for phi, f, b in cases:
            with self.subTest(phi=phi):
                # Act
                spec = sweb.from_generating_function(parse(phi), _domain("1.2", 2, "1.2", 2))

                # Assert
                self.assertTrue(_same(spec.f, parse(f), spec.plan))
                self.assertTrue(_same(spec.b, parse(b), spec.plan))
                self.assertIsNotNone(spec.phi)

    def test_generating_function_without_mixed_term(self):
        with self.assertRaises(DegenerateWebError):
            sweb.from_generating_function(parse("x^2/2 + y^2"))

    def test_compute_H(self):
        self.assertEqual(sweb.compute_H(sweb.build_web(parse("x + y"), parse("2"))), ZERO)

        spec = sweb.build_web(parse("x*y"), parse("2"))
        self.assertTrue(_same(sweb.compute_H(spec), parse("1/(x*y)"), spec.plan))

        spec = sweb.build_web(parse("exp(x + y)"), parse("2"), _domain(0, 1, 0, 1))
        self.assertAlmostEqual(float(evaluate_at(sweb.compute_H(spec), (0.25, 0.5))), 2.718281828459045 ** -0.75)


class SConditionTests(unittest.TestCase):

    def test_normalized_quadruple_is_s_web_with_proof(self):
        # Arrange
        spec = sweb.build_web(parse("x*y + x"), parse("x/y + 2"), mode=Mode.EXACT)

        # Act
        verdict = sweb.verify_s_condition(sweb.normalized_forms(spec), spec.plan)

        # Assert
        self.assertTrue(verdict.is_zero)
        self.assertTrue(verdict.proof)

    def test_coordinate_web_forms(self):
        forms = sweb.generating_forms(parse("x^3/6 + x*y + y^3/6"))
        self.assertTrue(sweb.verify_s_condition(forms, SamplePlan()).is_zero)

    def test_scaled_fourth_form_breaks_condition(self):
        # Arrange: ω4 = 2 f_x dx + b f_y dy
        spec = sweb.build_web(parse("x + y"), parse("x + y"))
        omega = sweb.normalized_forms(spec).forms
        forms = FormQuadruple(omega[:3] + ((const(Fraction(2)), omega[3][1]),))

        # Act
        verdict = sweb.verify_s_condition(forms, spec.plan)

        # Assert
        self.assertTrue(verdict.is_nonzero)

    def test_vanishing_form_is_degenerate(self):
        forms = FormQuadruple(((ONE, ZERO), (ZERO, ONE), (ONE, ONE), (ZERO, ZERO)))
        with self.assertRaises(DegenerateWebError):
            sweb.verify_s_condition(forms, SamplePlan())


class CrossRatioTests(unittest.TestCase):

    def test_slopes_with_infinity(self):
        # slopes (0, ∞, 1, 2)
        covectors = [(Fraction(1), Fraction(0)), (Fraction(0), Fraction(1)), (Fraction(1), Fraction(1)), (Fraction(1), Fraction(2))]
        self.assertEqual(sweb.cross_ratio(covectors), Fraction(1, 2))

    def test_repeated_direction(self):
        covectors = [(1.0, 0.0), (2.0, 0.0), (1.0, 1.0), (1.0, 2.0)]
        with self.assertRaises(RepeatedDirectionError):
            sweb.cross_ratio(covectors)

    def test_normalized_quadruple_gives_inverse_invariant(self):
        # Arrange
        spec = sweb.build_web(parse("x + y"), parse("x + y"), mode=Mode.EXACT)
        forms = sweb.normalized_forms(spec)
        point = (Fraction(3, 2), Fraction(5, 4))

        # Act
        value = sweb.cross_ratio_at(forms, point, Mode.EXACT)

        # Assert
        self.assertEqual(value, Fraction(4, 11))

    def test_cross_ratio_law_on_sample_points(self):
        # Arrange: 10 випадкових тканин по 100 точок
        rng = random.Random(41)
        for _ in range(10):
            a, c, d = rng.randint(1, 4), rng.randint(1, 4), rng.randint(0, 3)
            p, q = rng.randint(2, 5), rng.randint(0, 3)
            f, b = f"{a}*x + {c}*y + {d}*x*y", f"{p} + {q}*x*y"
            spec = sweb.build_web(parse(f), parse(b), plan=SamplePlan(samples=100))
            forms = sweb.normalized_forms(spec)
            points = sample_points(spec.plan)
            self.assertEqual(len(points), 100)
            for point in points:
                with self.subTest(f=f, b=b, point=point):
                    # Act
                    point = (float(point[0]), float(point[1]))
                    value = sweb.cross_ratio_at(forms, point)

                    # Assert
                    expected = 1.0 / float(evaluate_at(spec.b, point))
                    self.assertLess(abs(value - expected), 1e-9)

    def test_cross_ratio_law_with_transcendental_web(self):
        spec = sweb.build_web(parse("exp(x) + y"), parse("x/y + 2"))
        forms = sweb.normalized_forms(spec)
        for point in sample_points(spec.plan):
            point = (float(point[0]), float(point[1]))
            self.assertLess(abs(sweb.cross_ratio_at(forms, point) - 1.0 / float(evaluate_at(spec.b, point))), 1e-9)


class SPrimeRelationTests(unittest.TestCase):

    def test_constant_invariant(self):
        # Act
        spec = sweb.build_web(parse("x + y"), parse("2"))
        rel = sweb.derive_sprime_relation(spec)

        # Assert
        self.assertEqual(as_number(rel.P), 2)
        self.assertTrue(_same(rel.Q, neg(W(1)), spec.plan))
        self.assertFalse(rel.from_generating_function)

    def test_linear_invariant(self):
        spec = sweb.build_web(parse("x + y"), parse("x + y"))
        rel = sweb.derive_sprime_relation(spec)
        self.assertTrue(_same(rel.P, parse("x + y"), spec.plan))
        self.assertTrue(_same(rel.Q, sub(neg(ONE), mul(parse("x + y - 1"), W(1))), spec.plan))

    def test_coordinate_web_has_no_free_term(self):
        for phi in ["x^3/6 + x*y + y^3/6", "x*y + x^2*y^2/4 + y^3/6", "x^2/2 + x*y + y^2"]:
            with self.subTest(phi=phi):
                # Arrange
                spec = sweb.from_generating_function(parse(phi), _domain("1.2", 2, "1.2", 2))

                # Act
                rel = sweb.derive_sprime_relation(spec)

                # Assert
                self.assertTrue(rel.from_generating_function)
                self.assertTrue(normal_form(substitute(rel.Q, W(1), ZERO)).is_zero)

    def test_compute_delta(self):
        self.assertEqual(sweb.compute_delta(SPrimeRelation(P=const(Fraction(2)), Q=ZERO)), ZERO)
        self.assertEqual(sweb.compute_delta(SPrimeRelation(P=parse("x + y"), Q=ZERO)), ONE)
        self.assertEqual(sweb.compute_delta(SPrimeRelation(P=parse("x*y"), Q=ZERO)), ZERO)


class BranchTests(unittest.TestCase):

    def test_constant_pivot_is_singular(self):
        # Arrange
        spec = sweb.build_web(parse("x + y"), parse("2"))
        rel = sweb.derive_sprime_relation(spec)

        # Act
        verdict = sweb.classify_branch(spec, rel)

        # Assert
        self.assertIs(verdict.branch, Branch.SINGULAR)
        self.assertEqual(as_number(verdict.p1), 2)
        self.assertEqual(as_number(verdict.p2), 1)

    def test_generic_branch(self):
        spec = sweb.build_web(parse("x + y"), parse("x + y"))
        verdict = sweb.classify_branch(spec, sweb.derive_sprime_relation(spec))
        self.assertIs(verdict.branch, Branch.GENERIC)
        self.assertEqual(verdict.delta, ONE)

    def test_mixed_branch(self):
        # Δ = 4xy змінює знак усередині [-1,1]^2
        spec = sweb.build_web(parse("x + y"), parse("2 + x^2 + y^2"), _domain(-1, 1, -1, 1))
        verdict = sweb.classify_branch(spec, sweb.derive_sprime_relation(spec))
        self.assertIs(verdict.branch, Branch.MIXED)
        self.assertIsNotNone(verdict.delta_verdict.witness)
        with self.assertRaises(MixedBranchError):
            sweb.compute_rank(spec)

    def test_singular_factors_reproduce_pivot(self):
        spec = sweb.from_generating_function(parse("x^3/6 + x*y + y^3/6"), _domain("1.2", 2, "1.2", 2))
        rel = sweb.derive_sprime_relation(spec)
        verdict = sweb.classify_branch(spec, rel)
        self.assertIs(verdict.branch, Branch.SINGULAR)
        self.assertTrue(normal_form(sub(rel.P, verdict.p1 * verdict.p2)).is_zero)


class RankFixtureTests(unittest.TestCase):

    def test_constant_invariant_is_maximal(self):
        # Arrange
        spec = sweb.build_web(parse("x + y"), parse("2"))

        # Act
        report = sweb.compute_rank(spec)

        # Assert
        self.assertIs(report.branch, Branch.SINGULAR)
        row = report.system.base_rows[0]
        self.assertEqual([as_number(c) for c in row.coefficients], [0, 0, 1])
        self.assertEqual(as_number(row.constant), 0)
        self.assertEqual(report.dim_w, 3)
        self.assertEqual(report.rank, 6)
        self.assertTrue(report.solvable)
        self.assertTrue(report.maximal)
        self.assertEqual(sweb.check_maximal(spec)[0], True)

    def test_constant_invariant_exact_mode(self):
        spec = sweb.build_web(parse("x + y"), parse("2"), mode=Mode.EXACT)
        report = sweb.compute_rank(spec)
        self.assertEqual(report.rank, 6)
        self.assertTrue(report.delta_verdict.proof)

    def test_linear_invariant_generic_rows(self):
        # Arrange
        spec = sweb.build_web(parse("x + y"), parse("x + y"), _domain("1.5", 3, "1.5", 3))
        rel = sweb.derive_sprime_relation(spec)

        # Act
        system = sweb.derive_generic_system(spec, rel)
        k = system.monic_coefficients(0)
        l = system.monic_coefficients(1)

        # Assert
        self.assertEqual(format_expr(k[3]), "3/(x + y - 1)")
        self.assertEqual([as_number(c) for c in k[:3]], [0, 0, 0])
        self.assertTrue(_same(l[3], parse("(4*(x + y) - 1)/((x + y)*(x + y - 1))"), spec.plan))
        self.assertTrue(_same(l[2], parse("2/((x + y)*(x + y - 1))"), spec.plan))
        self.assertEqual([as_number(c) for c in l[:2]], [0, 0])

    def test_linear_invariant_rank(self):
        # Arrange
        spec = sweb.build_web(parse("x + y"), parse("x + y"), _domain("1.5", 3, "1.5", 3))

        # Act
        report = sweb.compute_rank(spec)
        maximal, conditions = sweb.check_maximal(spec)

        # Assert
        self.assertIs(report.branch, Branch.GENERIC)
        self.assertEqual(report.dim_w, 3)
        self.assertEqual(report.rank, 5)
        self.assertFalse(report.maximal)
        self.assertFalse(maximal)
        by_name = {c.name: c.verdict for c in conditions}
        self.assertTrue(by_name["K3=L3"].is_nonzero)
        self.assertTrue(by_name["K2=L2"].is_nonzero)
        self.assertTrue(by_name["delta(K3)=0"].is_zero)

    def test_coordinate_web_rank(self):
        # Arrange
        spec = sweb.from_generating_function(parse("x^3/6 + x*y + y^3/6"), _domain("1.2", 2, "1.2", 2))

        # Act
        report = sweb.compute_rank(spec)

        # Assert
        self.assertIs(report.branch, Branch.SINGULAR)
        self.assertTrue(report.solvable)
        self.assertEqual(report.dim_w, 2)
        self.assertEqual(report.rank, 5)
        self.assertFalse(report.maximal)
        alpha = report.system.monic_coefficients(0)[2]
        self.assertTrue(_same(alpha, parse("(y^2 + x)/(x*y*(x*y - 1))"), spec.plan))
        self.assertFalse(sweb.check_maximal(spec)[0])

    def test_raw_conditions_vanish_for_trivial_solution(self):
        # Arrange
        spec = sweb.from_generating_function(parse("x^3/6 + x*y + y^3/6"), _domain("1.2", 2, "1.2", 2))
        rel = sweb.derive_sprime_relation(spec)
        branch = sweb.classify_branch(spec, rel)

        # Act
        system = sweb.derive_singular_system(spec, rel, branch.p1, branch.p2)
        condition = system.raw_conditions[0]
        for k in (1, 2, 3):
            condition = substitute(condition, W(k), ZERO)

        # Assert
        self.assertTrue(normal_form(condition).is_zero)

    def test_jets_reproduce_generic_conditions(self):
        # Arrange: w(t) = t^5/20 на тканині f = b = x + y
        spec = sweb.build_web(parse("x + y"), parse("x + y"), _domain("1.5", 3, "1.5", 3))
        rel = sweb.derive_sprime_relation(spec)
        system = sweb.derive_generic_system(spec, rel)
        j1, j2 = system.raw_conditions
        q_w = substitute(rel.Q, W(1), parse("(x + y)^4/4"))
        plan = replace(spec.plan, samples=20)

        for point in sample_points(plan):
            point = (float(point[0]), float(point[1]))
            t = point[0] + point[1]
            w_values = {"W1": t ** 4 / 4, "W2": t ** 3, "W3": 3 * t ** 2, "W4": 6 * t}
            P = jet_eval(rel.P, point, 3)
            Q = jet_eval(q_w, point, 4)

            # Act
            numerator = P[(0, 1)] * Q[(1, 0)] - P[(0, 0)] * Q[(1, 1)]
            delta = P[(1, 0)] * P[(0, 1)] - P[(0, 0)] * P[(1, 1)]
            numerator_y = P[(0, 2)] * Q[(1, 0)] - P[(0, 0)] * Q[(1, 2)]
            numerator_x = P[(1, 1)] * Q[(1, 0)] + P[(0, 1)] * Q[(2, 0)] - P[(1, 0)] * Q[(1, 1)] - P[(0, 0)] * Q[(2, 1)]
            delta_y = P[(1, 0)] * P[(0, 2)] - P[(0, 0)] * P[(1, 2)]
            delta_x = P[(2, 0)] * P[(0, 1)] - P[(0, 0)] * P[(2, 1)]
            e2 = (P[(1, 0)] * Q[(1, 1)] - P[(1, 1)] * Q[(1, 0)]) / delta
            expected_j1 = (numerator_y * delta - numerator * delta_y) / delta ** 2
            expected_j2 = e2 - (numerator_x * delta - numerator * delta_x) / delta ** 2

            # Assert
            with self.subTest(point=point):
                actual_j1 = float(evaluate_at(j1, point, Mode.FLOAT, w_values))
                actual_j2 = float(evaluate_at(j2, point, Mode.FLOAT, w_values))
                self.assertLess(abs(actual_j1 - expected_j1), 1e-8 * (1.0 + abs(expected_j1)))
                self.assertLess(abs(actual_j2 - expected_j2), 1e-8 * (1.0 + abs(expected_j2)))


class SamuelsonAnsatzTests(unittest.TestCase):

    def setUp(self):
        # w(t) = t^2, s1 = -x^2/2, s2 = -y^2 розв'язують систему для f = x + y, b = 2
        self.spec = sweb.build_web(parse("x + y"), parse("2"))
        self.ansatz = SolutionAnsatz(
            s1=parse("-x^2/2"),
            s2=parse("-y^2"),
            w_of_f=parse("(x + y)^2"),
        )

    def test_residuals_vanish_for_solution(self):
        for residual in sweb.samuelson_residuals(self.spec, self.ansatz):
            self.assertTrue(is_zero(residual, self.spec.plan).is_zero)

    def test_wrong_ansatz_breaks_last_equation(self):
        # Arrange
        ansatz = replace(self.ansatz, w_of_f=parse("(x + y)^3"))

        # Act
        residuals = sweb.samuelson_residuals(self.spec, ansatz)

        # Assert
        self.assertTrue(all(is_zero(r, self.spec.plan).is_zero for r in residuals[:3]))
        self.assertTrue(is_zero(residuals[3], self.spec.plan).is_nonzero)

    def test_scaled_forms_are_closed(self):
        # Arrange
        plan = replace(self.spec.plan, samples=100)

        # Act
        defects = sweb.closedness_defects(sweb.scaled_forms(self.spec, self.ansatz))

        # Assert
        for defect in defects:
            self.assertTrue(is_zero(defect, plan).is_zero)


class FuzzTests(unittest.TestCase):
    # пари випадкових тканин і ліміт часу: SWEB_FUZZ_WEBS, SWEB_FUZZ_SECONDS

    WEBS = int(os.environ.get("SWEB_FUZZ_WEBS", "100"))
    SECONDS = float(os.environ.get("SWEB_FUZZ_SECONDS", "120"))
    EXACT_WEBS = 50

    def _random_webs(self, rng: random.Random):
        for _ in range(self.WEBS):
            a, c, d = rng.randint(1, 3), rng.randint(1, 3), rng.randint(0, 2)
            p, q, r = rng.randint(2, 4), rng.randint(0, 2), rng.randint(0, 2)
            yield "web", f"{a}*x + {c}*y + {d}*x*y", f"{p} + {q}*x^2 + {r}*y"
            yield "phi", f"{a}*x^3 + x*y + {c}*y^3 + {d}*x^2*y", None

    def test_rank_bound_and_maximality(self):
        rng = random.Random(2024)
        elapsed = 0.0
        analysed = 0
        for kind, first, second in self._random_webs(rng):
            with self.subTest(kind=kind, first=first, second=second):
                started = time.perf_counter()
                try:
                    if kind == "web":
                        spec = sweb.build_web(parse(first), parse(second))
                    else:
                        spec = sweb.from_generating_function(parse(first))
                    report = sweb.compute_rank(spec)
                except (DegenerateWebError, EvaluationError, WOrderOverflowError):
                    continue
                finally:
                    elapsed += time.perf_counter() - started
                analysed += 1
                if report.inconclusive:
                    continue
                maximal, _ = sweb.check_maximal(spec)
                self.assertLessEqual(report.rank, 6)
                self.assertEqual(maximal, report.rank == 6)
                if report.solvable:
                    self.assertEqual(report.rank, report.base_dim + report.dim_w)
                if kind == "phi":
                    self.assertTrue(report.solvable)

        self.assertTrue(analysed)
        self.assertLess(elapsed, self.SECONDS)

    def test_s_condition_identity_exact(self):
        rng = random.Random(7)
        for _ in range(self.EXACT_WEBS):
            f = f"{rng.randint(1, 4)}*x^2 + {rng.randint(1, 4)}*y + x*y"
            b = f"{rng.randint(2, 5)} + x/y"
            with self.subTest(f=f, b=b):
                spec = sweb.build_web(parse(f), parse(b), mode=Mode.EXACT)
                verdict = sweb.verify_s_condition(sweb.normalized_forms(spec), spec.plan)
                self.assertTrue(verdict.is_zero and verdict.proof)


if __name__ == "__main__":
    unittest.main()
