from unittest.mock import patch

import numpy as np
from django.test import SimpleTestCase

from torus.geometry import torus_distance
from torus.models import Lattice

from .branching import (
    branch_points, branch_table, discriminant, genus_cross_check, genus_estimate,
    is_smooth, xi_branch_points,
)
from .exceptions import (
    AsymptoticStateOrderTwo, ConfigurationError, CountMismatch, NearPuncture,
)
from .factories import MODEL_FAMILIES, builtin_k1, check_evenness, get_factory
from .models import BuiltinK1, CurveModel
from .serializers import model_from_json, model_to_json
from .sheets import (
    asymptotic_state, eval_F, fiber_pair, sheets_over_w, sheets_over_xi,
)

XI0 = 0.25 + 0.1j


# ------------------------------
# BUILTIN K = 1 FAMILY
# ------------------------------
class BuiltinK1Tests(SimpleTestCase):

    def setUp(self):
        self.model, self.builtin = builtin_k1(a=0.7 + 0.2j, b=0.3 - 0.1j, xi0=XI0, tau=1j)
        self.points = np.array([0.61 + 0.37j, 0.12 + 0.81j, 0.44 + 0.55j])

    def test_phi_is_elliptic(self):
        """phi(xi + 1) = phi(xi + tau) = phi(xi)."""
        phi = self.builtin.phi(self.points)
        np.testing.assert_allclose(self.builtin.phi(self.points + 1), phi, atol=1e-10)
        np.testing.assert_allclose(self.builtin.phi(self.points + 1j), phi, atol=1e-10)

    def test_phi_is_even(self):
        """zeta is odd, so the zeta difference is even."""
        np.testing.assert_allclose(self.builtin.phi(-self.points), self.builtin.phi(self.points), atol=1e-10)

    def test_phi_has_pole_at_xi0(self):
        """|w| grows like |a| / |xi - xi0| on approach."""
        for eps in (1e-3, 1e-4):
            value = self.builtin.phi(XI0 + eps)
            self.assertAlmostEqual(abs(value) * eps, abs(self.builtin.a), delta=0.05 * abs(self.builtin.a))

    def test_curve_model_vanishes_on_graph(self):
        """F(xi, phi(xi)) = 0 for the converted model."""
        for xi in self.points:
            scale = np.abs(self.model.thetas(xi)).max() * (1 + abs(self.builtin.phi(xi)))
            self.assertLess(abs(eval_F(self.model, xi, self.builtin.phi(xi))), 1e-9 * scale)

    def test_sheets_over_xi_is_phi(self):
        for xi in self.points:
            sheets = sheets_over_xi(self.model, xi)
            self.assertEqual(len(sheets), 1)
            self.assertAlmostEqual(abs(sheets[0] - self.builtin.phi(xi)), 0.0, places=8)

    def test_order_two_asymptotic_state_rejected(self):
        with self.assertRaises(AsymptoticStateOrderTwo):
            BuiltinK1(a=1, b=0, xi0=0.5, lat=Lattice(1j))
        with self.assertRaises(AsymptoticStateOrderTwo):
            builtin_k1(xi0=0.5 + 0.5j)


# ------------------------------
# CURVE MODEL INVARIANTS
# ------------------------------
class CurveModelTests(SimpleTestCase):

    def setUp(self):
        self.model = get_factory('generic').create_model(k=2, tau=0.1 + 1.1j, xi0=XI0, seed=3)

    def test_leading_coefficient_vanishes_at_punctures(self):
        for p in self.model.punctures:
            self.assertLess(abs(self.model.thetas(p)[-1]), 1e-10)

    def test_evenness_ratio_is_constant(self):
        """F(-xi, w) / F(xi, w) does not depend on xi."""
        self.assertAlmostEqual(abs(check_evenness(self.model) - 1.0), 0.0, places=8)

    def test_sheets_symmetric_under_negation(self):
        xi = 0.63 + 0.44j
        a = np.array(sheets_over_xi(self.model, xi))
        b = np.array(sheets_over_xi(self.model, -xi))
        np.testing.assert_allclose(np.sort_complex(a), np.sort_complex(b), atol=1e-8)

    def test_eval_F_array_xi_scalar_w(self):
        xi = np.array([0.61 + 0.37j, 0.12 + 0.81j, 0.44 + 0.55j])
        w = 0.3 - 0.8j
        values = eval_F(self.model, xi, w)
        self.assertEqual(values.shape, (3,))
        for x, value in zip(xi, values):
            self.assertAlmostEqual(abs(value - eval_F(self.model, complex(x), w)), 0.0, places=10)

    def test_eval_F_scalar_xi_array_w(self):
        """A w array as long as the degree axis must not be mistaken for it."""
        xi = 0.61 + 0.37j
        w = np.array([0.5, 1.5j, -2.0])
        thetas = self.model.thetas(xi)
        values = eval_F(self.model, xi, w)
        self.assertEqual(values.shape, (3,))
        for one, value in zip(w, values):
            expected = sum(thetas[j] * one ** j for j in range(self.model.k + 1))
            self.assertAlmostEqual(abs(value - expected), 0.0, places=10)

    def test_eval_F_grid_shapes(self):
        xi = np.full((2, 1), 0.61 + 0.37j)
        w = np.array([[0.5, 1.5j, -2.0, 0.1]])
        self.assertEqual(eval_F(self.model, xi, w).shape, (2, 4))

    def test_w_degree_at_random_points(self):
        rng = np.random.default_rng(5)
        for x, y in rng.random((20, 2)):
            xi = self.model.lat.point(x, y)
            try:
                sheets = sheets_over_xi(self.model, complex(xi))
            except NearPuncture:
                continue
            self.assertEqual(len(sheets), self.model.k)

    def test_near_puncture_raises(self):
        with self.assertRaises(NearPuncture):
            sheets_over_xi(self.model, XI0 + 0.05)
        with self.assertRaises(NearPuncture):
            sheets_over_xi(self.model, -XI0 + 1 + 0.02j)

    def test_bad_coefficient_shape(self):
        with self.assertRaises(ConfigurationError):
            CurveModel(k=2, lat=Lattice(1j), xi0=XI0, coeffs=np.ones((2, 2)))

    def test_unknown_family(self):
        with self.assertRaises(ConfigurationError):
            get_factory('hyperbolic')

    def test_explicit_rows_must_vanish_at_xi0(self):
        rows = np.array([[1.0, 0.5], [1.0, 1.0]], dtype=complex)
        with self.assertRaises(ConfigurationError):
            get_factory('explicit').create_model(1, 1j, XI0, rows=rows)


# ------------------------------
# SHEETS OVER W
# ------------------------------
class SheetsOverWTests(SimpleTestCase):

    def setUp(self):
        self.model, self.builtin = builtin_k1(a=1.0, b=0.2, xi0=XI0, tau=1j)

    def test_oracle_consistency(self):
        """w = phi(xi) puts xi (or -xi) among the zeros of F(., w)."""
        for xi in (0.62 + 0.31j, 0.4 + 0.72j):
            w = self.builtin.phi(xi)
            roots = [p.xi for p in sheets_over_w(self.model, w)]
            best = min(torus_distance(r, s * xi, self.model.lat) for r in roots for s in (1, -1))
            self.assertLess(best, 1e-8)

    def test_roots_sum_to_lattice_point(self):
        roots = sheets_over_w(self.model, 0.8 - 1.3j)
        self.assertLess(torus_distance(roots[0].xi + roots[1].xi, 0.0, self.model.lat), 1e-8)

    def test_warm_start_agrees_with_grid_search(self):
        w = 0.5 + 0.9j
        cold = fiber_pair(self.model, w)
        warm = fiber_pair(self.model, w, guess=cold[0] + 1e-3)
        self.assertLess(
            min(torus_distance(warm[0], cold[0], self.model.lat), torus_distance(warm[0], cold[1], self.model.lat)),
            1e-8,
        )

    def test_asymptotic_state_is_xi0(self):
        eta, minus_eta = asymptotic_state(self.model)
        self.assertLess(torus_distance(eta, XI0, self.model.lat), 1e-4)
        self.assertLess(torus_distance(minus_eta, -XI0, self.model.lat), 1e-4)

    def test_double_root_at_branch_value(self):
        w_b = branch_points(self.model)[0]
        roots = sheets_over_w(self.model, w_b)
        self.assertLess(torus_distance(roots[0], roots[1]), 1e-5)


# ------------------------------
# BRANCH POINTS AND GENUS
# ------------------------------
class BranchPointTests(SimpleTestCase):

    def test_builtin_has_four_branch_points(self):
        model, _ = builtin_k1(a=0.9 + 0.3j, b=0.1, xi0=XI0)
        self.assertEqual(len(branch_points(model)), 4)
        self.assertEqual(genus_estimate(model), 1)
        self.assertTrue(is_smooth(model))

    def test_builtin_branch_values_are_phi_at_half_periods(self):
        model, builtin = builtin_k1(a=0.9 + 0.3j, b=0.1, xi0=XI0)
        for row in branch_table(model):
            self.assertAlmostEqual(abs(row['w'] - builtin.phi(row['xi'])), 0.0, places=6)
            self.assertEqual(row['winding'], 2)

    def test_generic_k2_has_eight(self):
        model = MODEL_FAMILIES['generic'].create_model(k=2, tau=1j, xi0=XI0, seed=1)
        self.assertEqual(len(branch_points(model)), 8)
        self.assertEqual(genus_estimate(model), 3)

    def test_colliding_model_is_not_smooth(self):
        model = MODEL_FAMILIES['colliding'].create_model(k=2, tau=1j, xi0=XI0, seed=2)
        self.assertFalse(is_smooth(model))
        with self.assertRaises(CountMismatch):
            genus_estimate(model)

    @patch('curve_model.branching.branch_table')
    def test_colliding_values_raise_even_when_simple(self, mock_table):
        rows = [{'w': w, 'xi': 0.5, 'simple': True, 'winding': 2} for w in (1.0, 1.0 + 1e-13, 2.0, 3.0)]
        mock_table.return_value = rows
        model, _ = builtin_k1(a=0.9 + 0.3j, b=0.1, xi0=XI0)
        with self.assertRaisesRegex(CountMismatch, 'collide'):
            branch_points(model)

    @patch('curve_model.branching.branch_table')
    def test_distinct_simple_values_pass(self, mock_table):
        rows = [{'w': w, 'xi': 0.5, 'simple': True, 'winding': 2} for w in (1.0, 2.0, 3.0, 4.0j)]
        mock_table.return_value = rows
        model, _ = builtin_k1(a=0.9 + 0.3j, b=0.1, xi0=XI0)
        self.assertEqual(len(branch_points(model)), 4)

    def test_constant_sheet_map_is_not_smooth(self):
        """a = 0 makes every branch value equal to b."""
        model, _ = builtin_k1(a=0.0, b=0.5, xi0=XI0)
        self.assertFalse(is_smooth(model))


class DiscriminantTests(SimpleTestCase):

    def test_quadratic_discriminant(self):
        coeffs = np.array([2.0, -3.0, 1.0 + 1j])
        self.assertAlmostEqual(abs(discriminant(coeffs) - (9 - 8 * (1 + 1j))), 0.0, places=12)

    def test_cubic_discriminant_vanishes_on_double_root(self):
        # (w - 1)^2 (w + 2) = w^3 - 3w + 2
        self.assertAlmostEqual(abs(discriminant(np.array([2.0, -3.0, 0.0, 1.0]))), 0.0, places=10)

    def test_k1_cover_is_unbranched(self):
        model, _ = builtin_k1()
        self.assertEqual(xi_branch_points(model), [])

    def test_k2_cover_genus_cross_check(self):
        """4k - 4 branch points over the dual torus give the same genus 2k - 1."""
        model = MODEL_FAMILIES['generic'].create_model(k=2, tau=1j, xi0=XI0, seed=1)
        self.assertEqual(len(xi_branch_points(model)), 4)
        self.assertEqual(genus_cross_check(model), (3, 3))


class SerializerTests(SimpleTestCase):

    def test_json_round_trip_keeps_coefficients(self):
        model = MODEL_FAMILIES['generic'].create_model(k=2, tau=0.2 + 1j, xi0=XI0, seed=4)
        again = model_from_json(model_to_json(model))
        np.testing.assert_allclose(again.coeffs, model.coeffs, atol=1e-14)
        self.assertEqual(again.family, 'generic')

    def test_builtin_from_parameters(self):
        model = model_from_json({'k': 1, 'tau': [0, 1], 'xi0': [0.25, 0.1], 'family': 'builtin_k1',
                                 'a': [1, 0], 'b': [0.2, 0]})
        self.assertEqual(model.family, 'builtin_k1')
        self.assertEqual(model.k, 1)

    def test_bad_pair_rejected(self):
        with self.assertRaises(ConfigurationError):
            model_from_json({'k': 1, 'tau': [0, 1], 'xi0': 'origin'})

