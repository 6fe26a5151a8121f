import numpy as np
from django.conf import settings
from django.test import SimpleTestCase

from .conf import LabExecutor, lab_overrides, lab_setting, lab_snapshot
from .exceptions import ConfigurationError, PoleAtLattice
from .geometry import (
    half_periods, is_order_two, negate, reduce, torus_distance,
)
from .models import DualPoint, Lattice
from .special import quasi_periods, theta_basis, weierstrass
from .zeros import count_zeros, find_zeros


class LatticeModelTests(SimpleTestCase):
    """Lattice and DualPoint invariants."""

    def test_rejects_lower_half_plane(self):
        """Im(tau) must be positive."""
        with self.assertRaises(ConfigurationError):
            Lattice(1 - 0.5j)

    def test_negate_twice_is_identity(self):
        lat = Lattice(0.2 + 1.1j)
        xi = DualPoint(0.31 + 0.4j, lat)
        self.assertLess(torus_distance(negate(negate(xi)), xi), 1e-14)

    def test_order_two_points(self):
        lat = Lattice(0.2 + 1.1j)
        for h in half_periods(lat):
            self.assertTrue(is_order_two(DualPoint(h, lat)))
        self.assertFalse(is_order_two(DualPoint(0.3 + 0.2j, lat)))


class ReduceTests(SimpleTestCase):

    def setUp(self):
        self.lat = Lattice(1j)

    def test_lattice_points_reduce_to_zero(self):
        self.assertEqual(reduce(0, self.lat), 0)
        self.assertAlmostEqual(abs(reduce(1 + self.lat.tau, self.lat)), 0.0, places=14)

    def test_componentwise_mod(self):
        self.assertAlmostEqual(abs(reduce(0.3 + 2.7j, self.lat) - (0.3 + 0.7j)), 0.0, places=12)

    def test_idempotent_on_random_points(self):
        """reduce(reduce(z)) == reduce(z), including points on the boundary."""
        rng = np.random.default_rng(0)
        lat = Lattice(0.4 + 0.9j)
        z = rng.normal(size=200) * 5 + 1j * rng.normal(size=200) * 5
        z = np.concatenate([z, [1.0, lat.tau, 1 + lat.tau, 0.5 + lat.tau]])
        once = reduce(z, lat)
        self.assertTrue(np.all(reduce(once, lat) == once))
        x, y = lat.coordinates(once)
        self.assertTrue(np.all((x >= 0) & (x < 1) & (y >= 0) & (y < 1)))


class WeierstrassTests(SimpleTestCase):
    """p even, p' odd, zeta odd, zeta' = -p, quasi-periods."""

    def setUp(self):
        self.lat = Lattice(0.15 + 1.05j)
        rng = np.random.default_rng(1)
        self.points = 0.1 + 0.8 * rng.random(20) + 1j * (0.1 + 0.8 * rng.random(20))

    def test_parity(self):
        p, dp, zeta = weierstrass(self.points, self.lat)
        pm, dpm, zetam = weierstrass(-self.points, self.lat)
        np.testing.assert_allclose(pm, p, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(dpm, -dp, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(zetam, -zeta, rtol=1e-10, atol=1e-10)

    def test_zeta_quasi_period_is_constant(self):
        _, _, zeta = weierstrass(self.points, self.lat)
        _, _, shifted = weierstrass(self.points + 1, self.lat)
        diff = shifted - zeta
        np.testing.assert_allclose(diff, diff[0], atol=1e-10)
        np.testing.assert_allclose(diff[0], quasi_periods(self.lat)[0], atol=1e-10)

    def test_square_lattice_quasi_period(self):
        """For tau = i the Legendre relation and the i-symmetry force zeta(z+1) - zeta(z) = pi."""
        lat = Lattice(1j)
        _, _, zeta = weierstrass(0.3 + 0.2j, lat)
        _, _, shifted = weierstrass(1.3 + 0.2j, lat)
        self.assertAlmostEqual(abs((shifted - zeta) - np.pi), 0.0, places=10)

    def test_zeta_derivative_is_minus_p(self):
        h = 1e-5
        z = 0.37 + 0.41j
        _, _, zp = weierstrass(z + h, self.lat)
        _, _, zm = weierstrass(z - h, self.lat)
        p, _, _ = weierstrass(z, self.lat)
        self.assertLess(abs((zp - zm) / (2 * h) + p), 1e-6 * max(1.0, abs(p)))

    def test_p_is_elliptic(self):
        p, dp, _ = weierstrass(self.points, self.lat)
        p2, dp2, _ = weierstrass(self.points + self.lat.tau, self.lat)
        np.testing.assert_allclose(p2, p, rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(dp2, dp, rtol=1e-9, atol=1e-9)

    def test_laurent_limit_at_zero(self):
        for z in (1e-2, 1e-3 * (1 + 1j)):
            p, _, _ = weierstrass(z, self.lat)
            self.assertLess(abs(z ** 2 * p - 1), 10 * abs(z) ** 2)

    def test_pole_at_lattice_raises(self):
        with self.assertRaises(PoleAtLattice):
            weierstrass(1 + self.lat.tau, self.lat)


class ThetaBasisTests(SimpleTestCase):

    def setUp(self):
        self.lat = Lattice(0.1 + 1.2j)

    def test_degree_two_zero_count(self):
        basis = theta_basis(2, self.lat)
        for a in range(2):
            self.assertEqual(count_zeros(lambda z, a=a: basis.evaluate(z)[a], self.lat), 2)

    def test_degree_one_single_zero(self):
        basis = theta_basis(1, self.lat)
        self.assertEqual(len(basis), 1)
        self.assertEqual(count_zeros(lambda z: basis.evaluate(z)[0], self.lat), 1)

    def test_shared_automorphy_factor(self):
        """f(z+1) = f(z) and f(z+tau)/f(z) is the same for every element."""
        basis = theta_basis(3, self.lat)
        z = np.array([0.21 + 0.33j, 0.7 + 0.1j])
        values = basis.evaluate(z)
        np.testing.assert_allclose(basis.evaluate(z + 1), values, rtol=1e-12)
        ratios = basis.evaluate(z + self.lat.tau) / values
        np.testing.assert_allclose(ratios, np.broadcast_to(basis.automorphy_factor(z), ratios.shape), rtol=1e-10)

    def test_evaluation_matrix_well_conditioned(self):
        for n in (1, 2, 3):
            basis = theta_basis(n, self.lat)
            pts = 0.13 + 0.71 * np.arange(n) / max(n, 1) + 1j * (0.2 + 0.5 * np.arange(n) / max(n, 1))
            self.assertLess(np.linalg.cond(basis.evaluate(pts)), 1e8)

    def test_find_zeros_recovers_degree(self):
        basis = theta_basis(2, self.lat)
        zeros = find_zeros(
            lambda z: basis.evaluate(z)[0],
            lambda z: basis.derivative(z)[0],
            self.lat, 2, basis.periodic_modulus,
        )
        self.assertEqual(sum(m for _, m in zeros), 2)


class TorusDistanceTests(SimpleTestCase):

    def test_zero_and_lattice_identification(self):
        lat = Lattice(0.3 + 0.8j)
        self.assertEqual(torus_distance(0.4 + 0.2j, 0.4 + 0.2j, lat), 0.0)
        self.assertLess(torus_distance(0, 1 + lat.tau, lat), 1e-14)

    def test_square_lattice_center(self):
        lat = Lattice(1j)
        self.assertAlmostEqual(torus_distance(0, 0.5 + 0.5j, lat), np.sqrt(2) / 2, places=12)

    def test_metric_axioms_on_random_triples(self):
        lat = Lattice(0.45 + 0.7j)
        rng = np.random.default_rng(3)
        pts = rng.random((50, 3)) * 3 + 1j * rng.random((50, 3)) * 3
        for a, b, c in pts:
            ab = torus_distance(a, b, lat)
            self.assertAlmostEqual(ab, torus_distance(b, a, lat), places=12)
            self.assertLessEqual(torus_distance(a, c, lat), ab + torus_distance(b, c, lat) + 1e-12)


# ------------------------------
# SETTINGS
# ------------------------------
class LabSettingTests(SimpleTestCase):

    def test_overrides_are_scoped(self):
        default = lab_setting('KERNEL_TOL')
        with lab_overrides({'KERNEL_TOL': 1e-9, 'PUNCTURE_RADIUS': None}):
            self.assertEqual(lab_setting('KERNEL_TOL'), 1e-9)
            self.assertEqual(lab_setting('PUNCTURE_RADIUS'), 0.1)
        self.assertEqual(lab_setting('KERNEL_TOL'), default)

    def test_overrides_restored_after_error(self):
        default = lab_setting('SOLVER_SEED')
        with self.assertRaises(ZeroDivisionError):
            with lab_overrides({'SOLVER_SEED': 99}):
                1 / 0
        self.assertEqual(lab_setting('SOLVER_SEED'), default)

    def test_overrides_never_touch_the_global_settings(self):
        before = dict(settings.SPECTRAL_LAB)
        with lab_overrides({'KERNEL_TOL': 1e-9}) as active:
            self.assertEqual(settings.SPECTRAL_LAB, before)
            self.assertEqual(active['KERNEL_TOL'], 1e-9)
            self.assertEqual(lab_snapshot()['KERNEL_TOL'], 1e-9)
        self.assertEqual(settings.SPECTRAL_LAB, before)

    def test_nested_overrides_stack(self):
        with lab_overrides({'KERNEL_TOL': 1e-9}):
            with lab_overrides({'SOLVER_SEED': 11}):
                self.assertEqual(lab_setting('KERNEL_TOL'), 1e-9)
                self.assertEqual(lab_setting('SOLVER_SEED'), 11)
            self.assertNotEqual(lab_setting('SOLVER_SEED'), 11)

    def test_workers_see_the_overrides_of_their_run(self):
        with lab_overrides({'KERNEL_TOL': 1e-9}):
            with LabExecutor(max_workers=4) as pool:
                seen = list(pool.map(lambda _: lab_setting('KERNEL_TOL'), range(8)))
        self.assertEqual(seen, [1e-9] * 8)

    def test_concurrent_runs_keep_their_own_overrides(self):
        def run(value):
            with lab_overrides({'KERNEL_TOL': value}):
                with LabExecutor(max_workers=2) as pool:
                    return list(pool.map(lambda _: lab_setting('KERNEL_TOL'), range(4)))

        with LabExecutor(max_workers=2) as outer:
            first, second = outer.map(run, [1e-9, 1e-7])
        self.assertEqual(first, [1e-9] * 4)
        self.assertEqual(second, [1e-7] * 4)
