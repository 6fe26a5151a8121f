import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, override_settings

from curve_model.factories import builtin_k1
from torus.geometry import pairing_constant, reduce, torus_distance
from torus.models import Lattice

from .exceptions import BranchTooClose, FrameCorrelationLoss, NotOnCurve, RankAmbiguity
from .models import CloudPoint, CurveCloud, FlatPair, FourierConnection, LineFrame, is_regular_fiber
from .operators import (
    assemble_fiber, flat_singular_values, kernel_frame, min_singulars, shift_frame, sigma_min, summand_frame,
)
from .scan import _step_shifts, gamma_holonomy, refine_sheet, scan_instanton_curve, staggered_grid
from .writers import read_cloud_csv, write_cloud_csv, write_cloud_json

XI0 = 0.25 + 0.1j


def random_unitary(seed):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


# ------------------------------
# FIBER OPERATOR ASSEMBLY
# ------------------------------
class AssembleFiberTests(SimpleTestCase):

    def setUp(self):
        self.lat = Lattice(1j)

    def test_trivial_pair_untwisted_has_two_dimensional_kernel(self):
        op = assemble_fiber(FlatPair(0, self.lat), 0, 3)
        values = min_singulars(op, 3)
        self.assertLess(values[1], 1e-12)
        self.assertAlmostEqual(values[2], pairing_constant(self.lat), places=10)

    def test_twist_minus_eta_has_kernel(self):
        op = assemble_fiber(FlatPair(0.31 + 0.22j, self.lat), -(0.31 + 0.22j), 4)
        self.assertLess(min_singulars(op, 1)[0], 1e-12)

    def test_generic_twist_is_bounded_below(self):
        """sigma_min > 0.1 * distance from xi to +-eta + lattice."""
        pair = FlatPair(0.31 + 0.22j, self.lat)
        for xi in (0.1 + 0.7j, 0.55 + 0.45j, 0.9 + 0.05j):
            distance = min(torus_distance(xi, pair.eta, self.lat), torus_distance(xi, -pair.eta, self.lat))
            self.assertGreater(min_singulars(assemble_fiber(pair, xi, 4), 1)[0], 0.1 * distance)

    def test_spectrum_matches_closed_form(self):
        lat = Lattice(0.2 + 1.1j)
        pair = FlatPair(0.13 + 0.4j, lat)
        xi = 0.37 - 0.21j
        op = assemble_fiber(pair, xi, 4)
        values = min_singulars(op, op.size)
        np.testing.assert_allclose(values, flat_singular_values(pair, xi, 4), atol=1e-10)

    def test_truncation_stability(self):
        pair = FlatPair(0.2 + 0.3j, self.lat)
        low = min_singulars(assemble_fiber(pair, 0.45 + 0.1j, 3), 2)
        high = min_singulars(assemble_fiber(pair, 0.45 + 0.1j, 6), 2)
        np.testing.assert_allclose(low, high, atol=1e-10)

    def test_prefix_property(self):
        op = assemble_fiber(FlatPair(0.2 + 0.3j, self.lat), 0.1, 3)
        self.assertEqual(min_singulars(op, 2), min_singulars(op, 4)[:2])

    def test_rejects_zero_cutoff(self):
        with self.assertRaises(ValueError):
            assemble_fiber(FlatPair(0.2, self.lat), 0.1, 0)


class GaugeInvarianceTests(SimpleTestCase):

    def setUp(self):
        self.lat = Lattice(0.1 + 1.2j)
        self.unitary = random_unitary(4)

    def test_flat_operator_is_diagonal_in_the_diagonalizing_gauge(self):
        flat = FlatPair(0.21 + 0.13j, self.lat).connection()
        op = assemble_fiber(flat.conjugate(self.unitary), 0.3, 3)
        side = (2 * 3 + 1) ** 2
        gauge = np.kron(np.eye(side), self.unitary)
        back = gauge.conj().T @ op.dense() @ gauge
        off = back - np.diag(np.diag(back))
        self.assertLess(np.linalg.norm(off), 1e-12)

    def test_singular_values_invariant_under_constant_gauge(self):
        """Holds for non-flat Fourier-series data too."""
        data = FourierConnection(self.lat, {
            (0, 0): np.diag([0.2 + 0.1j, -0.2 - 0.1j]),
            (1, 0): 0.05 * np.array([[0.0, 1.0], [0.3j, 0.0]]),
            (0, -1): 0.03 * np.array([[1.0, 0.0], [0.0, -1.0]]),
        })
        a = min_singulars(assemble_fiber(data, 0.4 + 0.3j, 3), 6)
        b = min_singulars(assemble_fiber(data.conjugate(self.unitary), 0.4 + 0.3j, 3), 6)
        np.testing.assert_allclose(a, b, atol=1e-10)


class IterativeSolverTests(SimpleTestCase):

    @override_settings(SPECTRAL_LAB={**settings.SPECTRAL_LAB, 'DENSE_SVD_LIMIT': 10})
    def test_lanczos_path_matches_closed_form(self):
        lat = Lattice(1j)
        pair = FlatPair(0.3 + 0.15j, lat)
        op = assemble_fiber(pair, 0.6 + 0.7j, 3)
        np.testing.assert_allclose(min_singulars(op, 3), flat_singular_values(pair, 0.6 + 0.7j, 3)[:3], atol=1e-8)


class SigmaMinTests(SimpleTestCase):

    def setUp(self):
        self.lat = Lattice(0.1 + 1.2j)

    def test_flat_operator_reads_its_diagonal(self):
        pair = FlatPair(0.21 + 0.13j, self.lat)
        op = assemble_fiber(pair, 0.5 - 0.2j, 3)
        self.assertAlmostEqual(sigma_min(op), flat_singular_values(pair, 0.5 - 0.2j, 3)[0], delta=1e-12)

    def test_rotated_flat_operator_goes_through_the_dense_values(self):
        pair = FlatPair(0.21 + 0.13j, self.lat)
        op = assemble_fiber(pair.connection().conjugate(random_unitary(2)), 0.5 - 0.2j, 3)
        self.assertGreater(op.matrix.count_nonzero(), op.size)
        self.assertAlmostEqual(sigma_min(op), flat_singular_values(pair, 0.5 - 0.2j, 3)[0], delta=1e-10)

    def test_coupled_data_matches_the_triplets(self):
        data = FourierConnection(self.lat, {
            (0, 0): np.diag([0.2 + 0.1j, -0.2 - 0.1j]),
            (1, 0): 0.05 * np.array([[0.0, 1.0], [0.3j, 0.0]]),
        })
        op = assemble_fiber(data, 0.4 + 0.3j, 3)
        self.assertAlmostEqual(sigma_min(op), min_singulars(op, 1)[0], delta=1e-10)


# ------------------------------
# LINE FRAMES
# ------------------------------
class LineFrameTests(SimpleTestCase):

    def setUp(self):
        self.lat = Lattice(1j)

    def test_regular_fibers(self):
        self.assertFalse(is_regular_fiber(FlatPair(0.5, self.lat)))
        self.assertFalse(is_regular_fiber(FlatPair(0.5 + 0.5j, self.lat)))
        self.assertTrue(is_regular_fiber(FlatPair(0.3 + 0.1j, self.lat)))

    def test_frame_is_the_analytic_mode(self):
        eta = 0.31 + 0.22j
        op = assemble_fiber(FlatPair(eta, self.lat), -eta, 3)
        frame = kernel_frame(op)
        expected = np.zeros(op.size, dtype=complex)
        expected[op.index(0, 0, 0)] = 1.0
        np.testing.assert_allclose(frame.vector, expected, atol=1e-8)
        self.assertLess(frame.residual, 10 * 1e-6 * op.norm_estimate)

    def test_order_two_pair_is_ambiguous(self):
        op = assemble_fiber(FlatPair(0.5, self.lat), 0.5, 3)
        with self.assertRaises(RankAmbiguity):
            kernel_frame(op)

    def test_tracked_summand_resolves_an_order_two_pair(self):
        op = assemble_fiber(FlatPair(0.5, self.lat), 0.5, 3)
        minus = summand_frame(op, 1)
        plus = summand_frame(op, 0)
        self.assertAlmostEqual(abs(minus.vector[op.index(0, 0, 1)]), 1.0, places=10)
        self.assertAlmostEqual(abs(plus.vector[op.index(-1, 0, 0)]), 1.0, places=10)
        self.assertLess(max(minus.residual, plus.residual), 1e-10)

    def test_summand_frame_matches_kernel_frame_on_regular_fibers(self):
        eta = 0.31 + 0.22j
        op = assemble_fiber(FlatPair(eta, self.lat), eta, 3)
        np.testing.assert_allclose(summand_frame(op, 1).vector, kernel_frame(op).vector, atol=1e-10)
        with self.assertRaises(NotOnCurve):
            summand_frame(op, 0)

    def test_summand_frame_needs_uncoupled_data(self):
        data = FourierConnection(self.lat, {(0, 0): np.array([[0.2, 0.1], [0.1, -0.2]])})
        with self.assertRaises(ValueError):
            summand_frame(assemble_fiber(data, 0.2, 2), 1)

    def test_frame_rejects_non_unit_vector(self):
        with self.assertRaises(ValueError):
            LineFrame(xi=0, w=0, vector=np.ones(4), residual=0.0, N=1)

    def test_shift_frame_moves_mode(self):
        op = assemble_fiber(FlatPair(0.31, self.lat), -0.31, 2)
        frame = kernel_frame(op)
        moved = shift_frame(frame, [(1, -1), (0, 0)])
        self.assertAlmostEqual(abs(moved[op.index(1, -1, 0)]), 1.0, places=10)


# ------------------------------
# CURVE SCAN
# ------------------------------
class ScanTests(SimpleTestCase):

    def setUp(self):
        self.model, self.builtin = builtin_k1(a=1.0, b=0.2, xi0=XI0)
        base = np.array([0.62 + 0.31j, 0.4 + 0.72j, 0.8 + 0.55j])
        self.xi_grid = np.concatenate([base, -base])
        radius = np.abs(self.builtin.phi(self.xi_grid)).max() + 0.5
        axis = np.linspace(-radius, radius, 25)
        self.w_grid = axis[:, None] + 1j * axis[None, :]
        self.step = axis[1] - axis[0]

    def test_scan_recovers_phi(self):
        cloud = scan_instanton_curve(self.model, self.xi_grid, self.w_grid, N=4, workers=2)
        self.assertEqual(len(cloud), len(self.xi_grid))
        for point in cloud:
            self.assertLess(abs(point.w - self.builtin.phi(point.xi)), 2 * self.step)
            self.assertEqual(point.sheet, 0)

    def test_cloud_is_symmetric_under_negation(self):
        cloud = scan_instanton_curve(self.model, self.xi_grid, self.w_grid, N=4, workers=1)
        by_xi = {p.xi: p.w for p in cloud}
        for xi in self.xi_grid[:3]:
            self.assertAlmostEqual(abs(by_xi[complex(xi)] - by_xi[complex(-xi)]), 0.0, places=6)

    def test_puncture_nodes_are_skipped(self):
        grid = np.array([XI0 + 0.01, 0.62 + 0.31j])
        cloud = scan_instanton_curve(self.model, grid, self.w_grid, N=3, workers=1)
        self.assertEqual(cloud.metadata['xi_nodes'], 1)

    def test_coarse_field_comes_from_the_assembled_operator(self):
        with mock.patch('fiber_dirac.scan.sigma_min', wraps=sigma_min) as spy:
            cloud = scan_instanton_curve(self.model, self.xi_grid[:1], self.w_grid, N=4, workers=1)
        self.assertGreaterEqual(spy.call_count, self.w_grid.size)
        self.assertEqual(len(cloud), 1)

    def test_refined_points_lie_on_the_curve_below_grid_resolution(self):
        cloud = scan_instanton_curve(self.model, self.xi_grid[:3], self.w_grid, N=4, workers=2)
        for point in cloud:
            self.assertLess(abs(point.w - self.builtin.phi(point.xi)), 1e-7)

    def test_refinement_from_an_off_grid_seed(self):
        xi = complex(self.xi_grid[1])
        target = complex(self.builtin.phi(xi))
        w, _, sigma = refine_sheet(self.model, xi, target + 0.4 * self.step * (1 + 1j), self.step, N=4)
        self.assertLess(abs(w - target), 1e-7)
        self.assertLess(sigma, 1e-6)

    def test_points_outside_the_window_are_dropped(self):
        xi = complex(self.xi_grid[0])
        w = complex(self.builtin.phi(xi))
        window = (w.real + 0.5 * self.step, np.inf, -np.inf, np.inf)
        cloud = scan_instanton_curve(self.model, [xi], self.w_grid, N=4, workers=1, window=window)
        self.assertEqual(len(cloud), 0)
        self.assertEqual(cloud.metadata['w_window'][0], window[0])

    def test_staggered_grid_shares_no_node(self):
        staggered = staggered_grid(self.w_grid)
        self.assertEqual(staggered.shape, (24, 24))
        gaps = np.abs(staggered.ravel()[:, None] - self.w_grid.ravel()[None, :])
        self.assertAlmostEqual(gaps.min(), self.step / np.sqrt(2), delta=1e-12)
        self.assertLessEqual(np.abs(staggered.real).max(), np.abs(self.w_grid.real).max())


class GammaHolonomyTests(SimpleTestCase):

    def setUp(self):
        self.model, self.builtin = builtin_k1(a=1.0, b=0.2, xi0=XI0)
        t = np.linspace(0, 2 * np.pi, 13)[:-1]
        xi = 0.68 + 0.3j + 0.05 * np.exp(1j * t)
        self.loop = list(zip(xi, self.builtin.phi(xi)))

    def test_constant_loop(self):
        self.assertAlmostEqual(abs(gamma_holonomy(self.model, self.loop[:1], N=3) - 1), 0.0, places=12)

    def test_reverse_loop_is_conjugate(self):
        forward = gamma_holonomy(self.model, self.loop, N=3)
        backward = gamma_holonomy(self.model, self.loop[::-1], N=3)
        self.assertAlmostEqual(abs(forward - np.conj(backward)), 0.0, places=9)

    def test_small_loop_holonomy_near_one(self):
        self.assertAlmostEqual(abs(gamma_holonomy(self.model, self.loop, N=3) - 1), 0.0, places=9)

    def test_independent_of_frame_phases(self):
        a = gamma_holonomy(self.model, self.loop, N=3, phase_seed=1)
        b = gamma_holonomy(self.model, self.loop, N=3, phase_seed=99)
        self.assertAlmostEqual(abs(a - b), 0.0, places=9)

    def test_loop_across_the_cell_boundary(self):
        t = np.linspace(0, 2 * np.pi, 13)[:-1]
        xi = 0.98 + 0.3j + 0.05 * np.exp(1j * t)
        lifted = list(zip(xi, self.builtin.phi(xi)))
        wrapped = [(reduce(x, self.model.lat), w) for x, w in lifted]
        self.assertTrue(any(x.real < 0.5 for x, _ in wrapped))
        across = gamma_holonomy(self.model, wrapped, N=3)
        self.assertAlmostEqual(abs(across), 1.0, places=12)
        self.assertAlmostEqual(abs(across - gamma_holonomy(self.model, lifted, N=3)), 0.0, places=9)

    def test_step_shifts_follow_a_wrapped_twist(self):
        lat = self.model.lat
        # xi drops by one period while eta keeps going.
        shifts = _step_shifts((0.99 + 0.3j, 0.99 + 0.3j), (0.01 + 0.3j, 1.01 + 0.3j), lat)
        self.assertEqual(shifts, [(1, 0), (1, 0)])
        # eta wraps as well: xi + eta drops by two periods, xi - eta is unchanged.
        shifts = _step_shifts((0.99 + 0.3j, 0.99 + 0.3j), (0.01 + 0.3j, 0.01 + 0.3j), lat)
        self.assertEqual(shifts, [(2, 0), (0, 0)])

    def test_branch_point_too_close(self):
        omega = 0.5 + 0.5j
        loop = [(omega, self.builtin.phi(omega))] + self.loop[:2]
        with self.assertRaises(BranchTooClose):
            gamma_holonomy(self.model, loop, N=3)

    def test_orthogonal_frames_lose_correlation(self):
        e0, e1 = np.zeros(18, dtype=complex), np.zeros(18, dtype=complex)
        e0[0], e1[1] = 1.0, 1.0
        frames = iter([LineFrame(0, 0, e0, 0.0, 1), LineFrame(0, 0, e1, 0.0, 1)])
        with mock.patch('fiber_dirac.scan.line_frame', side_effect=lambda *a, **k: next(frames)):
            with self.assertRaises(FrameCorrelationLoss):
                gamma_holonomy(self.model, self.loop[:2], N=1)


class WriterTests(SimpleTestCase):

    def test_csv_columns(self):
        _, builtin = builtin_k1()
        cloud = CurveCloud()
        cloud.points.append(CloudPoint(0.6 + 0.3j, builtin.phi(0.6 + 0.3j), 0, 1e-13))
        with tempfile.TemporaryDirectory() as tmp:
            path = write_cloud_csv(cloud, Path(tmp) / 'S.csv')
            rows = read_cloud_csv(path)
            self.assertEqual(list(rows[0]), ['xi_re', 'xi_im', 'w_re', 'w_im', 'sigma_min', 'sheet'])
            self.assertEqual(rows[0]['sheet'], 0)
            json_path = write_cloud_json(cloud, Path(tmp) / 'S.json', meta={'run': 'test'})
            self.assertIn('"points"', json_path.read_text())
