import tempfile
from functools import lru_cache
from pathlib import Path

import numpy as np
import scipy.linalg
from django.test import SimpleTestCase

from curve_model.factories import MODEL_FAMILIES, builtin_k1
from nahm.families import CurveFamily
from nahm.models import HiggsNode, HiggsSample, TransformConfig
from nahm.transform import sample_higgs
from torus.geometry import fundamental_grid, half_periods, torus_distance
from torus.models import Lattice

from .exceptions import (
    BranchTooClose, ConfigurationError, EigenvalueNotSimple, NotOnCurve, ProbeTooShort, SheetTrackingAmbiguous,
)
from .models import AT_INFINITY, UNASSIGNED
from .spectral import (
    chordal_distance, coker_frame, cokernel_frame, compactify, eigen_curve, higgs_branch_points, lambda_holonomy,
    pole_analysis, radial_probe, symmetry_defect,
)
from .writers import read_curve_csv, write_curve_csv, write_curve_json

XI0 = 0.25 + 0.1j
LAT = Lattice(1j)


@lru_cache(maxsize=None)
def builtin_family():
    model, _ = builtin_k1(a=1.0, b=0.2, xi0=XI0)
    return CurveFamily(model)


@lru_cache(maxsize=None)
def generic_family():
    return CurveFamily(MODEL_FAMILIES['generic'].create_model(k=2, tau=1j, xi0=XI0, seed=1))


def localized_config(family, **kwargs):
    reach = max(abs(b) for b in family.branch_points) + 2.0
    return TransformConfig(family, R=reach + 1.0, **kwargs)


@lru_cache(maxsize=None)
def builtin_sample():
    return sample_higgs(localized_config(builtin_family()), fundamental_grid(LAT, 4), workers=2)


@lru_cache(maxsize=None)
def generic_sample():
    return sample_higgs(localized_config(generic_family()), fundamental_grid(LAT, 3), workers=2)


def synthetic_sample(xi_values, phi, connection=None, permuted=(), xi0=None):
    """HiggsSample from closed-form Phi(xi) and scalar Berry coefficients (c_x, c_y)."""
    nodes = []
    for i, xi in enumerate(xi_values):
        matrix = np.atleast_2d(np.asarray(phi(complex(xi)), dtype=complex))
        k = matrix.shape[0]
        c_x, c_y = connection(complex(xi)) if connection else (0.0, 0.0)
        if i in permuted:
            flip = np.eye(k)[::-1]
            matrix = flip @ matrix @ flip.T
        nodes.append(HiggsNode(
            xi=complex(xi), phi=matrix, b_x=c_x * np.eye(k, dtype=complex), b_y=c_y * np.eye(k, dtype=complex),
            gram_defect=0.0, frame_residual=0.0,
        ))
    metadata = {'tau': [0.0, 1.0]}
    if xi0 is not None:
        metadata['xi0'] = [complex(xi0).real, complex(xi0).imag]
    return HiggsSample(nodes=nodes, metadata=metadata)


def sheet_sample(family, n, offset=(0.3, 0.2), clearance=0.1):
    """Diagonal Higgs field diag(w_i(xi)) on a periodic n x n grid, punctures cut out."""
    x, y = np.meshgrid((np.arange(n) + offset[0]) / n, (np.arange(n) + offset[1]) / n, indexing='ij')
    grid = LAT.point(x, y).ravel()
    keep = [xi for xi in grid if min(torus_distance(xi, p, LAT) for p in family.punctures) > clearance]
    return synthetic_sample(keep, lambda xi: np.diag(family.sheets(xi)), xi0=XI0)


def square_loop(corner, steps, h=0.05, sheet_value=None):
    """Counterclockwise square of grid nodes starting at ``corner``."""
    path = [corner + h * s for s in range(steps)]
    path += [corner + h * steps + 1j * h * s for s in range(steps)]
    path += [corner + h * steps + 1j * h * steps - h * s for s in range(steps)]
    path += [corner + 1j * h * steps - 1j * h * s for s in range(steps)]
    return [(xi, sheet_value(xi)) for xi in path]


GRID_H = 0.05
GRID = [complex(a * GRID_H, b * GRID_H) for a in range(9) for b in range(9)]


def two_sheets(xi):
    return np.diag([1.0 + 0.1 * xi, -1.0])


def rotation(xi):
    """Berry coefficients of the connection i*c*(x dy - y dx)/2 with c = 1."""
    return -0.5j * xi.imag, 0.5j * xi.real


# ------------------------------
# EIGENVALUE CURVE
# ------------------------------
class EigenCurveTests(SimpleTestCase):

    def test_localized_k1_cloud_is_the_sheet(self):
        cloud = eigen_curve(builtin_sample(), workers=2)
        family = builtin_family()
        self.assertEqual(len(cloud), len(builtin_sample()))
        for point in cloud:
            self.assertAlmostEqual(abs(point.w - family.sheets(point.xi)[0]), 0.0, delta=1e-10)
            self.assertEqual(point.sheet, 0)

    def test_eigenvalue_count_per_node_is_k(self):
        sample = generic_sample()
        cloud = eigen_curve(sample, workers=2)
        for node in sample:
            points = cloud.over(node.xi)
            self.assertEqual(len(points), 2)
            scale = np.linalg.norm(node.phi, 2) ** 2
            for point in points:
                residual = abs(np.linalg.det(node.phi - point.w * np.eye(2)))
                self.assertLess(residual, 1e-8 * scale)

    def test_even_model_cloud_is_symmetric(self):
        cfg = localized_config(builtin_family())
        nodes = [0.62 + 0.31j, -(0.62 + 0.31j), 0.4 + 0.7j, -(0.4 + 0.7j)]
        cloud = eigen_curve(sample_higgs(cfg, nodes, workers=2))
        self.assertLess(symmetry_defect(cloud), 1e-8)

    def test_tracking_sees_through_permuted_frames(self):
        line = [0.1 * j for j in range(6)]
        sample = synthetic_sample(line, two_sheets, permuted={1, 3, 5})
        cloud = eigen_curve(sample)
        labels = {p.sheet for p in cloud if p.w.real > 0}
        self.assertEqual(len(labels), 1)
        self.assertNotIn(UNASSIGNED, labels)

    def test_collision_leaves_sheets_unassigned(self):
        line = [0.1 * j for j in range(7)]
        sample = synthetic_sample(line, lambda xi: np.diag([xi - 0.3, 0.3 - xi]))
        cloud = eigen_curve(sample)
        self.assertEqual(cloud.metadata['unassigned'], 1)
        self.assertEqual({p.sheet for p in cloud.over(0.3)}, {UNASSIGNED})
        with self.assertRaises(SheetTrackingAmbiguous):
            eigen_curve(sample, strict=True)

    def test_empty_sample_is_rejected(self):
        with self.assertRaises(ConfigurationError):
            eigen_curve(HiggsSample(metadata={'tau': [0.0, 1.0]}))


# ------------------------------
# COKERNEL FRAMES
# ------------------------------
class CokernelFrameTests(SimpleTestCase):

    def test_rank_one_frame_is_the_unit_scalar(self):
        frame = cokernel_frame(np.array([[2.5 - 1j]]), 0.3, 2.5 - 1j)
        np.testing.assert_allclose(frame.vector, [1.0])

    def test_diagonal_field_gives_coordinate_vector(self):
        frame = cokernel_frame(np.diag([1.0 + 1j, -0.5]), 0.3, 1.0 + 1j)
        np.testing.assert_allclose(frame.vector, [1.0, 0.0], atol=1e-14)

    def test_matches_left_eigenvector(self):
        """u^H (Phi - w) = 0 reproduces the dense left eigenvector."""
        rng = np.random.default_rng(5)
        phi = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        values, left = scipy.linalg.eig(phi, left=True, right=False)
        for value, vector in zip(values, left.T):
            frame = cokernel_frame(phi, 0.0, value)
            self.assertAlmostEqual(abs(np.vdot(vector / np.linalg.norm(vector), frame.vector)), 1.0, delta=1e-10)
            self.assertLess(np.linalg.norm(frame.vector.conj() @ (phi - value * np.eye(2))), 1e-10)

    def test_repeated_eigenvalue_is_not_simple(self):
        with self.assertRaises(EigenvalueNotSimple):
            cokernel_frame(2.0 * np.eye(2), 0.0, 2.0)

    def test_point_off_the_curve(self):
        with self.assertRaises(NotOnCurve):
            cokernel_frame(np.diag([1.0, -1.0]), 0.0, 0.5)

    def test_point_must_sit_over_a_sample_node(self):
        sample = synthetic_sample([0.1, 0.2], two_sheets)
        self.assertEqual(coker_frame(sample, (0.1, 1.01)).k, 2)
        with self.assertRaises(ConfigurationError):
            coker_frame(sample, (0.15, 1.0))


# ------------------------------
# COKERNEL HOLONOMY
# ------------------------------
class LambdaHolonomyTests(SimpleTestCase):

    def sheet(self, xi):
        return 1.0 + 0.1 * xi

    def test_flat_connection_constant_field(self):
        sample = synthetic_sample(GRID, lambda xi: np.diag([1.0, -1.0]))
        loop = square_loop(0.1 + 0.1j, 3, sheet_value=lambda xi: 1.0)
        self.assertAlmostEqual(abs(lambda_holonomy(sample, loop) - 1.0), 0.0, delta=1e-12)

    def test_reversed_loop_is_conjugate(self):
        sample = synthetic_sample(GRID, two_sheets, connection=rotation)
        loop = square_loop(0.1 + 0.1j, 3, sheet_value=self.sheet)
        forward = lambda_holonomy(sample, loop)
        backward = lambda_holonomy(sample, loop[::-1])
        self.assertAlmostEqual(abs(backward - np.conj(forward)), 0.0, delta=1e-12)

    def test_deviation_scales_with_enclosed_area(self):
        sample = synthetic_sample(GRID, two_sheets, connection=rotation)
        small = lambda_holonomy(sample, square_loop(0.1 + 0.1j, 2, sheet_value=self.sheet))
        large = lambda_holonomy(sample, square_loop(0.1 + 0.1j, 4, sheet_value=self.sheet))
        self.assertAlmostEqual(np.angle(small), -(2 * GRID_H) ** 2, delta=1e-12)
        self.assertAlmostEqual(abs(large - 1) / abs(small - 1), 4.0, places=2)

    def test_invariant_under_rephasing_frames(self):
        sample = synthetic_sample(GRID, two_sheets, connection=rotation)
        loop = square_loop(0.1 + 0.1j, 3, sheet_value=self.sheet)
        reference = lambda_holonomy(sample, loop)
        for seed in (1, 2, 3):
            self.assertAlmostEqual(abs(lambda_holonomy(sample, loop, phase_seed=seed) - reference), 0.0, delta=1e-9)

    def test_invariant_under_permuted_node_frames(self):
        plain = synthetic_sample(GRID, two_sheets, connection=rotation)
        permuted = synthetic_sample(GRID, two_sheets, connection=rotation, permuted=set(range(0, len(GRID), 2)))
        loop = square_loop(0.1 + 0.1j, 3, sheet_value=self.sheet)
        self.assertAlmostEqual(abs(lambda_holonomy(permuted, loop) - lambda_holonomy(plain, loop)), 0.0, delta=1e-12)

    def test_loop_near_a_branch_point(self):
        sample = synthetic_sample(GRID, lambda xi: np.diag([0.01, 0.0]))
        loop = square_loop(0.1 + 0.1j, 2, sheet_value=lambda xi: 0.01)
        with self.assertRaises(BranchTooClose):
            lambda_holonomy(sample, loop)

    def test_loop_must_step_between_neighbours(self):
        sample = synthetic_sample(GRID, two_sheets)
        loop = [(xi, self.sheet(xi)) for xi in (0.1 + 0.1j, 0.3 + 0.1j, 0.3 + 0.3j)]
        with self.assertRaises(ConfigurationError):
            lambda_holonomy(sample, loop)


# ------------------------------
# POLES AND RESIDUES
# ------------------------------
class PoleAnalysisTests(SimpleTestCase):

    def probe_sample(self, family, center):
        cfg = localized_config(family, step=1e-7)
        return sample_higgs(cfg, radial_probe(center), workers=2, radius=1e-3)

    def test_builtin_simple_pole_of_rank_one(self):
        report = pole_analysis(self.probe_sample(builtin_family(), XI0), 'xi0')
        self.assertAlmostEqual(report.order, 1.0, delta=0.1)
        self.assertEqual(report.residue_rank, 1)
        self.assertTrue(report.semisimple)

    def test_generic_rank_two_field_at_both_punctures(self):
        for which, center in (('xi0', XI0), ('-xi0', -XI0)):
            report = pole_analysis(self.probe_sample(generic_family(), center), which)
            self.assertAlmostEqual(report.order, 1.0, delta=0.1)
            self.assertEqual(report.residue_rank, 1)

    def test_constant_field_has_no_pole(self):
        sample = synthetic_sample(radial_probe(0.3 + 0.3j), lambda xi: np.diag([1.0, 2.0]), xi0=0.3 + 0.3j)
        report = pole_analysis(sample, 'xi0')
        self.assertAlmostEqual(report.order, 0.0, delta=1e-6)
        self.assertEqual(report.residue_rank, 0)

    def test_crossing_singular_values_keep_rank_one(self):
        """A small residue next to a large finite sheet: d * |w| overtakes the residue along the sampled ray."""
        center = 0.3 + 0.3j
        sample = synthetic_sample(
            radial_probe(center), lambda xi: np.diag([0.01 / (xi - center), 5.0]), xi0=center,
        )
        report = pole_analysis(sample, 'xi0')
        self.assertEqual(report.residue_rank, 1)
        self.assertTrue(report.semisimple)
        self.assertAlmostEqual(report.residue_singular_values[0], 0.01, delta=1e-9)

    def test_nilpotent_residue_is_not_semisimple(self):
        center = 0.3 + 0.3j
        sample = synthetic_sample(
            radial_probe(center), lambda xi: np.array([[0.0, 1.0 / (xi - center)], [0.0, 0.0]]), xi0=center,
        )
        report = pole_analysis(sample, 'xi0')
        self.assertAlmostEqual(report.order, 1.0, delta=1e-6)
        self.assertEqual(report.residue_rank, 1)
        self.assertFalse(report.semisimple)

    def test_probe_too_short(self):
        sample = synthetic_sample(radial_probe(0.3, count=3), lambda xi: np.eye(1), xi0=0.3)
        with self.assertRaises(ProbeTooShort):
            pole_analysis(sample, 'xi0')


# ------------------------------
# BRANCH POINTS
# ------------------------------
class HiggsBranchPointTests(SimpleTestCase):

    def test_rank_one_critical_points_are_the_model_branch_values(self):
        """For k = 1 the critical values of the eigenvalue are the branch points over w."""
        family = builtin_family()
        found = higgs_branch_points(
            sheet_sample(family, 24), evaluate=lambda xi: np.diag(family.sheets(xi)), lat=LAT,
        )
        self.assertEqual(len(found), 4)
        for point in found:
            self.assertLess(min(torus_distance(point.xi, h, LAT) for h in half_periods(LAT)), 1e-6)
            self.assertLess(min(abs(point.w - b) for b in family.branch_points), 1e-6)

    def test_generic_rank_two_count(self):
        """4k - 4 simple branch points over the dual torus, each with a winding certificate."""
        family = generic_family()
        found = higgs_branch_points(
            sheet_sample(family, 24), evaluate=lambda xi: np.diag(family.sheets(xi)), lat=LAT,
        )
        self.assertEqual(len(found), 4)
        for point in found:
            self.assertEqual(point.winding, 1)
            w1, w2 = family.sheets(point.xi)
            self.assertLess(abs(w1 - w2), 1e-3)

    def test_branch_point_inside_a_sampling_hole(self):
        branch = 0.32 + 0.27j

        def phi(xi):
            return np.array([[0.0, 1.0], [xi - branch, 0.0]])

        keep = [xi for xi in GRID if abs(xi - branch) > 0.08]
        self.assertLess(len(keep), len(GRID))
        found = higgs_branch_points(synthetic_sample(keep, phi), evaluate=phi, lat=LAT)
        self.assertEqual(len(found), 1)
        self.assertAlmostEqual(abs(found[0].xi - branch), 0.0, delta=1e-8)
        self.assertEqual(found[0].winding, 1)

    def test_branch_free_region_is_empty(self):
        cfg = localized_config(builtin_family())
        x, y = np.meshgrid([0.3, 0.35, 0.4], [0.3, 0.35, 0.4], indexing='ij')
        sample = sample_higgs(cfg, LAT.point(x, y), workers=2)
        self.assertEqual(higgs_branch_points(sample), [])


# ------------------------------
# COMPACTIFICATION AND OUTPUT
# ------------------------------
class CompactifyTests(SimpleTestCase):

    def test_adds_the_points_at_infinity(self):
        cloud = compactify(eigen_curve(builtin_sample()))
        far = cloud.sheet(AT_INFINITY)
        self.assertEqual(len(far), 2)
        self.assertTrue(all(p.at_infinity for p in far))
        self.assertAlmostEqual(chordal_distance(far[0].w, 0.0), 1.0)
        self.assertTrue(cloud.metadata['compactified'])

    def test_double_point_is_not_supported(self):
        cloud = eigen_curve(synthetic_sample([0.1, 0.2], two_sheets, xi0=0.5))
        with self.assertRaises(ConfigurationError):
            compactify(cloud)

    def test_chordal_distance_is_local_euclidean_near_zero(self):
        self.assertAlmostEqual(chordal_distance(0.0, 1e-4), 1e-4, delta=1e-11)
        self.assertAlmostEqual(chordal_distance(np.inf, np.inf), 0.0)

    def test_csv_keeps_points_at_infinity_empty(self):
        cloud = compactify(eigen_curve(builtin_sample()))
        with tempfile.TemporaryDirectory() as tmp:
            rows = read_curve_csv(write_curve_csv(cloud, Path(tmp) / 'curve.csv'))
            json_path = write_curve_json(cloud, Path(tmp) / 'curve.json')
            self.assertTrue(json_path.exists())
        self.assertEqual(len(rows), len(cloud))
        self.assertIsNone(rows[-1]['w_re'])
        self.assertEqual(rows[-1]['sheet'], AT_INFINITY)
