import json
import tempfile
from dataclasses import replace
from functools import lru_cache
from pathlib import Path
from unittest import mock

import numpy as np
from django.test import SimpleTestCase

from curve_model.factories import MODEL_FAMILIES, builtin_k1
from fiber_dirac.scan import scan_instanton_curve
from higgs_spectral.models import CurvePoint, HiggsCurveCloud
from higgs_spectral.spectral import chordal_distance, eigen_curve
from nahm.families import CurveFamily
from nahm.models import HiggsSample, TransformConfig
from nahm.transform import sample_higgs
from torus.geometry import torus_distance
from torus.models import Lattice

from .comparison import fiber_iso_check, fm_support, holonomy_compare, holonomy_pair, standard_loops
from .exceptions import ConfigurationError, EmptyCloud
from .matching import match_curves
from .metric import hausdorff, sphere_point
from .models import MatchConfig, MatchReport, MatchState
from .pipelines.spectral_pipeline import SpectralPipeline
from .strategies.stages import (
    MATCH_STAGES, HausdorffStage, HiggsCurveStage, HiggsSampleStage, InstantonCurveStage,
)
from .writers import summary_table, write_report_json

XI0 = 0.25 + 0.1j
LAT = Lattice(1j)
INF = complex(np.inf, 0.0)


@lru_cache(maxsize=None)
def builtin():
    return builtin_k1(a=1.0, b=0.2, xi0=XI0)


@lru_cache(maxsize=None)
def generic_model():
    return MODEL_FAMILIES['generic'].create_model(k=2, tau=1j, xi0=XI0, seed=1)


def transform_config(model, **kwargs):
    family = CurveFamily(model)
    reach = max(abs(b) for b in family.branch_points) + 2.0
    return TransformConfig(family, R=reach + 1.0, **kwargs)


@lru_cache(maxsize=None)
def builtin_config():
    return MatchConfig(transform=transform_config(builtin()[0]), xi_points=4, w_points=21, fiber_N=4,
                       fiber_points=2, workers=2)


@lru_cache(maxsize=None)
def builtin_report():
    return match_curves(builtin()[0], builtin_config())


@lru_cache(maxsize=None)
def builtin_cloud():
    cfg = builtin_config()
    return eigen_curve(sample_higgs(cfg.transform, cfg.xi_grid(), workers=2))


def brute_force(xi_a, w_a, xi_b, w_b):
    worst = 0.0
    for x, w in zip(xi_a, w_a):
        best = min(
            np.hypot(torus_distance(x, y, LAT), chordal_distance(w, v)) for y, v in zip(xi_b, w_b)
        )
        worst = max(worst, best)
    return worst


# ------------------------------
# CURVE DISTANCE
# ------------------------------
class HausdorffTests(SimpleTestCase):

    def setUp(self):
        rng = np.random.default_rng(3)
        self.xi = LAT.point(rng.random(6), rng.random(6))
        self.w = rng.normal(size=6) + 1j * rng.normal(size=6)

    def test_identical_clouds(self):
        self.assertEqual(hausdorff((self.xi, self.w), (self.xi, self.w), lat=LAT), (0.0, 0.0))

    def test_small_shift_near_zero_is_euclidean(self):
        xi = np.array([0.3 + 0.3j, 0.6 + 0.2j])
        w = np.zeros(2, dtype=complex)
        ab, ba = hausdorff((xi, w), (xi, w + 1e-3), lat=LAT)
        self.assertAlmostEqual(ab, 1e-3, delta=1e-8)
        self.assertAlmostEqual(ba, 1e-3, delta=1e-8)

    def test_three_point_clouds_match_exhaustive_search(self):
        """Directed values agree with the pairwise minimax over the product metric."""
        xi_a, w_a = self.xi[:3], self.w[:3]
        xi_b, w_b = self.xi[3:] + 0.05, self.w[3:] * 1.3
        ab, ba = hausdorff((xi_a, w_a), (xi_b, w_b), lat=LAT)
        self.assertAlmostEqual(ab, brute_force(xi_a, w_a, xi_b, w_b), places=12)
        self.assertAlmostEqual(ba, brute_force(xi_b, w_b, xi_a, w_a), places=12)

    def test_distance_wraps_around_the_torus(self):
        ab, _ = hausdorff(([0.01 + 0.5j], [1.0]), ([0.99 + 0.5j], [1.0]), lat=LAT)
        self.assertAlmostEqual(ab, 0.02, places=12)

    def test_points_at_infinity(self):
        ab, _ = hausdorff(([XI0], [INF]), ([XI0], [1e8]), lat=LAT)
        self.assertAlmostEqual(ab, 1e-8, delta=1e-12)
        self.assertEqual(hausdorff(([XI0], [INF]), ([XI0], [INF]), lat=LAT), (0.0, 0.0))

    def test_sphere_images_realize_the_chordal_metric(self):
        a, b = self.w[:3], self.w[3:]
        euclidean = np.linalg.norm(sphere_point(a) - sphere_point(b), axis=1)
        np.testing.assert_allclose(euclidean, chordal_distance(a, b), atol=1e-14)

    def test_empty_cloud(self):
        with self.assertRaises(EmptyCloud):
            hausdorff(([], []), (self.xi, self.w), lat=LAT)

    def test_lattice_from_cloud_metadata(self):
        cloud = HiggsCurveCloud(points=[CurvePoint(xi=0.3j, w=1.0, sheet=0, cond=1.0)], metadata={'tau': [0.0, 1.0]})
        self.assertEqual(hausdorff(cloud, ([0.3j], [1.0])), (0.0, 0.0))
        with self.assertRaises(ConfigurationError):
            hausdorff(([0.3j], [1.0]), ([0.3j], [1.0]))


# ------------------------------
# MATCH PIPELINE
# ------------------------------
class MatchCurvesTests(SimpleTestCase):

    def test_builtin_curves_coincide(self):
        report = builtin_report()
        self.assertLess(report.hausdorff, 2 * builtin_config().xi_step)
        self.assertEqual(report.hausdorff, max(report.hausdorff_S_to_C, report.hausdorff_C_to_S))

    def test_fiber_defects_vanish_in_localized_mode(self):
        report = builtin_report()
        self.assertEqual(len(report.fiber_defects), 2)
        self.assertLess(report.worst_fiber_defect, 1e-8)

    def test_holonomies_agree_on_standard_loops(self):
        report = builtin_report()
        self.assertGreaterEqual(len(report.holonomy), 1)
        self.assertLess(report.worst_holonomy, 5e-2)

    def test_rank_is_k_everywhere(self):
        report = builtin_report()
        self.assertEqual(report.metadata['rank_defects'], 0)
        self.assertEqual({entry['rank'] for entry in report.rank}, {1})
        self.assertLess(report.fm_support_distance, 2 * builtin_config().xi_step)

    def test_reproducible(self):
        cfg = builtin_config()
        again = match_curves(builtin()[0], MatchConfig(
            transform=cfg.transform, xi_points=4, w_points=21, fiber_N=4, fiber_points=2, workers=1,
        ))
        self.assertEqual(again.as_dict(), builtin_report().as_dict())

    def test_generic_k2_curves_coincide(self):
        model = generic_model()
        cfg = MatchConfig(transform=transform_config(model), xi_points=4, w_points=31, fiber_N=4, workers=2)
        stages = (HiggsSampleStage(), HiggsCurveStage(), InstantonCurveStage(), HausdorffStage())
        report = match_curves(model, cfg, stages=stages)
        self.assertLess(report.hausdorff, 2 * cfg.xi_step)

    def test_config_for_another_model_is_rejected(self):
        model, _ = builtin_k1(a=1.0, b=0.2, xi0=XI0)
        with self.assertRaises(ConfigurationError):
            match_curves(model, builtin_config())


class SpectralPipelineTests(SimpleTestCase):

    def test_default_stage_order(self):
        names = [stage.name for stage in MATCH_STAGES]
        self.assertEqual(names, [
            'higgs_sample', 'higgs_curve', 'instanton_curve', 'hausdorff', 'fiber_pairing', 'holonomy', 'support',
        ])

    def test_stages_run_in_order_and_are_timed(self):
        calls = []
        stages = []
        for name in ('first', 'second'):
            stage = mock.Mock()
            stage.name = name
            stage.apply.side_effect = lambda state, cfg, name=name: calls.append(name) or state
            stages.append(stage)
        state = SpectralPipeline(stages).run(MatchState(model=None), cfg=None)
        self.assertEqual(calls, ['first', 'second'])
        self.assertEqual(set(state.timings), {'first', 'second'})

    def test_match_config_validation(self):
        transform = builtin_config().transform
        with self.assertRaises(ConfigurationError):
            MatchConfig(transform=transform, xi_points=1)
        with self.assertRaises(ConfigurationError):
            MatchConfig(transform=transform, w_radius=-1.0)
        with self.assertRaises(ConfigurationError):
            MatchConfig(transform=None)


# ------------------------------
# FIBER PAIRING
# ------------------------------
class FiberIsoCheckTests(SimpleTestCase):

    def setUp(self):
        self.model, self.builtin = builtin()
        self.cfg = builtin_config().transform
        self.xi = 0.62 + 0.31j
        self.w = complex(self.builtin.phi(self.xi))

    def test_localized_frames_restrict_to_the_line(self):
        self.assertLess(fiber_iso_check(self.model, self.cfg, (self.xi, self.w)), 1e-8)

    def test_match_config_is_accepted(self):
        self.assertLess(fiber_iso_check(self.model, builtin_config(), (self.xi, self.w)), 1e-8)

    def test_off_curve_point_is_detected(self):
        self.assertGreater(fiber_iso_check(self.model, self.cfg, (self.xi, self.w + 0.1)), 0.5)


# ------------------------------
# HOLONOMY COMPARISON
# ------------------------------
class HolonomyCompareTests(SimpleTestCase):

    def setUp(self):
        self.model, _ = builtin()
        self.cfg = builtin_config()
        self.loops = standard_loops(self.model, self.cfg, builtin_cloud(), sizes=(1, 2))

    def test_standard_loops_are_grid_squares_on_one_sheet(self):
        self.assertEqual([loop['size'] for loop in self.loops], [1, 2])
        for loop in self.loops:
            points = loop['points']
            self.assertEqual(len(points), 4 * loop['size'])
            steps = [torus_distance(a[0], b[0], LAT) for a, b in zip(points, points[1:] + points[:1])]
            np.testing.assert_allclose(steps, self.cfg.xi_step, atol=1e-12)

    def test_constant_loop(self):
        xi, w = self.loops[0]['points'][0]
        self.assertAlmostEqual(holonomy_compare(self.model, self.cfg, [(xi, w)]), 0.0, delta=1e-12)

    def test_small_loop_holonomies_agree(self):
        self.assertLess(holonomy_compare(self.model, self.cfg, self.loops[0]['points']), 5e-2)

    def test_reversed_loop_gives_conjugate_pair(self):
        loop = self.loops[1]['points']
        gamma, lam = holonomy_pair(self.model, self.cfg, loop)
        gamma_back, lam_back = holonomy_pair(self.model, self.cfg, loop[::-1])
        self.assertAlmostEqual(abs(gamma_back - np.conj(gamma)), 0.0, delta=1e-9)
        self.assertAlmostEqual(abs(lam_back - np.conj(lam)), 0.0, delta=1e-9)
        self.assertAlmostEqual(abs(gamma_back - lam_back), abs(gamma - lam), delta=1e-9)

    def curved_sample(self, loop, curvature):
        """Higgs sample on the loop nodes with its Berry connection replaced by i*c*(x dy - y dx)/2."""
        xi_values = list(dict.fromkeys(xi for xi, _ in loop))
        centre = np.mean(xi_values)
        sample = sample_higgs(self.cfg.transform, xi_values, workers=2, radius=self.cfg.puncture_radius)
        nodes = []
        for node in sample:
            x, y = (node.xi - centre).real, (node.xi - centre).imag
            unit = np.eye(node.k, dtype=complex)
            nodes.append(replace(node, b_x=-0.5j * curvature * y * unit, b_y=0.5j * curvature * x * unit))
        return HiggsSample(nodes=nodes, metadata=sample.metadata)

    def test_curved_higgs_connection_separates_at_order_area(self):
        curvature = 1.0
        differences = []
        for loop in self.loops:
            points = loop['points']
            gamma, lam = holonomy_pair(self.model, self.cfg, points, sample=self.curved_sample(points, curvature))
            area = (loop['size'] * self.cfg.xi_step) ** 2
            self.assertAlmostEqual(abs(gamma - 1), 0.0, delta=1e-8)
            self.assertAlmostEqual(abs(np.angle(lam)), curvature * area, delta=1e-8)
            differences.append(abs(gamma - lam))
        self.assertGreater(differences[0], 1e-2)
        self.assertAlmostEqual(differences[1] / differences[0], 4.0, delta=0.05)


# ------------------------------
# FOURIER-MUKAI SUPPORT
# ------------------------------
class FmSupportTests(SimpleTestCase):

    def setUp(self):
        self.model, self.builtin = builtin()
        base = np.array([0.62 + 0.31j, 0.4 + 0.72j, 0.8 + 0.55j])
        self.xi_grid = np.concatenate([base, -base])
        self.radius = np.abs(self.builtin.phi(self.xi_grid)).max() + 0.5
        axis = np.linspace(-self.radius, self.radius, 25)
        self.w_grid = axis[:, None] + 1j * axis[None, :]
        self.step = axis[1] - axis[0]

    def test_support_agrees_with_the_scanned_curve(self):
        scanned = scan_instanton_curve(self.model, self.xi_grid, self.w_grid, N=4, workers=2)
        support, _ = fm_support(self.model, self.xi_grid, self.w_grid, N=4, workers=2)
        self.assertEqual([(p.xi, p.sheet) for p in support], [(p.xi, p.sheet) for p in scanned])
        for found, scan in zip(support, scanned):
            self.assertLess(abs(found.w - scan.w), 1e-7)

    def test_support_is_searched_on_its_own_grid(self):
        with mock.patch('match_fm.comparison.scan_instanton_curve', wraps=scan_instanton_curve) as spy:
            fm_support(self.model, self.xi_grid[:2], self.w_grid, N=4, workers=1)
        grid = spy.call_args.args[2]
        self.assertEqual(grid.shape, (24, 24))
        self.assertGreater(np.abs(grid.ravel()[:, None] - self.w_grid.ravel()[None, :]).min(), 0.1 * self.step)
        self.assertAlmostEqual(spy.call_args.kwargs['window'][1], self.radius, delta=1e-12)

    def test_rank_is_k(self):
        _, rank = fm_support(self.model, self.xi_grid, self.w_grid, N=4, workers=2)
        self.assertEqual(len(rank), len(self.xi_grid))
        self.assertEqual(set(rank.values()), {1})

    def test_support_escapes_the_window_near_xi0(self):
        near = XI0 + 0.11
        w = complex(self.builtin.phi(near))
        self.assertGreater(max(abs(w.real), abs(w.imag)), self.radius)
        _, rank = fm_support(self.model, np.append(self.xi_grid[:1], near), self.w_grid, N=4, workers=2)
        self.assertEqual(rank[complex(self.xi_grid[0])], 1)
        self.assertEqual(rank[complex(near)], 0)


# ------------------------------
# REPORT OUTPUT
# ------------------------------
class ReportWriterTests(SimpleTestCase):

    def setUp(self):
        self.report = MatchReport(
            hausdorff_S_to_C=1e-3, hausdorff_C_to_S=2e-3,
            holonomy=[{'name': 'square-1', 'difference': 4e-4}],
            fiber_defects=[{'xi': [0.6, 0.3], 'w': [1.0, 0.0], 'defect': 1e-12}],
            fm_support_distance=2e-3, metadata={'rank_defects': 0}, timings={'hausdorff': 0.1},
        )

    def test_symmetric_distance_is_the_larger(self):
        self.assertEqual(self.report.hausdorff, 2e-3)

    def test_summary_table(self):
        table = summary_table(self.report)
        self.assertIn('hausdorff (symmetric)', table)
        self.assertIn('2.000e-03', table)
        self.assertIn('square-1', table)

    def test_json_payload_leaves_timings_out(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = write_report_json(self.report, Path(tmp) / 'match_report.json')
            payload = json.loads(path.read_text())
        self.assertEqual(payload['hausdorff'], 2e-3)
        self.assertNotIn('timings', payload)
        self.assertEqual(payload['holonomy'][0]['name'], 'square-1')
