import tempfile
from dataclasses import replace
from functools import lru_cache
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from curve_model.exceptions import DegenerateLeadingCoefficient, NearPuncture
from curve_model.factories import MODEL_FAMILIES, builtin_k1
from torus.geometry import fundamental_grid, pairing_constant, torus_distance
from torus.models import Lattice

from .diagnostics import asd_defect, cauchy_riemann, curvature_scale, energy, energy_density
from .exceptions import ConfigurationError, CutConfigInvalid
from .families import ConjugatedFamily, ConstantFamily, CurveFamily, PerturbedFamily
from .models import TransformConfig, profile_moments
from .planar import build_chart, dbar_matrix, mode_index, mode_labels
from .transform import (
    assemble_4d, berry_connection, h0_proxy, higgs_matrix, hitchin_ladder, hitchin_residual, kernel_frames,
    plaquette_spacing, sample_higgs,
)
from .writers import read_higgs_json, write_higgs_json

XI0 = 0.25 + 0.1j
XI = 0.62 + 0.31j


@lru_cache(maxsize=None)
def builtin_family():
    model, builtin = builtin_k1(a=1.0, b=0.2, xi0=XI0)
    return CurveFamily(model), builtin


@lru_cache(maxsize=None)
def generic_family():
    return CurveFamily(MODEL_FAMILIES['generic'].create_model(k=2, tau=1j, xi0=XI0, seed=1))


def reach(family):
    return max(abs(b) for b in family.branch_points) + 2.0


def random_unitary(k, seed):
    rng = np.random.default_rng(seed)
    q, r = np.linalg.qr(rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


# ------------------------------
# CONFIGURATION
# ------------------------------
class TransformConfigTests(SimpleTestCase):

    def setUp(self):
        self.family, _ = builtin_family()

    def test_radius_must_clear_branch_points(self):
        with self.assertRaises(ConfigurationError):
            TransformConfig(self.family, R=reach(self.family) - 0.5)

    def test_unknown_mode(self):
        with self.assertRaises(ConfigurationError):
            TransformConfig(self.family, R=reach(self.family) + 1, mode='adiabatic')

    def test_default_cuts_pair_the_branch_points(self):
        cfg = TransformConfig(self.family, R=reach(self.family) + 1)
        self.assertEqual(len(cfg.cuts), 2)
        ends = sorted((e for cut in cfg.cuts for e in cut), key=abs)
        np.testing.assert_allclose(ends, sorted(self.family.branch_points, key=abs), atol=1e-12)

    def test_describe_records_the_higgs_convention(self):
        cfg = TransformConfig(self.family, R=reach(self.family) + 1, mode='full')
        self.assertEqual(cfg.mode, 'FULL')
        self.assertEqual(cfg.describe()['higgs_convention']['prefactor'], '1/sqrt(2)')

    def test_cuts_must_pair_every_branch_point(self):
        branches = self.family.branch_points
        bad = TransformConfig(self.family, R=reach(self.family) + 1, M=8, cuts=[(branches[0], branches[1])])
        with self.assertRaises(CutConfigInvalid):
            build_chart(bad)


# ------------------------------
# LOCALIZED FRAMES
# ------------------------------
class LocalizedTransformTests(SimpleTestCase):

    def setUp(self):
        self.family, self.builtin = builtin_family()
        self.cfg = TransformConfig(self.family, R=reach(self.family) + 1)

    def test_profile_is_normalized(self):
        overlap, moment = profile_moments(1 + 1j, 1 + 1j, 0.15)
        self.assertAlmostEqual(overlap, 1.0, places=12)
        self.assertAlmostEqual(abs(moment - (1 + 1j)), 0.0, places=12)

    def test_one_frame_for_k1(self):
        frames = kernel_frames(self.cfg, XI)
        self.assertEqual(frames.k, 1)
        np.testing.assert_allclose(frames.gram(), np.eye(1), atol=1e-10)

    def test_higgs_matrix_is_the_sheet(self):
        phi = higgs_matrix(self.cfg, XI)
        self.assertEqual(phi.shape, (1, 1))
        self.assertAlmostEqual(abs(phi[0, 0] - self.builtin.phi(XI)), 0.0, places=7)

    def test_two_frames_for_k2(self):
        family = generic_family()
        cfg = TransformConfig(family, R=reach(family) + 1)
        frames = kernel_frames(cfg, XI)
        self.assertEqual(frames.k, 2)
        np.testing.assert_allclose(frames.gram(), np.eye(2), atol=1e-10)
        sheets = family.sheets(XI)
        if abs(sheets[0] - sheets[1]) > 2 * cfg.profile_width:
            np.testing.assert_allclose(np.diag(frames.higgs()), sheets, atol=1e-10)

    def test_frames_over_a_half_period(self):
        """Every sheet over a half period sits on a non-regular fiber, eta = -eta."""
        family = generic_family()
        cfg = TransformConfig(family, R=reach(family) + 1)
        frames = kernel_frames(cfg, 0.5 + 0.5j)
        self.assertEqual(frames.k, 2)
        self.assertLess(np.max(frames.residuals), 1e-8)
        np.testing.assert_allclose(frames.gram(), np.eye(2), atol=1e-10)
        sheets = family.sheets(0.5 + 0.5j)
        if abs(sheets[0] - sheets[1]) > 2 * cfg.profile_width:
            np.testing.assert_allclose(np.sort_complex(np.diag(frames.higgs())), np.sort_complex(sheets), atol=1e-10)

    def test_eigenvalues_survive_frame_remixing(self):
        family = generic_family()
        cfg = TransformConfig(family, R=reach(family) + 1)
        frames = kernel_frames(cfg, XI)
        mixed = frames.remix(random_unitary(2, 8))
        np.testing.assert_allclose(
            np.sort_complex(np.linalg.eigvals(mixed.higgs())),
            np.sort_complex(np.linalg.eigvals(frames.higgs())),
            atol=1e-9,
        )

    def test_puncture_disk_is_excluded(self):
        with self.assertRaises(NearPuncture):
            kernel_frames(self.cfg, XI0 + 0.05j)

    def test_line_bundle_berry_connection_vanishes(self):
        """Localized k = 1 frames are a fixed Fourier mode times a real bump."""
        for direction in ('x', 'y'):
            self.assertLess(np.abs(berry_connection(self.cfg, XI, direction)).max(), 1e-9)

    def test_unknown_direction(self):
        with self.assertRaises(ConfigurationError):
            berry_connection(self.cfg, XI, 'z')

    def test_constant_family_has_no_frames(self):
        cfg = TransformConfig(ConstantFamily(0.3 + 0.2j, Lattice(1j)), R=3.0)
        self.assertEqual(kernel_frames(cfg, XI).k, 0)
        self.assertEqual(berry_connection(cfg, XI, 'x').shape, (0, 0))


class HitchinResidualTests(SimpleTestCase):

    def setUp(self):
        self.family, _ = builtin_family()
        self.cfg = TransformConfig(self.family, R=reach(self.family) + 1)

    def test_residual_shrinks_over_the_grid_ladder(self):
        rows = hitchin_ladder(self.cfg, XI)
        self.assertEqual([M for M, _, _ in rows], [24, 48, 96])
        values = [residual for _, _, residual in rows]
        self.assertGreater(values[0], values[1])
        self.assertGreater(values[1], values[2])
        # First-order plaquette differences: halving the side halves the residual.
        self.assertAlmostEqual(values[1] / values[2], 2.0, delta=0.5)

    def test_plaquette_follows_the_plane_grid(self):
        spacings = [spacing for _, spacing, _ in hitchin_ladder(self.cfg, XI, grids=(24, 48))]
        self.assertAlmostEqual(spacings[0], 2 * spacings[1])
        self.assertAlmostEqual(plaquette_spacing(replace(self.cfg, M=24)), spacings[0])

    def test_non_holomorphic_sheets_keep_a_residual(self):
        perturbed = TransformConfig(PerturbedFamily(self.family, eps=0.2, seed=3), R=self.cfg.R + 2)
        rows = hitchin_ladder(perturbed, XI)
        coarse, fine = rows[0][2], rows[-1][2]
        self.assertGreater(fine, 0.5 * coarse)
        holomorphic = hitchin_ladder(self.cfg, XI, grids=(96,))[0][2]
        self.assertGreater(fine, 10 * holomorphic)

    def test_patch_needs_four_corners(self):
        with self.assertRaises(ConfigurationError):
            hitchin_residual(self.cfg, [XI, XI + 0.01, XI + 0.01j])


# ------------------------------
# PLANAR OPERATOR
# ------------------------------
class PlanarOperatorTests(SimpleTestCase):

    def setUp(self):
        self.lat = Lattice(1j)
        self.eta0 = 0.3 + 0.2j
        self.cfg = TransformConfig(ConstantFamily(self.eta0, self.lat), R=3.0, M=8, N=1, mode='FULL')

    def test_needs_full_mode(self):
        localized = TransformConfig(ConstantFamily(self.eta0, self.lat), R=3.0, M=8)
        with self.assertRaises(ConfigurationError):
            assemble_4d(localized, XI)

    def test_constant_family_separates(self):
        """No cuts, so no coupling between fiber modes."""
        op = assemble_4d(self.cfg, XI)
        self.assertEqual(op.block_coupling().size, 0)
        self.assertEqual(op.size, 2 * 8 * 8 * 18)

    def test_gram_is_hermitian(self):
        matrix = assemble_4d(self.cfg, XI).matrix
        gram = (matrix.conj().T @ matrix).toarray()
        self.assertLess(np.abs(gram - gram.conj().T).max(), 1e-12)

    def test_constant_family_kernel_is_empty(self):
        op = assemble_4d(self.cfg, XI)
        smallest = np.linalg.svd(op.dense(), compute_uv=False).min()
        distance = min(torus_distance(XI, self.eta0, self.lat), torus_distance(XI, -self.eta0, self.lat))
        self.assertGreaterEqual(smallest, pairing_constant(self.lat) * distance * (1 - 1e-9))
        self.assertEqual(kernel_frames(self.cfg, XI).k, 0)

    def test_zeroth_cohomology_proxy_is_bounded_below(self):
        self.assertGreater(h0_proxy(self.cfg, XI), 0.1)


class FullTransformTests(SimpleTestCase):

    def setUp(self):
        model, self.builtin = builtin_k1(a=0.3, b=0.0, xi0=XI0)
        self.family = CurveFamily(model)
        self.cfg = TransformConfig(self.family, R=reach(self.family) + 0.5, M=40, N=1, mode='FULL', gap_factor=2.5)

    def test_chart_flips_only_across_cuts(self):
        chart = build_chart(self.cfg)
        self.assertGreater(chart.flips, 0)
        self.assertFalse(np.isnan(chart.eta.real).any())

    def test_single_frame_localizes_at_the_sheet(self):
        frames = kernel_frames(self.cfg, XI)
        self.assertEqual(frames.k, 1)
        np.testing.assert_allclose(frames.gram(), np.eye(1), atol=1e-10)
        w1 = self.builtin.phi(XI)
        self.assertGreater(frames.mass_near(w1, 2.5)[0], 0.9)
        self.assertLess(abs(frames.higgs()[0, 0] - w1), 2e-2)

    def test_eigenvalue_converges_at_second_order(self):
        """Richardson ratio of the Higgs eigenvalue over M = 16, 32, 64."""
        values = []
        for M in (16, 32, 64):
            cfg = TransformConfig(self.family, R=self.cfg.R, M=M, N=1, mode='FULL', gap_factor=2.5)
            values.append(higgs_matrix(cfg, XI)[0, 0])
        errors = [abs(v - self.builtin.phi(XI)) for v in values]
        self.assertGreater(errors[0], errors[1])
        self.assertGreater(errors[1], errors[2])
        self.assertLess(errors[2], 1e-2)
        ratio = abs(values[0] - values[1]) / abs(values[1] - values[2])
        self.assertGreaterEqual(ratio, 3.0)
        self.assertLessEqual(ratio, 5.0)


class DbarStencilTests(SimpleTestCase):

    def _max_error(self, M):
        """Interior error of d/d(w-bar) applied to u = exp(0.2 w + 0.3 w-bar), whose derivative is 0.3 u."""
        cfg = TransformConfig(ConstantFamily(0.3 + 0.2j, Lattice(1j)), R=3.0, M=M, N=1, mode='FULL')
        chart = build_chart(cfg)
        dbar = dbar_matrix(cfg, chart)
        Q = mode_labels(cfg.N)[0].size
        slot = mode_index(0, 0, 0, cfg.N)
        w = chart.w.ravel()
        u = np.exp(0.2 * w + 0.3 * np.conj(w))
        vector = np.zeros(dbar.shape[0], dtype=complex)
        vector[np.arange(w.size) * Q + slot] = u
        result = (dbar @ vector)[np.arange(w.size) * Q + slot]
        interior = (np.abs(w.real) < 2.0) & (np.abs(w.imag) < 2.0)
        return np.abs(result - 0.3 * u)[interior].max()

    def test_stencil_is_second_order(self):
        errors = [self._max_error(M) for M in (16, 32, 64)]
        for coarse, fine in zip(errors, errors[1:]):
            self.assertGreaterEqual(coarse / fine, 3.0)
            self.assertLessEqual(coarse / fine, 5.0)

    def test_stencil_is_exact_on_quadratics(self):
        cfg = TransformConfig(ConstantFamily(0.3 + 0.2j, Lattice(1j)), R=3.0, M=12, N=1, mode='FULL')
        chart = build_chart(cfg)
        dbar = dbar_matrix(cfg, chart)
        Q = mode_labels(cfg.N)[0].size
        index = np.arange(chart.w.size) * Q + mode_index(0, 0, 1, cfg.N)
        w = chart.w.ravel()
        vector = np.zeros(dbar.shape[0], dtype=complex)
        vector[index] = np.conj(w) ** 2 + w * np.conj(w)
        inner = np.zeros(chart.w.shape, dtype=bool)
        inner[:-2, :-2] = True
        inner = inner.ravel()
        np.testing.assert_allclose((dbar @ vector)[index][inner], (2 * np.conj(w) + w)[inner], atol=1e-10)


# ------------------------------
# CURVATURE DIAGNOSTICS
# ------------------------------
class AsdDefectTests(SimpleTestCase):

    def setUp(self):
        self.family, _ = builtin_family()
        self.cfg = TransformConfig(self.family, R=reach(self.family) + 1)
        self.region = np.array([self.cfg.R - 1.0, 1j * (self.cfg.R - 1.0), -(self.cfg.R - 1.5) + 0.5j])

    def test_holomorphic_family_is_anti_self_dual(self):
        scale = curvature_scale(self.cfg, self.region, step=0.05)
        self.assertLess(asd_defect(self.cfg, self.region, step=0.05), 1e-8 * scale)

    def test_conjugated_family_is_not(self):
        cfg = TransformConfig(ConjugatedFamily(self.family), R=self.cfg.R)
        self.assertGreater(asd_defect(cfg, self.region), 1e-3)

    def test_constant_family_is_flat(self):
        cfg = TransformConfig(ConstantFamily(0.3 + 0.2j, Lattice(1j)), R=3.0)
        self.assertLess(asd_defect(cfg, np.array([0.5, 1j, -1 - 1j])), 1e-12)


class EnergyTests(SimpleTestCase):

    def setUp(self):
        self.family, _ = builtin_family()
        self.cfg = TransformConfig(self.family, R=reach(self.family) + 1)

    def test_k1_energy_approaches_8_pi_squared(self):
        """|F| = O(|w|^-2), so the missing energy falls like R^-2."""
        values = energy(self.cfg, [4.0, 8.0, 16.0])
        self.assertLess(values[0], values[1])
        self.assertLess(values[1], values[2])
        target = 8 * np.pi ** 2
        self.assertAlmostEqual(values[2] / target, 1.0, delta=0.05)
        self.assertLess(values[2], target)
        ratio = (target - values[1]) / (target - values[2])
        self.assertGreaterEqual(ratio, 3.0)
        self.assertLessEqual(ratio, 5.0)

    def test_energy_matches_the_sheet_count(self):
        """Changing variables xi = eta(w): E(R) = 8 pi^2 times the mean number of sheets inside |w| < R."""
        R = 8.0
        lat = self.family.lat
        grid = fundamental_grid(lat, 64).ravel()
        inside = 0
        for xi in grid:
            try:
                inside += int(np.sum(np.abs(self.family.sheets(xi)) < R))
            except (NearPuncture, DegenerateLeadingCoefficient):
                continue
        counted = 8 * np.pi ** 2 * inside / grid.size
        self.assertAlmostEqual(energy(self.cfg, [R])[0] / counted, 1.0, delta=0.01)

    def test_density_agrees_with_the_stencil(self):
        points = (reach(self.family) + 1.0) * np.exp(1j * np.array([0.3, 2.1, 4.4]))
        holo, anti = self.family.derivatives(points)
        stencil_holo, _ = cauchy_riemann(self.cfg, points, step=0.05)
        np.testing.assert_allclose(np.abs(holo), np.abs(stencil_holo), rtol=1e-6)
        self.assertEqual(np.abs(anti).max(), 0.0)

    def test_conjugated_family_carries_the_same_energy(self):
        points = (reach(self.family) + 1.0) * np.exp(1j * np.array([0.3, 2.1]))
        np.testing.assert_allclose(
            energy_density(TransformConfig(ConjugatedFamily(self.family), R=self.cfg.R), np.conj(points)),
            energy_density(self.cfg, points),
            rtol=1e-12,
        )

    def test_k2_energy_approaches_16_pi_squared(self):
        family = generic_family()
        cfg = TransformConfig(family, R=reach(family) + 1)
        values = energy(cfg, [50.0])
        self.assertAlmostEqual(values[0] / (16 * np.pi ** 2), 1.0, delta=0.02)

    def test_constant_family_has_no_energy(self):
        cfg = TransformConfig(ConstantFamily(0.3 + 0.2j, Lattice(1j)), R=3.0)
        self.assertEqual(energy(cfg, [1.0, 2.0]), [0.0, 0.0])

    def test_radii_must_increase(self):
        with self.assertRaises(ConfigurationError):
            energy(self.cfg, [10.0, 5.0])


# ------------------------------
# SAMPLES AND OUTPUT
# ------------------------------
class SampleHiggsTests(SimpleTestCase):

    def setUp(self):
        self.family, self.builtin = builtin_family()
        self.cfg = TransformConfig(self.family, R=reach(self.family) + 1)
        self.grid = fundamental_grid(self.family.lat, 4)

    def test_sample_skips_puncture_disks(self):
        grid = np.append(self.grid.ravel(), XI0 + 0.02)
        sample = sample_higgs(self.cfg, grid, workers=2)
        self.assertEqual(sample.metadata['skipped'], 1)
        self.assertEqual(len(sample), 16)
        for node in sample:
            self.assertLess(node.gram_defect, 1e-10)
            self.assertAlmostEqual(abs(node.phi[0, 0] - self.builtin.phi(node.xi)), 0.0, places=7)

    def test_json_keeps_matrices(self):
        sample = sample_higgs(self.cfg, self.grid[:1, :2].ravel(), workers=1)
        with tempfile.TemporaryDirectory() as tmp:
            path = write_higgs_json(sample, Path(tmp) / 'transform.json', meta={'command': 'transform'})
            again = read_higgs_json(path)
        self.assertEqual(len(again), 2)
        np.testing.assert_allclose(again.nodes[0].phi, sample.nodes[0].phi, atol=1e-15)
        self.assertEqual(again.metadata['mode'], 'LOCALIZED')
