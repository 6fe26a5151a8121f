import copy
import csv
import json
import tempfile
from io import StringIO
from pathlib import Path
from unittest.mock import patch

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase

from torus.conf import lab_setting
from torus.exceptions import RootFindFailure

from .exceptions import ConfigurationError, InvalidRunConfig
from .models import R_MARGIN, RunConfig
from .validation import validate_run_config

BASE_DIR = Path(__file__).resolve().parent.parent

TINY_K1 = {
    'model': {'family': 'builtin_k1', 'k': 1, 'tau': [0.0, 1.0], 'xi0': [0.25, 0.1], 'a': [1.0, 0.0], 'b': [0.2, 0.0]},
    'grids': {'xi': 4, 'w': 21, 'fiber_points': 2, 'loop_sizes': [1, 2]},
    'truncation': {'N': 1, 'fiber_N': 4, 'M': 32, 'mode': 'LOCALIZED'},
    'tolerances': {'delta': 0.1},
    'seed': 7,
    'diagnostics': {'energy_R': [4.0, 8.0, 16.0], 'hitchin_patches': 1},
}

TINY_K2 = {
    **TINY_K1,
    'model': {'family': 'generic', 'k': 2, 'tau': [0.0, 1.0], 'xi0': [0.25, 0.1], 'seed': 1},
}


def config_with(base=TINY_K1, **sections):
    data = copy.deepcopy(base)
    for name, values in sections.items():
        if isinstance(values, dict):
            data.setdefault(name, {}).update(values)
        else:
            data[name] = values
    return data


class CommandTestCase(SimpleTestCase):
    """Runs lab commands against configs written to a temporary directory."""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.out = self.root / 'out'

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, data, name='run.json'):
        path = self.root / name
        path.write_text(data if isinstance(data, str) else json.dumps(data))
        return path

    def run_command(self, name, data=TINY_K1, *extra, out=None):
        stdout, stderr = StringIO(), StringIO()
        call_command(
            name, '--config', str(self.write_config(data)), '--out', str(out or self.out), '--workers', '2',
            *extra, stdout=stdout, stderr=stderr,
        )
        return stdout.getvalue()

    def assertExitCode(self, code, name, data=TINY_K1, *extra):
        with self.assertRaises(CommandError) as ctx:
            self.run_command(name, data, *extra)
        self.assertEqual(ctx.exception.returncode, code)
        return ctx.exception

    def assertNoOutput(self):
        self.assertFalse(self.out.exists() and any(self.out.iterdir()))
        leftovers = [p.name for p in self.root.iterdir() if p.name.startswith('.out-')]
        self.assertEqual(leftovers, [])


# ------------------------------
# CONFIG VALIDATION
# ------------------------------
class ValidateRunConfigTests(SimpleTestCase):

    def test_bundled_configs_are_valid(self):
        for name in ('k1.json', 'k1_full.json', 'k2.json'):
            data = json.loads((BASE_DIR / 'configs' / name).read_text())
            self.assertEqual(validate_run_config(data), {}, name)

    def test_bundled_full_config_selects_the_full_transform(self):
        data = json.loads((BASE_DIR / 'configs' / 'k1_full.json').read_text())
        run = RunConfig.from_dict(data)
        cfg = run.transform_config(run.build_model())
        self.assertEqual((cfg.M, cfg.N, cfg.mode), (48, 8, 'FULL'))

    def test_tiny_config_is_valid(self):
        self.assertEqual(validate_run_config(TINY_K1), {})

    def test_errors_are_keyed_by_field_path(self):
        data = config_with(
            model={'tau': [0.0, -1.0], 'family': 'hyperbolic'},
            grids={'xi': 1, 'w': 2},
            truncation={'M': 2, 'mode': 'SPARSE'},
            tolerances={'kernel_tol': 0},
        )
        errors = validate_run_config(data)
        for path in ('model.tau', 'model.family', 'grids.xi', 'grids.w', 'truncation.M', 'truncation.mode',
                     'tolerances.kernel_tol'):
            self.assertIn(path, errors)

    def test_missing_fields(self):
        data = config_with()
        del data['model']['xi0']
        del data['model']['k']
        errors = validate_run_config(data)
        self.assertEqual(errors['model.xi0'], 'model.xi0 is required')
        self.assertIn('model.k', errors)
        self.assertEqual(validate_run_config({'grids': {}}), {'model': 'model is required'})

    def test_not_an_object(self):
        self.assertEqual(validate_run_config([1, 2]), {'config': 'config must be a JSON object'})

    def test_booleans_are_not_integers(self):
        errors = validate_run_config(config_with(grids={'xi': True}, seed=False))
        self.assertIn('grids.xi', errors)
        self.assertIn('seed', errors)

    def test_unknown_tolerance_is_reported(self):
        errors = validate_run_config(config_with(tolerances={'gap': 1.0}))
        self.assertIn('gap', errors['tolerances'])

    def test_energy_radii_must_increase(self):
        errors = validate_run_config(config_with(diagnostics={'energy_R': [8.0, 4.0]}))
        self.assertEqual(errors['diagnostics.energy_R'], 'diagnostics.energy_R must be increasing')

    def test_theta_coeff_rows_must_match_k(self):
        rows = [[[1.0, 0.0], [0.0, 0.0]]] * 3
        errors = validate_run_config(config_with(model={'family': 'explicit', 'k': 1, 'theta_coeffs': rows}))
        self.assertIn('model.theta_coeffs', errors)


# ------------------------------
# RUN CONFIG
# ------------------------------
class RunConfigTests(SimpleTestCase):

    def setUp(self):
        self.run = RunConfig.from_dict(TINY_K1)

    def test_malformed_json_reports_line(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'bad.json'
            path.write_text('{\n  "model": {,\n}')
            with self.assertRaises(InvalidRunConfig) as ctx:
                RunConfig.from_json(path)
        self.assertTrue(ctx.exception.errors['config'].startswith('line 2'))

    def test_missing_file_is_a_configuration_error(self):
        with self.assertRaises(ConfigurationError):
            RunConfig.from_json('/nonexistent/run.json')

    def test_invalid_dict_raises_with_all_errors(self):
        with self.assertRaises(InvalidRunConfig) as ctx:
            RunConfig.from_dict(config_with(grids={'xi': 0}, seed='x'))
        self.assertEqual(set(ctx.exception.errors), {'grids.xi', 'seed'})

    def test_overrides_map_tolerances_to_settings(self):
        run = RunConfig.from_dict(config_with(tolerances={'kernel_tol': 1e-8, 'frame_tol_factor': 5.0}))
        overrides = run.overrides()
        self.assertEqual(overrides['KERNEL_TOL'], 1e-8)
        self.assertEqual(overrides['FRAME_TOL_FACTOR'], 5.0)
        self.assertEqual(overrides['PUNCTURE_RADIUS'], 0.1)
        self.assertIsNone(overrides['BRANCH_MARGIN'])
        self.assertEqual(overrides['SOLVER_SEED'], 7)

    def test_default_plane_radius_clears_branch_points(self):
        model = self.run.build_model()
        cfg = self.run.transform_config(model)
        reach = max(abs(b) for b in cfg.family.branch_points)
        self.assertAlmostEqual(cfg.R, reach + R_MARGIN)
        self.assertEqual((cfg.M, cfg.N, cfg.mode), (32, 1, 'LOCALIZED'))

    def test_match_config_follows_grids(self):
        model = self.run.build_model()
        cfg = self.run.match_config(self.run.transform_config(model), workers=3)
        self.assertEqual((cfg.xi_points, cfg.w_points, cfg.fiber_N, cfg.fiber_points), (4, 21, 4, 2))
        self.assertEqual(cfg.loop_sizes, (1, 2))
        self.assertEqual(cfg.workers, 3)

    def test_output_dir_precedence(self):
        self.assertEqual(self.run.output_dir('fallback'), Path('fallback'))
        run = RunConfig.from_dict(config_with(output='runs/k1'))
        self.assertEqual(run.output_dir('fallback'), Path('runs/k1'))


# ------------------------------
# CURVE COMMAND
# ------------------------------
class CurveCommandTests(CommandTestCase):

    def test_k1_curve_has_genus_one(self):
        stdout = self.run_command('curve')
        payload = json.loads((self.out / 'curve.json').read_text())
        self.assertTrue(payload['smooth'])
        self.assertEqual(payload['genus'], 1)
        self.assertEqual(payload['genus_over_xi'], 1)
        self.assertEqual(len(payload['branch_points']), 4)
        self.assertEqual(payload['xi_branch_points'], [])
        self.assertIn('genus 1', stdout)
        with (self.out / 'branch.csv').open(newline='') as handle:
            self.assertEqual(len(list(csv.DictReader(handle))), 4)

    def test_k2_curve_lists_eight_branch_points(self):
        self.run_command('curve', TINY_K2)
        payload = json.loads((self.out / 'curve.json').read_text())
        self.assertEqual(len(payload['branch_points']), 8)
        self.assertEqual(payload['genus'], 3)
        self.assertEqual(payload['genus_over_xi'], 3)
        self.assertEqual(len(payload['xi_branch_points']), 4)

    def test_asymptotic_state_is_recorded(self):
        self.run_command('curve')
        payload = json.loads((self.out / 'curve.json').read_text())
        eta = complex(*payload['asymptotic_state'][0])
        self.assertLess(min(abs(eta - (0.25 + 0.1j)), abs(eta + (0.25 + 0.1j))), 1e-3)

    def test_meta_is_kept_apart(self):
        self.run_command('curve')
        meta = json.loads((self.out / 'curve_meta.json').read_text())
        self.assertEqual(meta['command'], 'curve')
        self.assertEqual(meta['files'], ['curve.json', 'branch.csv'])
        self.assertNotIn('timestamp', (self.out / 'curve.json').read_text())

    def test_rerun_is_byte_identical(self):
        self.run_command('curve')
        self.run_command('curve', TINY_K1, out=self.root / 'again')
        self.assertEqual((self.out / 'curve.json').read_bytes(), (self.root / 'again' / 'curve.json').read_bytes())

    def test_svg_flag_writes_plot(self):
        self.run_command('curve', TINY_K1, '--svg')
        self.assertIn('<svg', (self.out / 'curve.svg').read_text())


# ------------------------------
# EXIT CODES
# ------------------------------
class ExitCodeTests(CommandTestCase):

    def test_malformed_json_exits_2_without_files(self):
        self.assertExitCode(2, 'curve', '{"model": ')
        self.assertNoOutput()

    def test_invalid_config_exits_2(self):
        error = self.assertExitCode(2, 'scan', config_with(grids={'xi': 1}))
        self.assertIn('grids.xi', str(error))
        self.assertNoOutput()

    def test_order_two_asymptotic_state_exits_2(self):
        self.assertExitCode(2, 'curve', config_with(model={'xi0': [0.5, 0.0]}))
        self.assertNoOutput()

    def test_plane_too_small_exits_2(self):
        self.assertExitCode(2, 'transform', config_with(truncation={'R': 0.5}))
        self.assertNoOutput()

    @patch('lab.management.commands.curve.branch_table', side_effect=RootFindFailure('no zeros found'))
    def test_numerical_failure_exits_1_without_files(self, mock_table):
        error = self.assertExitCode(1, 'curve')
        self.assertIn('RootFindFailure', str(error))
        mock_table.assert_called_once()
        self.assertNoOutput()

    @patch('lab.management.commands.curve.plot_curve_slice', side_effect=RootFindFailure('plot'))
    def test_failure_while_writing_leaves_no_partial_files(self, mock_plot):
        self.assertExitCode(1, 'curve', TINY_K1, '--svg')
        self.assertNoOutput()

    def test_workers_must_be_positive(self):
        with self.assertRaises(CommandError) as ctx:
            call_command('curve', '--config', str(self.write_config(TINY_K1)), '--workers', '0',
                         stdout=StringIO(), stderr=StringIO())
        self.assertEqual(ctx.exception.returncode, 2)

    def test_settings_are_restored_after_a_run(self):
        before = dict(settings.SPECTRAL_LAB)
        self.run_command('curve', config_with(tolerances={'delta': 0.2, 'kernel_tol': 1e-9}))
        self.assertEqual(settings.SPECTRAL_LAB, before)

    def test_tolerances_apply_during_the_run(self):
        seen = {}

        def spy(model, xi_grid):
            seen['delta'] = lab_setting('PUNCTURE_RADIUS')
            seen['global'] = settings.SPECTRAL_LAB['PUNCTURE_RADIUS']
            return {'genus': 1, 'genus_over_xi': 1, 'smooth': True}, []

        with patch('lab.management.commands.curve.curve_payload', side_effect=spy):
            self.run_command('curve', config_with(tolerances={'delta': 0.2}))
        self.assertEqual(seen['delta'], 0.2)
        self.assertNotEqual(seen['global'], 0.2)


# ------------------------------
# SCAN, TRANSFORM, EXTRACT
# ------------------------------
class PipelineCommandTests(CommandTestCase):

    def test_scan_writes_cloud(self):
        self.run_command('scan', config_with(grids={'xi': 3, 'w': 11}))
        payload = json.loads((self.out / 'S_cloud.json').read_text())
        self.assertGreater(len(payload['points']), 0)
        self.assertEqual(payload['metadata']['xi_points'], 3)
        self.assertEqual(payload['model']['k'], 1)
        with (self.out / 'S_cloud.csv').open(newline='') as handle:
            self.assertEqual(len(list(csv.DictReader(handle))), len(payload['points']))

    @patch('lab.management.commands.transform.energy')
    def test_transform_writes_tables(self, mock_energy):
        target = 8 * np.pi ** 2
        mock_energy.return_value = [0.9 * target, 0.97 * target, 0.99 * target]
        self.run_command('transform', config_with(grids={'xi': 3}))

        sample = json.loads((self.out / 'higgs_sample.json').read_text())
        self.assertEqual(len(sample['nodes']), 9)
        poles = json.loads((self.out / 'poles.json').read_text())['poles']
        self.assertEqual(len(poles), 2)
        for report in poles:
            self.assertAlmostEqual(report['order'], 1.0, delta=0.1)
            self.assertEqual(report['residue_rank'], 1)
        with (self.out / 'energy.csv').open(newline='') as handle:
            ratios = [float(row['ratio']) for row in csv.DictReader(handle)]
        self.assertAlmostEqual(ratios[-1], 0.99)
        with (self.out / 'hitchin.csv').open(newline='') as handle:
            rows = list(csv.DictReader(handle))
        self.assertEqual([int(row['M']) for row in rows], [24, 48, 96])
        spacings = [float(row['spacing']) for row in rows]
        self.assertAlmostEqual(spacings[0] / spacings[2], 4.0)

    def test_extract_reuses_stored_sample(self):
        with patch('lab.management.commands.transform.energy', return_value=[1.0, 2.0, 3.0]):
            self.run_command('transform', config_with(grids={'xi': 3}))
        with patch('lab.management.commands.extract.sample_higgs') as mock_sample:
            self.run_command('extract', config_with(grids={'xi': 3}))
            mock_sample.assert_not_called()
        payload = json.loads((self.out / 'C_cloud.json').read_text())
        at_infinity = [p for p in payload['points'] if p['w_re'] is None]
        self.assertEqual(len(at_infinity), 2)
        self.assertEqual(len(payload['points']), 9 + 2)

    def test_extract_rejects_sample_of_another_model(self):
        with patch('lab.management.commands.transform.energy', return_value=[1.0, 2.0, 3.0]):
            self.run_command('transform', config_with(grids={'xi': 3}))
        other = config_with(grids={'xi': 3}, model={'xi0': [0.3, 0.15]})
        self.assertExitCode(2, 'extract', other)

    def test_extract_computes_sample_when_missing(self):
        self.run_command('extract', config_with(grids={'xi': 3}))
        self.assertTrue((self.out / 'C_cloud.csv').exists())
        self.assertFalse((self.out / 'higgs_sample.json').exists())


# ------------------------------
# MATCH COMMAND
# ------------------------------
class MatchCommandTests(CommandTestCase):

    def test_match_report_and_summary(self):
        stdout = self.run_command('match')
        report = json.loads((self.out / 'match_report.json').read_text())
        self.assertLess(report['hausdorff'], 2 * (1 / 4))
        self.assertEqual(report['metadata']['rank_defects'], 0)
        self.assertNotIn('timings', report)
        self.assertIn('quantity', stdout)
        meta = json.loads((self.out / 'match_meta.json').read_text())
        self.assertIn('hausdorff', meta['timings'])
