import logging
import time
from dataclasses import replace

import numpy as np

from curve_model.serializers import model_to_json
from higgs_spectral.spectral import pole_analysis, radial_probe
from nahm.diagnostics import energy
from nahm.transform import HITCHIN_GRIDS, hitchin_ladder, plaquette_spacing, sample_higgs
from nahm.writers import write_higgs_json
from torus.exceptions import NumericalError

from lab.base import Artifact, CommandResult, LabCommand
from lab.writers import pair, write_json, write_table_csv

logger = logging.getLogger(__name__)

# Radial probes get closer to the punctures than the grid does.
PROBE_RADIUS = 1e-3
PROBE_STEP = 1e-7

HITCHIN_COLUMNS = ['xi_re', 'xi_im', 'M', 'spacing', 'residual', 'error']
ENERGY_COLUMNS = ['R', 'energy', 'ratio']


def pole_reports(cfg, workers, reach=0.3, min_nodes=4):
    probe_cfg = replace(cfg, step=PROBE_STEP)
    reports = []
    for which, center in (('xi0', cfg.model.xi0), ('-xi0', -cfg.model.xi0)):
        probe = sample_higgs(probe_cfg, radial_probe(center, reach=reach), workers=workers, radius=PROBE_RADIUS)
        reports.append(pole_analysis(probe, which, reach=reach, min_nodes=min_nodes, lat=cfg.lat))
    return reports


def hitchin_table(cfg, xi_values, patches):
    """Hitchin residual over the plane grid ladder at ``patches`` nodes; a failed rung keeps its row."""
    if not patches or not len(xi_values):
        return []
    picks = sorted(set(np.linspace(0, len(xi_values) - 1, patches).round().astype(int).tolist()))
    rows = []
    for i in picks:
        xi = complex(xi_values[i])
        for M in HITCHIN_GRIDS:
            spacing = plaquette_spacing(replace(cfg, M=M))
            row = {'xi_re': xi.real, 'xi_im': xi.imag, 'M': M, 'spacing': spacing, 'residual': None, 'error': ''}
            try:
                _, _, row['residual'] = hitchin_ladder(cfg, xi, grids=(M,))[0]
            except NumericalError as exc:
                logger.warning('hitchin residual at %s (M=%d): %s', xi, M, exc)
                row['error'] = type(exc).__name__
            rows.append(row)
    return rows


class Command(LabCommand):
    help = 'Numerical Nahm transform over the xi-grid: Higgs sample, poles, Hitchin residual, energy'

    def compute(self, run, workers, svg, out):
        timings = {}
        model = run.build_model()
        cfg = run.transform_config(model)
        diagnostics = run.diagnostics

        started = time.monotonic()
        sample = sample_higgs(cfg, run.xi_grid(model), workers=workers)
        timings['sample'] = time.monotonic() - started

        started = time.monotonic()
        poles = pole_reports(
            cfg, workers, reach=diagnostics.get('pole_reach', 0.3), min_nodes=diagnostics.get('pole_nodes', 4),
        )
        timings['poles'] = time.monotonic() - started

        started = time.monotonic()
        hitchin = hitchin_table(cfg, sample.xi, diagnostics.get('hitchin_patches', 3))
        timings['hitchin'] = time.monotonic() - started

        started = time.monotonic()
        radii = run.energy_R
        target = 8 * np.pi ** 2 * model.k
        energies = [
            {'R': R, 'energy': E, 'ratio': E / target}
            for R, E in zip(radii, energy(cfg, radii))
        ]
        timings['energy'] = time.monotonic() - started

        model_json = model_to_json(model)
        pole_payload = {
            'model': model_json,
            'poles': [report.as_dict() for report in poles],
            'punctures': [pair(p) for p in model.punctures],
        }
        artifacts = [
            Artifact('higgs_sample.json', lambda path: write_higgs_json(sample, path, model=model_json)),
            Artifact('poles.json', lambda path: write_json(path, pole_payload)),
            Artifact('hitchin.csv', lambda path: write_table_csv(path, HITCHIN_COLUMNS, hitchin)),
            Artifact('energy.csv', lambda path: write_table_csv(path, ENERGY_COLUMNS, energies)),
        ]
        lines = [f'{len(sample)} xi nodes ({cfg.mode}, R={cfg.R:g}, M={cfg.M})']
        lines += [f'pole at {report.xi:.4g}: order {report.order:.3f}, residue rank {report.residue_rank}' for report in poles]
        lines += [f'energy(R={row["R"]:g}) = {row["energy"]:.5g} ({row["ratio"]:.4f} of 8 pi^2 k)' for row in energies]
        return CommandResult(artifacts=artifacts, summary='\n'.join(lines), timings=timings)
