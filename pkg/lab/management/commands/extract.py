import logging
import time

import numpy as np

from curve_model.serializers import model_to_json
from higgs_spectral.spectral import compactify, eigen_curve, higgs_branch_points, symmetry_defect
from higgs_spectral.writers import write_curve_csv, write_curve_json
from nahm.transform import higgs_matrix, sample_higgs
from nahm.writers import read_higgs_json
from torus.exceptions import ConfigurationError

from lab.base import Artifact, CommandResult, LabCommand
from lab.plots import plot_clouds

logger = logging.getLogger(__name__)

SAMPLE_FILE = 'higgs_sample.json'


def stored_sample(path, model):
    """A Higgs sample left by ``transform`` in the output directory, when it belongs to this model."""
    if not path.exists():
        return None
    sample = read_higgs_json(path)
    meta = sample.metadata
    expected = {'k': model.k, 'tau': model.lat.to_json(), 'xi0': [model.xi0.real, model.xi0.imag]}
    for key, value in expected.items():
        stored = meta.get(key)
        if stored is None or not np.allclose(np.asarray(stored, dtype=float), np.asarray(value, dtype=float)):
            raise ConfigurationError(f'{path} was computed for a different model ({key}={stored!r})')
    logger.info('using the stored Higgs sample %s (%d nodes)', path, len(sample))
    return sample


class Command(LabCommand):
    help = 'Higgs-side spectral curve C from the eigenvalues of Phi (C_cloud.json, C_cloud.csv)'

    def compute(self, run, workers, svg, out):
        timings = {}
        model = run.build_model()
        cfg = run.transform_config(model)
        lat = model.lat

        started = time.monotonic()
        sample = stored_sample(out / SAMPLE_FILE, model)
        if sample is None:
            sample = sample_higgs(cfg, run.xi_grid(model), workers=workers)
        timings['sample'] = time.monotonic() - started

        started = time.monotonic()
        cloud = eigen_curve(sample, workers=workers, lat=lat)
        branches = higgs_branch_points(sample, evaluate=lambda xi: higgs_matrix(cfg, xi), lat=lat)
        closed = compactify(cloud, model.punctures, lat=lat)
        closed.metadata['symmetry_defect'] = symmetry_defect(cloud, lat=lat)
        timings['extract'] = time.monotonic() - started

        model_json = model_to_json(model)
        artifacts = [
            Artifact('C_cloud.json', lambda path: write_curve_json(closed, path, branch_points=branches, model=model_json)),
            Artifact('C_cloud.csv', lambda path: write_curve_csv(closed, path)),
        ]
        if svg:
            artifacts.append(Artifact('C_cloud.svg', lambda path: plot_clouds(path, higgs=cloud, title=str(model))))
        summary = (
            f'{len(cloud)} eigenvalues over {len(sample)} xi nodes, {len(branches)} branch points, '
            f'{cloud.metadata["unassigned"]} unassigned'
        )
        return CommandResult(artifacts=artifacts, summary=summary, timings=timings)
