import time

from curve_model.serializers import model_to_json
from fiber_dirac.scan import scan_instanton_curve
from fiber_dirac.writers import write_cloud_csv, write_cloud_json

from lab.base import Artifact, CommandResult, LabCommand
from lab.plots import plot_clouds


class Command(LabCommand):
    help = 'Instanton-side spectral curve S from fiber Dirac kernels (S_cloud.json, S_cloud.csv)'

    def compute(self, run, workers, svg, out):
        started = time.monotonic()
        model = run.build_model()
        radius = run.default_w_radius(model)
        cloud = scan_instanton_curve(
            model, run.xi_grid(model), run.w_grid(radius), N=run.fiber_N, workers=workers,
        )
        cloud.metadata.update({'w_radius': radius, 'xi_points': run.xi_points, 'tau': model.lat.to_json()})
        model_json = model_to_json(model)
        artifacts = [
            Artifact('S_cloud.json', lambda path: write_cloud_json(cloud, path, model=model_json)),
            Artifact('S_cloud.csv', lambda path: write_cloud_csv(cloud, path)),
        ]
        if svg:
            artifacts.append(Artifact('S_cloud.svg', lambda path: plot_clouds(path, instanton=cloud, title=str(model))))
        return CommandResult(
            artifacts=artifacts,
            summary=f'{len(cloud)} curve points over {cloud.metadata["xi_nodes"]} xi nodes',
            timings={'scan': time.monotonic() - started},
        )
