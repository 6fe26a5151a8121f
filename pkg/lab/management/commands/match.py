from curve_model.serializers import model_to_json
from match_fm.matching import run_match
from match_fm.writers import summary_table, write_report_json

from lab.base import Artifact, CommandResult, LabCommand
from lab.plots import plot_clouds


class Command(LabCommand):
    help = 'Full pipeline: both spectral curves, their distance, fiber pairing, holonomies (match_report.json)'

    def compute(self, run, workers, svg, out):
        model = run.build_model()
        cfg = run.match_config(run.transform_config(model), workers=workers)
        report, state = run_match(model, cfg)
        model_json = model_to_json(model)
        artifacts = [Artifact('match_report.json', lambda path: write_report_json(report, path, model=model_json))]
        if svg:
            artifacts.append(Artifact('match.svg', lambda path: plot_clouds(
                path, instanton=state.instanton_cloud, higgs=state.higgs_cloud,
                title=f'{model}: hausdorff {report.hausdorff:.2e}',
            )))
        return CommandResult(artifacts=artifacts, summary=summary_table(report), timings=report.timings)
