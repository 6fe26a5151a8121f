import time

from curve_model.branching import branch_points, branch_table, xi_branch_points
from curve_model.exceptions import CountMismatch
from curve_model.serializers import model_to_json
from curve_model.sheets import asymptotic_state, sheet_graph

from lab.base import Artifact, CommandResult, LabCommand
from lab.plots import plot_curve_slice
from lab.writers import pair, write_json, write_table_csv

BRANCH_COLUMNS = ['w_re', 'w_im', 'xi_re', 'xi_im', 'simple', 'winding']


def curve_payload(model, xi_grid):
    """Oracle curve samples, branch points, genus and smoothness of a model."""
    table = branch_table(model)
    points = sorted((row['w'] for row in table), key=abs)
    genus = genus_over_xi = None
    xi_branches = []
    try:
        points = branch_points(model)
        xi_branches = xi_branch_points(model)
        # Riemann-Hurwitz for the double cover of P^1 and the k-fold cover of the dual torus.
        genus, genus_over_xi = len(points) // 2 - 1, len(xi_branches) // 2 + 1
        smooth = True
    except CountMismatch:
        smooth = False
    eta, _ = asymptotic_state(model)
    return {
        'model': model_to_json(model),
        'smooth': smooth,
        'genus': genus,
        'genus_over_xi': genus_over_xi,
        'branch_points': [pair(w) for w in points],
        'xi_branch_points': [pair(xi) for xi in xi_branches],
        'asymptotic_state': [pair(eta), pair(-eta)],
        'samples': [{'xi': pair(xi), 'w': pair(w), 'sheet': index} for xi, w, index in sheet_graph(model, xi_grid)],
    }, table


class Command(LabCommand):
    help = 'Model spectral curve: samples, branch points, genus and smoothness (curve.json, branch.csv)'

    def compute(self, run, workers, svg, out):
        started = time.monotonic()
        model = run.build_model()
        payload, table = curve_payload(model, run.xi_grid(model))
        rows = [
            {'w_re': row['w'].real, 'w_im': row['w'].imag, 'xi_re': row['xi'].real, 'xi_im': row['xi'].imag,
             'simple': row['simple'], 'winding': row['winding']}
            for row in table
        ]
        artifacts = [
            Artifact('curve.json', lambda path: write_json(path, payload)),
            Artifact('branch.csv', lambda path: write_table_csv(path, BRANCH_COLUMNS, rows)),
        ]
        if svg:
            artifacts.append(Artifact('curve.svg', lambda path: plot_curve_slice(model, path)))
        summary = (
            f'k={model.k}: {len(table)} branch points, genus {payload["genus"]}'
            f' (over xi: {payload["genus_over_xi"]}), smooth={payload["smooth"]}'
        )
        return CommandResult(artifacts=artifacts, summary=summary, timings={'curve': time.monotonic() - started})
