import csv
import json
import logging
from pathlib import Path

from .models import HiggsCurveCloud

logger = logging.getLogger(__name__)

CURVE_COLUMNS = ['xi_re', 'xi_im', 'w_re', 'w_im', 'sheet', 'cond']


def write_curve_csv(cloud: HiggsCurveCloud, path):
    """One row per eigenvalue; points at infinity leave w empty."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=CURVE_COLUMNS)
        writer.writeheader()
        for row in cloud.rows():
            writer.writerow({key: '' if value is None else value for key, value in row.items()})
    logger.info('wrote %d eigenvalues to %s', len(cloud), path)
    return path


def read_curve_csv(path):
    rows = []
    with Path(path).open(newline='') as handle:
        for row in csv.DictReader(handle):
            parsed = {key: (float(value) if value != '' else None) for key, value in row.items() if key != 'sheet'}
            parsed['sheet'] = int(row['sheet'])
            rows.append(parsed)
    return rows


def branch_point_rows(points):
    return [
        {'xi': [b.xi.real, b.xi.imag], 'w': [b.w.real, b.w.imag], 'winding': b.winding, 'discriminant': b.discriminant}
        for b in points
    ]


def write_curve_json(cloud: HiggsCurveCloud, path, branch_points=(), poles=(), **extra):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        'points': cloud.rows(),
        'branch_points': branch_point_rows(branch_points),
        'poles': [report.as_dict() for report in poles],
        'metadata': cloud.metadata,
    }
    payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, default=str))
    logger.info('wrote %d eigenvalues, %d branch points to %s', len(cloud), len(branch_points), path)
    return path
