import csv
import json
import logging
from pathlib import Path

logger = logging.getLogger(__name__)

CLOUD_COLUMNS = ['xi_re', 'xi_im', 'w_re', 'w_im', 'sigma_min', 'sheet']


def write_cloud_csv(cloud, path, columns=CLOUD_COLUMNS):
    """One row per curve point."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open('w', newline='') as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, extrasaction='ignore')
        writer.writeheader()
        for row in cloud.rows():
            writer.writerow(row)
    logger.info('wrote %d rows to %s', len(cloud), path)
    return path


def write_cloud_json(cloud, path, **extra):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {'points': cloud.rows(), 'metadata': cloud.metadata}
    payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, default=str))
    logger.info('wrote %d points to %s', len(cloud), path)
    return path


def read_cloud_csv(path):
    """Rows back as dicts of floats (sheet as int)."""
    with Path(path).open(newline='') as handle:
        rows = []
        for row in csv.DictReader(handle):
            parsed = {key: float(value) for key, value in row.items() if key != 'sheet'}
            parsed['sheet'] = int(row['sheet'])
            rows.append(parsed)
    return rows
