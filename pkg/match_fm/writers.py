import json
import logging
from pathlib import Path

from .models import MatchReport

logger = logging.getLogger(__name__)


def summary_table(report: MatchReport):
    """Plain-text table of the headline numbers of a match report."""
    rows = [
        ('hausdorff (symmetric)', f'{report.hausdorff:.3e}'),
        ('hausdorff S -> C', f'{report.hausdorff_S_to_C:.3e}'),
        ('hausdorff C -> S', f'{report.hausdorff_C_to_S:.3e}'),
    ]
    if report.fm_support_distance is not None:
        rows.append(('FM support distance', f'{report.fm_support_distance:.3e}'))
    rows.append(('rank defects', str(report.metadata.get('rank_defects', 0))))
    for entry in report.fiber_defects:
        xi = complex(*entry['xi'])
        rows.append((f'fiber defect at xi={xi:.3f}', f'{entry["defect"]:.3e}'))
    for loop in report.holonomy:
        rows.append((f'|U_Gamma - U_Lambda| {loop["name"]}', f'{loop["difference"]:.3e}'))

    width = max(len(label) for label, _ in rows)
    lines = [f'{"quantity".ljust(width)}  value', f'{"-" * width}  {"-" * 10}']
    lines += [f'{label.ljust(width)}  {value}' for label, value in rows]
    return '\n'.join(lines)


def write_report_json(report: MatchReport, path, **extra):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = report.as_dict()
    payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, default=str))
    logger.info('wrote match report to %s', path)
    return path
