import json
import logging
from pathlib import Path

import numpy as np

from .models import HiggsNode, HiggsSample

logger = logging.getLogger(__name__)


def matrix_to_json(matrix):
    """Row-major [[[re, im], ...], ...]."""
    return [[[float(v.real), float(v.imag)] for v in row] for row in np.asarray(matrix, dtype=complex)]


def matrix_from_json(rows):
    data = np.asarray(rows, dtype=float)
    if data.size == 0:
        return np.zeros((0, 0), dtype=complex)
    return data[..., 0] + 1j * data[..., 1]


def node_to_json(node: HiggsNode):
    return {
        'xi': [node.xi.real, node.xi.imag],
        'phi': matrix_to_json(node.phi),
        'b_x': matrix_to_json(node.b_x),
        'b_y': matrix_to_json(node.b_y),
        'gram_defect': node.gram_defect,
        'frame_residual': node.frame_residual,
    }


def write_higgs_json(sample: HiggsSample, path, **extra):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {'nodes': [node_to_json(n) for n in sample.nodes], 'metadata': sample.metadata}
    payload.update(extra)
    path.write_text(json.dumps(payload, indent=2, default=str))
    logger.info('wrote %d transform nodes to %s', len(sample), path)
    return path


def read_higgs_json(path):
    payload = json.loads(Path(path).read_text())
    nodes = [
        HiggsNode(
            xi=complex(*node['xi']),
            phi=matrix_from_json(node['phi']),
            b_x=matrix_from_json(node['b_x']),
            b_y=matrix_from_json(node['b_y']),
            gram_defect=float(node['gram_defect']),
            frame_residual=float(node['frame_residual']),
        )
        for node in payload['nodes']
    ]
    return HiggsSample(nodes=nodes, metadata=payload.get('metadata', {}))
