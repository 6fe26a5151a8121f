"""
Distances between sampled curves in T^ x P^1: flat distance on the dual
torus combined with the chordal distance on the w-sphere.
"""
import logging

import numpy as np
from scipy.spatial import cKDTree

from higgs_spectral.models import sample_lattice
from torus.geometry import reduce

from .exceptions import ConfigurationError, EmptyCloud

logger = logging.getLogger(__name__)

# Lattice translates searched around the fundamental domain.
TRANSLATE_RANGE = range(-2, 3)


def cloud_arrays(cloud):
    """(xi, w) arrays of a curve cloud or of an (xi, w) pair."""
    if hasattr(cloud, 'xi') and hasattr(cloud, 'w'):
        return np.asarray(cloud.xi, dtype=complex).ravel(), np.asarray(cloud.w, dtype=complex).ravel()
    xi, w = cloud
    return np.asarray(xi, dtype=complex).ravel(), np.asarray(w, dtype=complex).ravel()


def sphere_point(w):
    """
    w on the Riemann sphere of diameter 1; Euclidean distance between images
    is the chordal distance |w1 - w2| / sqrt((1 + |w1|^2)(1 + |w2|^2)).
    """
    w = np.asarray(w, dtype=complex)
    finite = np.isfinite(w)
    safe = np.where(finite, w, 0.0)
    scale = 1.0 / (1.0 + np.abs(safe) ** 2)
    out = np.stack([safe.real * scale, safe.imag * scale, np.abs(safe) ** 2 * scale], axis=-1)
    out[~finite] = (0.0, 0.0, 1.0)
    return out


def embed(xi, w, lat, translates=((0, 0),)):
    """Points of R^5 whose Euclidean distances realize the product metric, one block per translate."""
    xi = np.asarray(reduce(np.asarray(xi, dtype=complex), lat), dtype=complex)
    sphere = sphere_point(w)
    blocks = []
    for m, n in translates:
        shifted = xi + m + n * lat.tau
        blocks.append(np.column_stack([shifted.real, shifted.imag, sphere]))
    return np.concatenate(blocks)


def directed_hausdorff(xi_a, w_a, xi_b, w_b, lat):
    """max over a of the distance to the nearest b."""
    translates = [(m, n) for m in TRANSLATE_RANGE for n in TRANSLATE_RANGE]
    tree = cKDTree(embed(xi_b, w_b, lat, translates))
    distances, _ = tree.query(embed(xi_a, w_a, lat))
    return float(distances.max())


def hausdorff(cloud_a, cloud_b, lat=None):
    """
    Directed Hausdorff distances (a -> b, b -> a) between two clouds in the
    product of the flat torus and the chordal sphere. Points at w = inf are
    allowed. ``lat`` defaults to the one recorded in the clouds' metadata.
    """
    xi_a, w_a = cloud_arrays(cloud_a)
    xi_b, w_b = cloud_arrays(cloud_b)
    if not xi_a.size or not xi_b.size:
        raise EmptyCloud(f'cannot compare clouds of {xi_a.size} and {xi_b.size} points')
    if lat is None:
        sources = [c for c in (cloud_a, cloud_b) if 'tau' in getattr(c, 'metadata', {})]
        if not sources:
            raise ConfigurationError('no lattice given and neither cloud records tau')
        lat = sample_lattice(sources[0])
    ab = directed_hausdorff(xi_a, w_a, xi_b, w_b, lat)
    ba = directed_hausdorff(xi_b, w_b, xi_a, w_a, lat)
    logger.debug('hausdorff %d vs %d points: %.3e / %.3e', xi_a.size, xi_b.size, ab, ba)
    return ab, ba
