"""Argument-principle certificates and a grid + Newton zero finder on the torus."""
import logging

import numpy as np

from .conf import lab_setting
from .exceptions import RootFindFailure
from .geometry import fundamental_grid, reduce, torus_distance
from .models import Lattice

logger = logging.getLogger(__name__)


def winding_number(values):
    """Winding number of a closed sampled curve of nonzero complex values."""
    phase = np.unwrap(np.angle(np.asarray(values)))
    return (phase[-1] - phase[0]) / (2 * np.pi)


def count_zeros(f, lat: Lattice, samples=800, shift=0.1234 + 0.0567j):
    """
    Number of zeros of a theta-type section inside a shifted fundamental
    parallelogram, by the winding of f along its boundary.
    """
    t = np.linspace(0.0, 1.0, samples, endpoint=False)
    corners = [shift, shift + 1, shift + 1 + lat.tau, shift + lat.tau, shift]
    path = np.concatenate([a + (b - a) * t for a, b in zip(corners[:-1], corners[1:])] + [np.array([shift])])
    return int(round(winding_number(f(path))))


def count_zeros_in_disk(f, center, radius, samples=256):
    t = np.linspace(0.0, 2 * np.pi, samples + 1)
    return int(round(winding_number(f(center + radius * np.exp(1j * t)))))


def newton(f, df, z0, max_iter=None, tol=None, damping=1.0, max_step=0.25):
    """Damped complex Newton iteration; returns (root, converged)."""
    max_iter = max_iter or lab_setting('NEWTON_MAX_ITER')
    tol = tol or lab_setting('NEWTON_TOL')
    z = complex(z0)
    for _ in range(max_iter):
        fz = complex(f(z))
        dfz = complex(df(z))
        if dfz == 0:
            return z, False
        step = damping * fz / dfz
        if abs(step) > max_step:
            step *= max_step / abs(step)
        z -= step
        if abs(step) < tol * max(1.0, abs(z)):
            return z, True
    return z, abs(complex(f(z))) < 1e-9


def find_zeros(f, df, lat: Lattice, degree, modulus, grid=None):
    """
    Zeros of a degree-``degree`` section in the fundamental domain.

    ``modulus(values, z)`` must be doubly periodic (see
    ThetaBasis.periodic_modulus) so grid minima wrap around the edges.
    Returns a list of (zero, multiplicity) with multiplicities summing to
    ``degree``; raises RootFindFailure otherwise.
    """
    grid = grid or lab_setting('ZERO_GRID')
    z = fundamental_grid(lat, grid)
    h = modulus(f(z), z)

    is_min = np.ones_like(h, dtype=bool)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx == 0 and dy == 0:
                continue
            is_min &= h <= np.roll(np.roll(h, dx, axis=0), dy, axis=1)
    seeds = z[is_min]
    seeds = seeds[np.argsort(h[is_min])]

    roots = []
    for seed in seeds:
        root, ok = newton(f, df, seed)
        if not ok:
            continue
        root = complex(reduce(root, lat))
        if any(torus_distance(root, r, lat) < 1e-7 for r, _ in roots):
            continue
        roots.append((root, 1))
        if len(roots) >= degree:
            break

    radius = lab_setting('MULTIPLICITY_RADIUS')
    total = 0
    certified = []
    for root, _ in roots:
        if any(torus_distance(root, r, lat) < radius for r, _ in certified):
            continue
        mult = max(count_zeros_in_disk(f, root, radius), 1)
        certified.append((root, mult))
        total += mult
    if total != degree:
        raise RootFindFailure(f'expected {degree} zeros, recovered {total} ({len(roots)} distinct)')
    logger.debug('found %d zeros from %d grid seeds', len(certified), len(seeds))
    return certified
