"""Curvature checks on the abelian model connection: ASD defect and energy."""
import logging

import numpy as np

from torus.conf import lab_setting
from torus.geometry import pairing_constant

from .exceptions import ConfigurationError
from .families import stencil_derivatives
from .models import TransformConfig

logger = logging.getLogger(__name__)

# Polar panels about the origin: uniform out to the branch points, then geometric.
PANEL_NODES = 6
PANEL_WIDTH = 0.25
PANEL_GROWTH = 1.2
BRANCH_CLEARANCE = 1.0
ANGULAR_NODES = 128

# Cutoff disks around the branch points.
PATCH_RADIUS = 0.5
PATCH_RADIAL = 16
PATCH_ANGULAR = 32


def cauchy_riemann(cfg: TransformConfig, w_region, step=None):
    """(d eta / dw, d eta / d w-bar) at every point of ``w_region`` from a circular stencil."""
    return stencil_derivatives(cfg.family, w_region, step)


def asd_defect(cfg: TransformConfig, w_region, step=None):
    """Sup-norm of the self-dual curvature part, kappa * |d eta / d w-bar|, over the region."""
    branches = np.asarray(cfg.family.branch_points, dtype=complex)
    points = np.ravel(np.asarray(w_region, dtype=complex))
    if branches.size and np.abs(points[:, None] - branches[None, :]).min() < lab_setting('BRANCH_MARGIN'):
        raise ConfigurationError('the region touches a branch point; eta is not single-valued there')
    _, anti = cauchy_riemann(cfg, points, step)
    defect = float(pairing_constant(cfg.lat) * np.abs(anti).max()) if points.size else 0.0
    logger.debug('asd defect over %d points: %.3e', points.size, defect)
    return defect


def curvature_scale(cfg: TransformConfig, w_region, step=None):
    """kappa * sup |d eta / dw|, the anti-self-dual part, for relative comparisons."""
    holo, _ = cauchy_riemann(cfg, np.ravel(w_region), step)
    return float(pairing_constant(cfg.lat) * np.abs(holo).max())


def energy_density(cfg: TransformConfig, w_points):
    """
    |F|^2 integrated over the fiber torus above each point.

    On the summand L_eta the connection is kappa * (eta dz-bar - conj(eta) dz),
    so F = beta - conj(beta) with beta = kappa * d(eta) ^ dz-bar, and
    |dw ^ dz-bar|^2 = 4. The two summands L_eta and L_-eta then give
    16 kappa^2 (|d eta / dw|^2 + |d eta / d w-bar|^2) per unit fiber area.
    """
    holo, anti = cfg.family.derivatives(w_points)
    kappa = pairing_constant(cfg.lat)
    return 16.0 * kappa ** 2 * cfg.lat.area * (np.abs(holo) ** 2 + np.abs(anti) ** 2)


def _smooth_step(t):
    """1 for t <= 1/2, 0 for t >= 1, smooth in between."""
    s = np.clip(2.0 * np.asarray(t, dtype=float) - 1.0, 0.0, 1.0)
    rise = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
    fall = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return fall / (rise + fall)


def _patches(branches, radii):
    """(center, radius) of disjoint cutoff disks, none of them crossing a circle |w| = R."""
    patches = []
    for j, b in enumerate(branches):
        limits = [PATCH_RADIUS]
        limits += [0.45 * abs(b - c) for i, c in enumerate(branches) if i != j]
        limits += [0.9 * abs(R - abs(b)) for R in radii]
        patches.append((b, min(limits)))
    return patches


def _radial_edges(patches, radii):
    top = float(radii.max())
    inner = min(max((abs(b) for b, _ in patches), default=0.0) + BRANCH_CLEARANCE, top)
    pieces = [np.arange(0.0, inner, PANEL_WIDTH), [inner], radii]
    # Resolve every cutoff annulus radially.
    pieces += [np.clip(abs(b) + rho * np.linspace(-1.0, 1.0, 9), 0.0, None) for b, rho in patches]
    if top > inner:
        steps = int(np.ceil(np.log(top / inner) / np.log(PANEL_GROWTH)))
        pieces.append(inner * PANEL_GROWTH ** np.arange(1, steps))
    edges = np.unique(np.concatenate(pieces))
    return edges[edges <= top]


def energy(cfg: TransformConfig, R_list, angular=ANGULAR_NODES):
    """
    Integral of |F|^2 over T x D_R for every R, from energy_density.

    |d eta / dw|^2 blows up like 1 / |w - b| at a branch point b. A smooth
    partition of unity hands a small disk around each branch point to a
    polar rule centred there, where the Jacobian absorbs the singularity;
    the rest of the plane is integrated on polar panels about the origin
    that end on every R.
    """
    radii = np.asarray(R_list, dtype=float)
    if radii.size == 0 or np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ConfigurationError('energy radii must be positive and increasing')
    branches = [complex(b) for b in cfg.family.branch_points]
    patches = _patches(branches, radii)
    if any(rho <= 0 for _, rho in patches):
        raise ConfigurationError('a branch point lies on one of the energy radii')

    totals = np.zeros(radii.size)
    nodes, weights = np.polynomial.legendre.leggauss(PANEL_NODES)
    edges = _radial_edges(patches, radii)
    for lo, hi in zip(edges[:-1], edges[1:]):
        crossing = [rho for b, rho in patches if lo < abs(b) + rho and hi > abs(b) - rho]
        count = max([angular] + [int(np.ceil(8 * np.pi * hi / rho)) for rho in crossing])
        ring = np.exp(2j * np.pi * np.arange(count) / count)
        r = lo + 0.5 * (hi - lo) * (nodes + 1.0)
        cell = 0.5 * (hi - lo) * weights * r * (2 * np.pi / count)
        points = r[:, None] * ring[None, :]
        keep = np.ones(points.shape)
        for b, rho in patches:
            keep -= _smooth_step(np.abs(points - b) / rho)
        live = keep > 0
        density = np.zeros(points.shape)
        if live.any():
            density[live] = energy_density(cfg, points[live])
        totals[radii >= hi - 1e-12] += float(np.sum(cell[:, None] * keep * density))

    nodes, weights = np.polynomial.legendre.leggauss(PATCH_RADIAL)
    ring = np.exp(2j * np.pi * np.arange(PATCH_ANGULAR) / PATCH_ANGULAR)
    for b, rho in patches:
        inside = radii > abs(b)
        if not inside.any():
            continue
        # Outer rings first: the two members of the pair separate away from b.
        r = (0.5 * rho * (nodes + 1.0))[::-1]
        cell = (0.5 * rho * weights)[::-1] * r * _smooth_step(r / rho) * (2 * np.pi / PATCH_ANGULAR)
        points = b + r[:, None] * ring[None, :]
        totals[inside] += float(np.sum(cell[:, None] * energy_density(cfg, points)))

    logger.info('energy: %s', ', '.join(f'R={R:g}: {E:.5g}' for R, E in zip(radii, totals)))
    return [float(v) for v in totals]
