"""
Fiber-level and connection-level comparison of the two spectral datasets,
and the Fourier-Mukai support of the fiberwise-split bundle.
"""
import logging

import numpy as np
import scipy.linalg
from django.conf import settings

from curve_model.exceptions import NearPuncture, RootFindFailure
from curve_model.sheets import check_puncture_distance, continue_pair
from fiber_dirac.exceptions import NotOnCurve
from fiber_dirac.models import CurveCloud, FlatPair
from fiber_dirac.operators import assemble_fiber, kernel_tolerance, min_singulars, singular_triplets
from fiber_dirac.scan import gamma_holonomy, refine_sheet, scan_instanton_curve, staggered_grid
from higgs_spectral.spectral import chordal_distance, lambda_holonomy
from nahm.models import TransformConfig
from nahm.planar import build_chart
from nahm.transform import kernel_frames, sample_higgs
from torus.conf import LabExecutor
from torus.geometry import reduce

from .exceptions import ConfigurationError
from .models import MatchConfig

logger = logging.getLogger(__name__)


def as_match_config(cfg):
    if isinstance(cfg, MatchConfig):
        return cfg
    if isinstance(cfg, TransformConfig):
        return MatchConfig(transform=cfg, fiber_N=cfg.N)
    raise ConfigurationError(f'expected MatchConfig or TransformConfig, got {type(cfg).__name__}')


def _as_point(point):
    if hasattr(point, 'xi') and hasattr(point, 'w'):
        return complex(point.xi), complex(point.w)
    return complex(point[0]), complex(point[1])


def fiber_lift(transform: TransformConfig, xi, w):
    """
    The fiber pair lift the transformed frames use near w, and the plane
    point their fiber component is read at (the nearest grid node in FULL mode).
    """
    if transform.mode == 'FULL':
        chart = build_chart(transform)
        nodes = chart.w.ravel()
        j = int(np.argmin(np.abs(nodes - w)))
        return complex(chart.eta.ravel()[j]), complex(nodes[j])
    return complex(transform.family.fiber_eta(xi, w)), complex(w)


def fiber_iso_check(model, cfg, point):
    """
    1 - |<r, f>| / peak, where f is the fiber component at w of the frame
    combination picked by the cokernel of Phi(xi) - w, peak its largest
    fiber norm over the plane, and r the fiber operator's weakest singular
    vector at (xi, w). 0 means the two lines agree at this fiber.
    """
    cfg = as_match_config(cfg)
    transform = cfg.transform
    xi, w = _as_point(point)
    frames = kernel_frames(transform, xi, radius=cfg.puncture_radius)
    if frames.k == 0:
        raise ConfigurationError('a rank-0 transform has no frames to restrict')
    u, s, _ = scipy.linalg.svd(frames.higgs() - w * np.eye(frames.k))
    eta, w_fiber = fiber_lift(transform, xi, w)
    restricted, peak = frames.fiber_component(u[:, -1], w_fiber)

    _, vectors = singular_triplets(assemble_fiber(FlatPair(eta, model.lat), xi, transform.N), 1)
    overlap = abs(np.vdot(vectors[:, 0], restricted)) / peak if peak > 0 else 0.0
    defect = max(0.0, 1.0 - float(overlap))
    logger.debug('fiber pairing at (%s, %s): sigma %.2e, defect %.3e', xi, w, s[-1], defect)
    return defect


def instanton_point(model, xi, w, N=8):
    """(xi, w') with w' the point of the instanton curve over xi nearest to w."""
    step = 1e-3 * max(1.0, abs(w))
    try:
        w_star, eta, sigma = refine_sheet(model, xi, w, step, N=N)
    except RootFindFailure as exc:
        raise NotOnCurve(f'no instanton curve point near ({xi:.6g}, {w:.6g})') from exc
    if sigma >= kernel_tolerance(assemble_fiber(FlatPair(eta, model.lat), xi, N)):
        raise NotOnCurve(f'no instanton curve point near ({xi:.6g}, {w:.6g}): sigma {sigma:.2e}')
    return complex(xi), complex(w_star)


def holonomy_pair(model, cfg, loop, sample=None):
    """
    (U_Gamma, U_Lambda) around a loop of Higgs curve points over grid nodes.
    The instanton side follows the same loop with each w moved onto its
    curve. Without ``sample`` the Higgs field is sampled on the loop nodes.
    """
    cfg = as_match_config(cfg)
    points = [_as_point(p) for p in loop]
    if sample is None:
        nodes = list(dict.fromkeys(xi for xi, _ in points))
        sample = sample_higgs(cfg.transform, nodes, workers=cfg.workers, radius=cfg.puncture_radius)
    lam = lambda_holonomy(sample, points, margin=cfg.loop_margin)
    on_curve = [instanton_point(model, xi, w, N=cfg.fiber_N) for xi, w in points]
    gamma = gamma_holonomy(model, on_curve, N=cfg.fiber_N, margin=cfg.loop_margin)
    return complex(gamma), complex(lam)


def holonomy_compare(model, cfg, loop, sample=None):
    """|U_Gamma - U_Lambda| around ``loop``."""
    gamma, lam = holonomy_pair(model, cfg, loop, sample=sample)
    return float(abs(gamma - lam))


def _grid_index(cloud, lat, n):
    x, y = lat.coordinates(np.asarray(reduce(cloud.xi, lat), dtype=complex))
    i = np.rint(x * n - 0.5).astype(int) % n
    j = np.rint(y * n - 0.5).astype(int) % n
    by_node = {}
    for key, point in zip(zip(i.tolist(), j.tolist()), cloud.points):
        if not point.at_infinity:
            by_node.setdefault(key, []).append(point)
    return by_node


def _square(i0, j0, size):
    path = [(i0 + t, j0) for t in range(size)]
    path += [(i0 + size, j0 + t) for t in range(size)]
    path += [(i0 + size - t, j0 + size) for t in range(size)]
    path += [(i0, j0 + size - t) for t in range(size)]
    return path


def _follow(by_node, path, sheet, branches, margin):
    """Points of one sheet along ``path``, or None when the sheet is not usable there."""
    points = []
    for key in path:
        here = by_node.get(key, [])
        chosen = [p for p in here if p.sheet == sheet]
        if len(chosen) != 1:
            return None
        point = chosen[0]
        others = [p.w for p in here if p is not point]
        if others and np.min(np.abs(np.array(others) - point.w)) < margin:
            return None
        if len(branches) and np.min(np.abs(branches - point.w)) < margin:
            return None
        if points:
            candidates = np.array([p.w for p in here])
            if np.argmin(chordal_distance(candidates, points[-1][1])) != here.index(point):
                return None
        points.append((point.xi, point.w))
    return points


def _encloses(i0, j0, size, n, punctures, lat):
    for p in punctures:
        x, y = lat.coordinates(complex(reduce(p, lat)))
        if (i0 + 0.5) / n <= x <= (i0 + size + 0.5) / n and (j0 + 0.5) / n <= y <= (j0 + size + 0.5) / n:
            return True
    return False


def standard_loops(model, cfg, cloud, sizes=None):
    """
    Counterclockwise squares of xi-grid nodes, one per size (in node
    steps), each following a single Higgs sheet. Squares stay inside the
    fundamental domain, keep ``loop_margin`` from other sheets and from the
    branch values, and enclose no puncture; the most central one is taken.
    """
    cfg = as_match_config(cfg)
    lat, n = cfg.lat, cfg.xi_points
    sizes = sizes or cfg.loop_sizes
    by_node = _grid_index(cloud, lat, n)
    branches = np.asarray(cfg.transform.family.branch_points, dtype=complex)
    k = model.k

    loops = []
    for size in sizes:
        corners = [(i, j) for i in range(n - size) for j in range(n - size)]
        corners.sort(key=lambda c: (c[0] + 0.5 * size - 0.5 * (n - 1)) ** 2 + (c[1] + 0.5 * size - 0.5 * (n - 1)) ** 2)
        found = None
        for i0, j0 in corners:
            if _encloses(i0, j0, size, n, model.punctures, lat):
                continue
            for sheet in range(k):
                points = _follow(by_node, _square(i0, j0, size), sheet, branches, cfg.loop_margin)
                if points is not None:
                    found = {'name': f'square-{size}', 'size': size, 'sheet': sheet, 'corner': [i0, j0], 'points': points}
                    break
            if found:
                break
        if found is None:
            logger.warning('no usable square loop of size %d on the %dx%d grid', size, n, n)
            continue
        loops.append(found)
    return loops


def kernel_dimension(model, point, N, kernel_tol=None):
    """Dimension of the fiber operator kernel at a curve point (0, 1 or 2)."""
    xi, w = _as_point(point)
    op = assemble_fiber(FlatPair(continue_pair(model, w, xi), model.lat), xi, N)
    tol = kernel_tol if kernel_tol is not None else kernel_tolerance(op)
    return int(sum(value < tol for value in min_singulars(op, 2)))


def fm_support(model, xi_grid, w_grid, N=8, workers=None, tolerances=None):
    """
    Support of the transform of the fiberwise-split bundle over the grids:
    the points where the fiber cohomology jumps, and rank(xi), the total
    jump over xi inside the w-window. The jumps are searched on the cell
    centres of ``w_grid``, so no node is shared with a scan on ``w_grid``.
    """
    tolerances = tolerances or {}
    kernel_tol = tolerances.get('kernel_tol')
    w_grid = np.atleast_2d(np.asarray(w_grid, dtype=complex))
    cloud = scan_instanton_curve(
        model, xi_grid, staggered_grid(w_grid), tolerances=tolerances, N=N, workers=workers,
        window=(w_grid.real.min(), w_grid.real.max(), w_grid.imag.min(), w_grid.imag.max()),
    )

    with LabExecutor(max_workers=max(1, int(workers or settings.LAB_WORKERS))) as pool:
        dims = list(pool.map(lambda point: kernel_dimension(model, point, N, kernel_tol), cloud.points))

    rank = {}
    radius = tolerances.get('puncture_radius')
    for xi in np.ravel(xi_grid):
        try:
            check_puncture_distance(model, complex(xi), radius)
        except NearPuncture:
            continue
        rank[complex(xi)] = 0
    for point, dim in zip(cloud.points, dims):
        rank[point.xi] = rank.get(point.xi, 0) + dim

    support = CurveCloud(
        points=[p for p, dim in zip(cloud.points, dims) if dim > 0],
        metadata={**cloud.metadata, 'support': True},
    )
    off = sum(1 for r in rank.values() if r != model.k)
    if off:
        logger.info('rank differs from k=%d at %d of %d xi nodes', model.k, off, len(rank))
    return support, rank
