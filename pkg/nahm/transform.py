"""
Kernel frames, Higgs matrices and the Berry connection of the transformed
bundle over the dual torus.
"""
import logging
import time
from dataclasses import replace

import numpy as np
import scipy.linalg
from django.conf import settings
from scipy.optimize import linear_sum_assignment
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from curve_model.exceptions import NearPuncture
from fiber_dirac.exceptions import ConvergenceFailure
from torus.conf import LabExecutor, lab_setting
from torus.geometry import torus_distance

from .exceptions import ConfigurationError, FrameCorrelationLoss
from .models import HiggsNode, HiggsSample, TransformConfig
from .planar import assemble_planar, zeroth_operator
from .strategies.modes import TRANSFORM_MODES

logger = logging.getLogger(__name__)

DIRECTIONS = {'x': 1.0 + 0j, 'y': 1j}

# Hitchin plaquettes: side PLAQUETTE_SCALE / M on the dual torus, refined with the plane grid.
PLAQUETTE_SCALE = 0.06
HITCHIN_GRIDS = (24, 48, 96)


def check_xi(cfg: TransformConfig, xi, radius=None):
    radius = radius if radius is not None else lab_setting('PUNCTURE_RADIUS')
    for p in cfg.family.punctures:
        if torus_distance(complex(xi), p, cfg.lat) <= radius:
            raise NearPuncture(f'xi={complex(xi):.6g} is inside the puncture disk around {p:.6g}')


def assemble_4d(cfg: TransformConfig, xi):
    """Sparse D* on T x D_R at twist xi (FULL mode only)."""
    if cfg.mode != 'FULL':
        raise ConfigurationError('assemble_4d needs a FULL-mode configuration')
    return assemble_planar(cfg, xi)


def kernel_frames(cfg: TransformConfig, xi, radius=None):
    check_xi(cfg, xi, radius)
    return TRANSFORM_MODES[cfg.mode].frames(cfg, xi)


def higgs_matrix(cfg: TransformConfig, xi):
    """<v_a, w v_b> over the kernel frames at xi."""
    return kernel_frames(cfg, xi).higgs()


def align(before, after):
    """
    Reorder ``after`` so that frame a follows frame a of ``before``, and
    return (overlap, reordered). Raises when the transport degenerates.
    """
    overlap = before.overlap(after)
    if before.k > 1:
        _, order = linear_sum_assignment(-np.abs(overlap))
        after = after.reorder(order)
        overlap = before.overlap(after)
    if before.k:
        smallest = np.linalg.svd(overlap, compute_uv=False).min()
        floor = lab_setting('OVERLAP_FLOOR')
        if smallest < floor:
            raise FrameCorrelationLoss(f'frame overlap {smallest:.3f} below {floor} at xi={before.xi:.6g}')
    return overlap, after


def transport(overlap):
    """Unitary part of a frame overlap matrix."""
    if overlap.size == 0:
        return overlap
    unitary, _ = scipy.linalg.polar(overlap)
    return unitary


def _anti_hermitian(matrix):
    return 0.5 * (matrix - matrix.conj().T)


def _direction(direction):
    if isinstance(direction, str):
        try:
            return DIRECTIONS[direction]
        except KeyError:
            raise ConfigurationError(f'unknown direction {direction!r}') from None
    d = complex(direction)
    if d == 0:
        raise ConfigurationError('direction must be non-zero')
    return d / abs(d)


def _berry(cfg, frames, direction, step, radius=None):
    d = _direction(direction)
    overlap, _ = align(frames, kernel_frames(cfg, frames.xi + step * d, radius))
    if overlap.size == 0:
        return overlap
    return _anti_hermitian(scipy.linalg.logm(transport(overlap)) / step)


def berry_connection(cfg: TransformConfig, xi, direction, step=None):
    """B(d) = log of the transported frame overlap between xi and xi + step*d, over step."""
    return _berry(cfg, kernel_frames(cfg, xi), direction, step or cfg.step)


def _patch_corners(xi_patch, spacing):
    if np.ndim(xi_patch) == 0:
        xi = complex(xi_patch)
        return [xi, xi + spacing, xi + spacing * (1 + 1j), xi + 1j * spacing]
    corners = [complex(c) for c in np.ravel(xi_patch)]
    if len(corners) != 4:
        raise ConfigurationError(f'a patch has 4 corners, got {len(corners)}')
    return corners


def _polygon_area(corners):
    z = np.asarray(corners)
    return 0.5 * abs(np.sum((z.conj() * np.roll(z, -1)).imag))


def plaquette_spacing(cfg: TransformConfig):
    """Side of the xi plaquette matched to the plane grid: PLAQUETTE_SCALE / M."""
    return PLAQUETTE_SCALE / cfg.M


def hitchin_residual(cfg: TransformConfig, xi_patch, spacing=None):
    """
    Frobenius norm of the Hitchin system on one plaquette of the dual torus:
    curvature F_xy - i[Phi, Phi^*] together with the covariant d-bar of Phi,
    both per unit area. Corners run counterclockwise from the base point;
    a scalar patch gets a square of side ``plaquette_spacing(cfg)``.
    """
    corners = _patch_corners(xi_patch, spacing or plaquette_spacing(cfg))
    frames = [kernel_frames(cfg, c) for c in corners]
    overlaps = []
    for i in range(4):
        overlap, after = align(frames[i], frames[(i + 1) % 4])
        if i < 3:
            frames[i + 1] = after
        overlaps.append(overlap)
    # The closing link returns to the first corner in its original order.
    overlaps[3] = frames[3].overlap(frames[0])
    if cfg.k == 0:
        return 0.0

    links = [transport(o) for o in overlaps]
    holonomy = links[0] @ links[1] @ links[2] @ links[3]
    curvature = _anti_hermitian(scipy.linalg.logm(holonomy)) / _polygon_area(corners)

    phi = [f.higgs() for f in frames]
    phi_x = links[0] @ phi[1] @ links[0].conj().T
    back = links[3].conj().T
    phi_y = back @ phi[3] @ back.conj().T
    dx, dy = corners[1] - corners[0], corners[3] - corners[0]
    d1, d3 = phi_x - phi[0], phi_y - phi[0]
    dbar_phi = (d3 * dx - d1 * dy) / (np.conj(dy) * dx - np.conj(dx) * dy)

    commutator = phi[0] @ phi[0].conj().T - phi[0].conj().T @ phi[0]
    moment = curvature - 1j * commutator
    residual = float(np.sqrt(np.linalg.norm(moment) ** 2 + np.linalg.norm(dbar_phi) ** 2))
    logger.debug('hitchin residual at %s: curvature %.3e, dbar %.3e',
                 corners[0], np.linalg.norm(moment), np.linalg.norm(dbar_phi))
    return residual


def hitchin_ladder(cfg: TransformConfig, xi, grids=HITCHIN_GRIDS):
    """
    hitchin_residual at ``xi`` for each plane grid size in ``grids``, the
    plaquette shrinking with the grid. Returns [(M, spacing, residual)].
    """
    rows = []
    for M in grids:
        refined = replace(cfg, M=M)
        spacing = plaquette_spacing(refined)
        rows.append((M, spacing, hitchin_residual(refined, xi, spacing=spacing)))
    logger.info('hitchin ladder at %s: %s', complex(xi), ', '.join(f'M={M}: {r:.3e}' for M, _, r in rows))
    return rows


def h0_proxy(cfg: TransformConfig, xi):
    """Smallest singular value of the twisted d-bar on functions over T x D_R."""
    op = assemble_planar(cfg, xi)
    zeroth = zeroth_operator(op)
    gram = (zeroth.conj().T @ zeroth).tocsc()
    if gram.shape[0] <= lab_setting('DENSE_SVD_LIMIT'):
        smallest = np.linalg.eigvalsh(gram.toarray())[0]
    else:
        rng = np.random.default_rng(lab_setting('SOLVER_SEED'))
        v0 = rng.normal(size=gram.shape[0]) + 1j * rng.normal(size=gram.shape[0])
        shift = -1e-6 * max(op.norm_estimate, 1.0) ** 2
        try:
            values = eigsh(gram, k=1, sigma=shift, which='LM', v0=v0, return_eigenvectors=False)
        except ArpackNoConvergence as exc:
            raise ConvergenceFailure(f'Lanczos did not converge for {gram.shape[0]} coordinates') from exc
        smallest = values.min()
    return float(np.sqrt(max(smallest, 0.0)))


def _sample_node(cfg, xi, radius):
    frames = kernel_frames(cfg, xi, radius)
    gram = frames.gram()
    return HiggsNode(
        xi=complex(xi),
        phi=frames.higgs(),
        b_x=_berry(cfg, frames, 'x', cfg.step, radius),
        b_y=_berry(cfg, frames, 'y', cfg.step, radius),
        gram_defect=float(np.abs(gram - np.eye(frames.k)).max()) if frames.k else 0.0,
        frame_residual=float(np.max(frames.residuals)) if frames.k else 0.0,
    )


def sample_higgs(cfg: TransformConfig, xi_grid, workers=None, radius=None):
    """
    Higgs matrix and Berry samples at every grid node outside the puncture
    disks. ``radius`` overrides PUNCTURE_RADIUS, e.g. for radial probes.
    """
    started = time.monotonic()
    xi_values, skipped = [], 0
    for xi in np.ravel(xi_grid):
        try:
            check_xi(cfg, xi, radius)
        except NearPuncture:
            skipped += 1
            continue
        xi_values.append(complex(xi))
    if skipped:
        logger.warning('skipped %d xi nodes inside the puncture disks', skipped)

    workers = max(1, int(workers or settings.LAB_WORKERS))
    with LabExecutor(max_workers=workers) as pool:
        nodes = list(pool.map(lambda xi: _sample_node(cfg, xi, radius), xi_values))

    sample = HiggsSample(nodes=nodes, metadata={**cfg.describe(), 'xi_nodes': len(nodes), 'skipped': skipped})
    logger.info('transform (%s): %d nodes in %.1fs', cfg.mode, len(nodes), time.monotonic() - started)
    return sample
