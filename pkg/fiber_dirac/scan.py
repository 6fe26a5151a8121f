"""
Instanton spectral curve from fiber operators: grid scan, line frames and
the holonomy of the transported frame connection.
"""
import logging
import time

import numpy as np
from django.conf import settings
from scipy.optimize import minimize_scalar

from curve_model.branching import branch_points
from curve_model.exceptions import NearPuncture, RootFindFailure
from curve_model.sheets import check_puncture_distance, continue_pair, fiber_pair
from torus.conf import LabExecutor, lab_setting
from torus.geometry import nearest_lattice_shift

from .exceptions import BranchTooClose, ConfigurationError, FrameCorrelationLoss, NumericalError
from .models import CloudPoint, CurveCloud, FlatPair
from .operators import assemble_fiber, kernel_frame, kernel_tolerance, shift_frame, sigma_min

logger = logging.getLogger(__name__)

# Each sweep minimises along Re w then Im w; later sweeps bracket a span shrunk by SWEEP_SHRINK.
GOLDEN_SWEEPS = 2
GOLDEN_XTOL = 1e-10
SWEEP_SHRINK = 1e-3


def _workers(workers):
    return max(1, int(workers or settings.LAB_WORKERS))


def _pair_row(model, row):
    """Fiber pairs along one row of the w-grid, each node warm-started from the last."""
    out = np.empty(len(row), dtype=complex)
    guess = None
    for j, w in enumerate(row):
        eta, _ = fiber_pair(model, w, guess=guess)
        out[j] = eta
        guess = eta
    return out


def pairs_on_grid(model, w_grid, workers=None):
    """eta(w) (one member of the pair) at every node of a 2-D w-grid."""
    w_grid = np.atleast_2d(np.asarray(w_grid, dtype=complex))
    with LabExecutor(max_workers=_workers(workers)) as pool:
        rows = list(pool.map(lambda row: _pair_row(model, row), w_grid))
    return np.array(rows)


def sigma_field(model, xi, etas, N):
    """sigma_min of the assembled fiber operator at twist xi over every node of the pair grid."""
    field = np.empty(etas.shape)
    for index in np.ndindex(etas.shape):
        field[index] = sigma_min(assemble_fiber(FlatPair(complex(etas[index]), model.lat), xi, N))
    return field


def _local_minima(values):
    padded = np.pad(values, 1, constant_values=np.inf)
    core = padded[1:-1, 1:-1]
    is_min = np.ones_like(core, dtype=bool)
    for dx in (-1, 0, 1):
        for dy in (-1, 0, 1):
            if dx or dy:
                is_min &= core <= padded[1 + dx:padded.shape[0] - 1 + dx, 1 + dy:padded.shape[1] - 1 + dy]
    return np.argwhere(is_min)


def refine_sheet(model, xi, w0, step, N=8, eta=None):
    """
    Golden-section minimisation of sigma_min(xi, w) started at a coarse node:
    alternating line searches along Re w and Im w. Returns (w, eta, sigma)
    with eta the fiber pair member used at the final w.
    """
    xi = complex(xi)
    last = {'eta': eta}

    def sigma_at(w):
        try:
            eta, _ = fiber_pair(model, w, guess=last['eta'])
        except NumericalError:
            return np.inf
        last['eta'] = eta
        return sigma_min(assemble_fiber(FlatPair(eta, model.lat), xi, N))

    w, span = complex(w0), float(step)
    for _ in range(GOLDEN_SWEEPS):
        for direction in (1.0, 1j):
            # t = 1 is the current w, so the relative xtol of the search acts on the span.
            def along(t, base=w, direction=direction, span=span):
                return sigma_at(base + (t - 1.0) * span * direction)

            try:
                result = minimize_scalar(along, bracket=(0.0, 2.0), method='golden', options={'xtol': GOLDEN_XTOL})
            except (RuntimeError, ValueError) as exc:
                raise RootFindFailure(f'golden search lost its bracket near w={w:.6g}: {exc}') from exc
            w = w + (result.x - 1.0) * span * direction
        span *= SWEEP_SHRINK
    sigma = sigma_at(w)
    if not np.isfinite(sigma):
        raise RootFindFailure(f'fiber pair lost at w={w:.6g}')
    return w, last['eta'], sigma


def _window(w_grid):
    return w_grid.real.min(), w_grid.real.max(), w_grid.imag.min(), w_grid.imag.max()


def _inside(w, window, slack=1e-12):
    re_lo, re_hi, im_lo, im_hi = window
    return re_lo - slack <= w.real <= re_hi + slack and im_lo - slack <= w.imag <= im_hi + slack


def _scan_xi(model, xi, etas, w_grid, step, N, kernel_tol, window):
    hits = []
    sigma = sigma_field(model, xi, etas, N)
    for flat_index in _local_minima(sigma):
        index = tuple(flat_index)
        w0 = w_grid[index]
        try:
            w_star, eta, smallest = refine_sheet(model, xi, w0, step, N=N, eta=complex(etas[index]))
        except RootFindFailure as exc:
            logger.debug('dropped seed w=%s at xi=%s: %s', w0, xi, exc)
            continue
        if abs(w_star - w0) > 2 * step or not _inside(w_star, window):
            continue
        op = assemble_fiber(FlatPair(eta, model.lat), xi, N)
        tol = kernel_tol if kernel_tol is not None else kernel_tolerance(op)
        if smallest >= tol:
            continue
        if any(abs(w_star - w) < 1e-6 * max(1.0, abs(w)) for w, _ in hits):
            continue
        hits.append((w_star, smallest))
    hits.sort(key=lambda hit: abs(hit[0]))
    return [CloudPoint(xi=complex(xi), w=complex(w), sheet=i, sigma=float(s)) for i, (w, s) in enumerate(hits)]


def staggered_grid(w_grid):
    """Cell centres of a rectangular w-grid: a second grid inside the same window sharing no node."""
    w_grid = np.atleast_2d(np.asarray(w_grid, dtype=complex))
    if min(w_grid.shape) < 2:
        raise ConfigurationError(f'a staggered grid needs at least 2 x 2 nodes, got {w_grid.shape}')
    return 0.5 * (w_grid[:-1, :-1] + w_grid[1:, 1:])


def scan_instanton_curve(model, xi_grid, w_grid, tolerances=None, N=8, workers=None, window=None):
    """
    Points (xi, w) where the fiber operator acquires a kernel.

    The coarse field is sigma_min of the assembled operator at every grid
    node; each local minimum in w is refined by golden-section searches and
    kept only if it certifies a singular value below kernel_tol, stays within
    two steps of its seed and lies in ``window`` (re_lo, re_hi, im_lo, im_hi),
    by default the box of ``w_grid``.
    """
    tolerances = tolerances or {}
    radius = tolerances.get('puncture_radius', lab_setting('PUNCTURE_RADIUS'))
    kernel_tol = tolerances.get('kernel_tol')
    started = time.monotonic()

    w_grid = np.atleast_2d(np.asarray(w_grid, dtype=complex))
    window = tuple(window) if window is not None else _window(w_grid)
    step = np.abs(np.diff(w_grid.ravel())).min() if w_grid.size > 1 else 1.0
    xi_values = []
    skipped = 0
    for xi in np.ravel(xi_grid):
        try:
            check_puncture_distance(model, complex(xi), radius)
        except NearPuncture:
            skipped += 1
            continue
        xi_values.append(complex(xi))
    if skipped:
        logger.warning('skipped %d xi nodes inside the puncture disks', skipped)

    etas = pairs_on_grid(model, w_grid, workers)
    with LabExecutor(max_workers=_workers(workers)) as pool:
        per_xi = list(pool.map(
            lambda xi: _scan_xi(model, xi, etas, w_grid, step, N, kernel_tol, window), xi_values,
        ))

    cloud = CurveCloud(
        points=[p for points in per_xi for p in points],
        metadata={
            'N': N,
            'xi_nodes': len(xi_values),
            'w_shape': list(w_grid.shape),
            'w_step': float(step),
            'w_window': [float(bound) for bound in window],
            'puncture_radius': radius,
            'kernel_tol': kernel_tol if kernel_tol is not None else 'relative',
        },
    )
    logger.info('scan: %d xi x %d w nodes, %d curve points in %.1fs',
                len(xi_values), w_grid.size, len(cloud), time.monotonic() - started)
    return cloud


def line_frame(model, point, N=8, phase_seed=None, eta=None):
    """
    Kernel frame at a point (xi, w) of the curve. ``eta`` fixes the lift of
    the fiber pair; by default the member tracking xi itself is used.
    """
    xi, w = (point.xi, point.w) if isinstance(point, CloudPoint) else (complex(point[0]), complex(point[1]))
    if eta is None:
        eta = continue_pair(model, w, xi)
    op = assemble_fiber(FlatPair(eta, model.lat), xi, N)
    return kernel_frame(op, w=w, eta=eta, phase_seed=phase_seed)


def _mode_shift(offset, lat):
    m, n, _ = nearest_lattice_shift(offset, lat)
    return int(m), int(n)


def _step_shifts(start, end, lat):
    """
    Mode offsets carrying a frame at lifts ``start`` = (xi, eta) onto the
    labels of lifts ``end``. Summand c carries xi + s_c*eta with s = (+1, -1);
    kernel modes move opposite to the lift.
    """
    d_xi = _mode_shift(end[0] - start[0], lat)
    d_eta = _mode_shift(end[1] - start[1], lat)
    return [(-(d_xi[0] + d_eta[0]), -(d_xi[1] + d_eta[1])), (-(d_xi[0] - d_eta[0]), -(d_xi[1] - d_eta[1]))]


def gamma_holonomy(model, loop, N=8, margin=None, phase_seed=None):
    """
    Holonomy of the frame connection around a closed polyline of curve points
    [(xi, w), ...]. The xi values need not be lifted continuously: every
    step, the closing one included, moves the earlier frame by the lattice
    gauge transformation between the two lifts before taking the overlap.
    """
    margin = margin if margin is not None else lab_setting('BRANCH_MARGIN')
    points = [(complex(xi), complex(w)) for xi, w in loop]
    if len(points) > 1 and abs(points[-1][0] - points[0][0]) < 1e-12 and abs(points[-1][1] - points[0][1]) < 1e-12:
        points = points[:-1]

    branches = np.array(branch_points(model))
    w_values = np.array([w for _, w in points])
    closest = np.abs(w_values[:, None] - branches[None, :]).min()
    if closest < margin:
        raise BranchTooClose(f'loop passes {closest:.3g} from a branch point (margin {margin})')

    floor = lab_setting('OVERLAP_FLOOR')
    frames = []
    eta = None
    for i, (xi, w) in enumerate(points):
        eta = continue_pair(model, w, xi if eta is None else eta)
        seed = None if phase_seed is None else phase_seed + i
        frames.append(line_frame(model, (xi, w), N=N, phase_seed=seed, eta=eta))

    lifts = [(xi, f.eta) for (xi, _), f in zip(points, frames)]
    product = 1.0 + 0j
    for i, before in enumerate(frames):
        after = frames[(i + 1) % len(frames)]
        moved = shift_frame(before, _step_shifts(lifts[i], lifts[(i + 1) % len(lifts)], model.lat))
        overlap = np.vdot(after.vector, moved)
        if abs(overlap) < floor:
            raise FrameCorrelationLoss(f'frame overlap {abs(overlap):.3f} below {floor} at step {i}')
        product *= overlap
    return product / abs(product)
