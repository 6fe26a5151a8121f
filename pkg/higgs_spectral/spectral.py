"""
Spectral data of a sampled Higgs field: the eigenvalue curve over the dual
torus, the cokernel line bundle with its induced connection, and the pole
and branch structure of the curve.
"""
import logging
import time
from collections import deque

import numpy as np
import scipy.linalg
from django.conf import settings
from scipy.optimize import linear_sum_assignment

from torus.conf import LabExecutor, lab_setting
from torus.exceptions import NumericalError
from torus.geometry import nearest_lattice_shift, torus_distance
from torus.zeros import newton

from .exceptions import (
    BranchTooClose, ConfigurationError, EigenvalueNotSimple, FrameCorrelationLoss, NotOnCurve, ProbeTooShort,
    SheetTrackingAmbiguous,
)
from .models import (
    AT_INFINITY, UNASSIGNED, CokernelFrame, CurvePoint, HiggsBranchPoint, HiggsCurveCloud, PoleReport,
    sample_lattice, sample_punctures,
)

logger = logging.getLogger(__name__)

# Grid neighbours lie within this multiple of the smallest node spacing.
NEIGHBOUR_FACTOR = 1.5
# A match is accepted when every rival is at least this much farther away.
TRACKING_MARGIN = 2.0
# Cells the sample leaves uncovered are re-examined on this many subcells a side.
SUBDIVISIONS = 8


def _workers(workers):
    return max(1, int(workers or settings.LAB_WORKERS))


def chordal_distance(a, b):
    """|a - b| / sqrt((1 + |a|^2)(1 + |b|^2)) on the Riemann sphere; inf is the point at infinity."""
    a, b = np.broadcast_arrays(np.asarray(a, dtype=complex), np.asarray(b, dtype=complex))
    finite_a, finite_b = np.isfinite(a), np.isfinite(b)
    with np.errstate(invalid='ignore', over='ignore', divide='ignore'):
        both = np.abs(a - b) / np.sqrt((1 + np.abs(a) ** 2) * (1 + np.abs(b) ** 2))
        to_a = 1.0 / np.sqrt(1 + np.abs(a) ** 2)
        to_b = 1.0 / np.sqrt(1 + np.abs(b) ** 2)
    out = np.where(finite_a & finite_b, np.nan_to_num(both), 0.0)
    out = np.where(finite_a & ~finite_b, to_a, out)
    out = np.where(~finite_a & finite_b, to_b, out)
    return float(out) if out.ndim == 0 else out


def _eigen(phi):
    """Eigenvalues and condition numbers 1/|<l, r>| of unit left and right eigenvectors."""
    if phi.shape[0] == 0:
        return np.array([], dtype=complex), np.array([])
    values, left, right = scipy.linalg.eig(phi, left=True, right=True)
    left = left / np.linalg.norm(left, axis=0)
    right = right / np.linalg.norm(right, axis=0)
    overlap = np.abs(np.sum(left.conj() * right, axis=0))
    return values, 1.0 / np.maximum(overlap, 1e-300)


def _node_spacing(xi, lat):
    if len(xi) < 2:
        return np.inf, np.full((len(xi), len(xi)), np.inf)
    distance = np.asarray(torus_distance(xi[:, None], xi[None, :], lat))
    np.fill_diagonal(distance, np.inf)
    return float(distance.min()), distance


def _seed_labels(values):
    labels = np.empty(len(values), dtype=int)
    labels[np.lexsort((values.imag, values.real))] = np.arange(len(values))
    return labels


def _match(previous, current):
    """match[a] = index in ``previous`` continued by current[a], or None when ambiguous."""
    cost = chordal_distance(current[:, None], previous[None, :])
    rows, cols = linear_sum_assignment(cost)
    for a, b in zip(rows, cols):
        rivals = np.delete(cost[a], b)
        if rivals.size and rivals.min() < TRACKING_MARGIN * cost[a, b] + 1e-12:
            return None
    match = np.empty(len(current), dtype=int)
    match[rows] = cols
    return match


def track_sheets(values, xi, lat):
    """
    Sheet labels per node by nearest-neighbour continuation over the grid.
    Each connected component is seeded at its best separated node; nodes
    that no neighbour continues unambiguously stay UNASSIGNED.
    """
    n = len(values)
    k = len(values[0]) if n else 0
    labels = np.full((n, k), UNASSIGNED, dtype=int)
    if k <= 1:
        labels[:] = 0
        return labels, min(n, 1)

    spacing, distance = _node_spacing(xi, lat)
    neighbours = [np.flatnonzero(row <= NEIGHBOUR_FACTOR * spacing) for row in distance]
    separation = []
    for v in values:
        pairwise = chordal_distance(v[:, None], v[None, :]) + np.diag(np.full(k, np.inf))
        separation.append(pairwise.min())

    tried = np.zeros(n, dtype=bool)
    components = 0
    while True:
        fresh = [i for i in range(n) if labels[i, 0] == UNASSIGNED and not tried[i]]
        if not fresh:
            break
        seed = max(fresh, key=lambda i: separation[i])
        labels[seed] = _seed_labels(values[seed])
        tried[seed] = True
        components += 1
        queue = deque([seed])
        while queue:
            i = queue.popleft()
            for j in neighbours[i]:
                if labels[j, 0] != UNASSIGNED:
                    continue
                tried[j] = True
                match = _match(values[i], values[j])
                if match is None:
                    continue
                labels[j] = labels[i][match]
                queue.append(j)
    return labels, components


def eigen_curve(sample, workers=None, strict=False, lat=None):
    """
    All eigenvalues of Phi[xi] at every node, sheet-tracked from a seed
    node. Near branch points tracking may fail; those points keep
    sheet = UNASSIGNED, or SheetTrackingAmbiguous is raised when ``strict``.
    """
    started = time.monotonic()
    nodes = list(sample.nodes)
    if not nodes:
        raise ConfigurationError('the Higgs sample has no nodes')
    k = nodes[0].k
    if any(node.k != k for node in nodes):
        raise ConfigurationError('Higgs sample mixes matrices of different rank')
    lat = lat or sample_lattice(sample)

    with LabExecutor(max_workers=_workers(workers)) as pool:
        spectra = list(pool.map(lambda node: _eigen(node.phi), nodes))
    values = [v for v, _ in spectra]
    labels, components = track_sheets(values, sample.xi, lat)

    unassigned = int(np.count_nonzero(labels[:, 0] == UNASSIGNED)) if k else 0
    if components > 1:
        logger.warning('sheet tracking split the grid into %d components', components)
    if unassigned:
        message = f'{unassigned} of {len(nodes)} nodes have ambiguous sheets (branch points nearby)'
        if strict:
            raise SheetTrackingAmbiguous(message)
        logger.warning(message)

    points = [
        CurvePoint(xi=node.xi, w=complex(w), sheet=int(label), cond=float(cond))
        for node, (vals, conds), row in zip(nodes, spectra, labels)
        for w, cond, label in zip(vals, conds, row)
    ]
    cloud = HiggsCurveCloud(points=points, metadata={
        **sample.metadata, 'k': k, 'xi_nodes': len(nodes), 'unassigned': unassigned, 'components': components,
    })
    logger.info('eigen curve: %d points over %d nodes in %.2fs', len(cloud), len(nodes), time.monotonic() - started)
    return cloud


def symmetry_defect(cloud: HiggsCurveCloud, lat=None):
    """Largest mismatch between the eigenvalues over xi and over -xi, across nodes present at both."""
    lat = lat or sample_lattice(cloud)
    bases = np.unique(cloud.xi)
    worst = 0.0
    for xi in bases:
        partner = bases[np.asarray(torus_distance(bases, -xi, lat)) < 1e-9]
        if not partner.size:
            continue
        here = np.array([p.w for p in cloud.over(xi)])
        there = np.array([p.w for p in cloud.over(partner[0])])
        rows, cols = linear_sum_assignment(np.abs(here[:, None] - there[None, :]))
        worst = max(worst, float(np.abs(here[rows] - there[cols]).max(initial=0.0)))
    return worst


def compactify(cloud: HiggsCurveCloud, punctures=None, lat=None):
    """The cloud with the points (+-xi0, infinity) added."""
    punctures = punctures if punctures is not None else sample_punctures(cloud)
    if len(punctures) == 2:
        lat = lat or sample_lattice(cloud)
        if torus_distance(punctures[0], punctures[1], lat) < 1e-10:
            raise ConfigurationError('xi0 = -xi0: the double point at infinity is not supported')
    extra = [CurvePoint(xi=complex(p), w=complex(np.inf, 0.0), sheet=AT_INFINITY, cond=1.0) for p in punctures]
    return HiggsCurveCloud(points=list(cloud.points) + extra, metadata={**cloud.metadata, 'compactified': True})


def _point(point):
    if hasattr(point, 'xi') and hasattr(point, 'w'):
        return complex(point.xi), complex(point.w)
    return complex(point[0]), complex(point[1])


def _node(sample, xi):
    try:
        return sample.node_at(xi, tol=1e-9)
    except KeyError:
        raise ConfigurationError(f'xi={xi:.6g} is not a node of the Higgs sample') from None


def cokernel_frame(phi, xi, w, tol=None, phase_seed=None):
    k = phi.shape[0]
    if k == 0:
        raise ConfigurationError('a rank-0 Higgs field has no cokernel')
    tol = tol if tol is not None else lab_setting('KERNEL_TOL') * max(1.0, np.linalg.norm(phi, 2))
    shifted = phi - w * np.eye(k)
    u, s, _ = scipy.linalg.svd(shifted)
    if s[-1] > tol:
        raise NotOnCurve(f'w={w:.6g} is not an eigenvalue at xi={xi:.6g} (sigma_min {s[-1]:.3e} > {tol:.3e})')
    if k > 1 and s[-2] <= 2 * tol:
        raise EigenvalueNotSimple(f'eigenvalue {w:.6g} at xi={xi:.6g} is not simple (sigma_2 {s[-2]:.3e})')

    vector = u[:, -1]
    pivot = vector[np.argmax(np.abs(vector))]
    vector = vector * (np.conj(pivot) / abs(pivot))
    phase = 'max-real'
    if phase_seed is not None:
        vector = vector * np.exp(1j * np.random.default_rng(phase_seed).uniform(0, 2 * np.pi))
        phase = f'random:{phase_seed}'
    residual = float(np.linalg.norm(shifted.conj().T @ vector))
    return CokernelFrame(xi=complex(xi), w=complex(w), vector=vector, residual=residual, phase=phase)


def coker_frame(sample, point, tol=None, phase_seed=None):
    """Unit left-null vector of Phi[xi] - w at a point (xi, w) of the eigenvalue curve."""
    xi, w = _point(point)
    return cokernel_frame(_node(sample, xi).phi, xi, w, tol=tol, phase_seed=phase_seed)


def _basis_order(phi_a, phi_b):
    """
    order[i] = frame of node b continuing frame i of node a. Node frames may
    come back permuted; the Higgs diagonal tells which permutation.
    """
    k = phi_a.shape[0]
    identity = np.arange(k)
    if k < 2:
        return identity
    cost = np.abs(np.diag(phi_a)[:, None] - np.diag(phi_b)[None, :])
    _, cols = linear_sum_assignment(cost)
    if cost[identity, cols].sum() < 0.5 * np.trace(cost):
        return cols
    return identity


def lambda_holonomy(sample, loop, margin=None, phase_seed=None, lat=None):
    """
    Holonomy of the cokernel line bundle around a closed loop of curve points
    over adjacent grid nodes. Each step moves the cokernel frame with the
    sampled Berry connection (trapezoid rule between the two nodes) and
    projects it onto the next cokernel line.
    """
    margin = margin if margin is not None else lab_setting('BRANCH_MARGIN')
    lat = lat or sample_lattice(sample)
    points = [_point(p) for p in loop]
    if len(points) > 1 and abs(points[-1][0] - points[0][0]) < 1e-12 and abs(points[-1][1] - points[0][1]) < 1e-12:
        points = points[:-1]
    if len(points) < 2:
        return 1.0 + 0j

    nodes = [_node(sample, xi) for xi, _ in points]
    spacing, _ = _node_spacing(np.unique(sample.xi), lat)
    for (xi, w), node in zip(points, nodes):
        others = np.sort(np.abs(np.linalg.eigvals(node.phi) - w))[1:]
        if others.size and others[0] < margin:
            raise BranchTooClose(f'loop point ({xi:.4g}, {w:.4g}) is {others[0]:.3g} from another sheet')

    frames = [
        cokernel_frame(node.phi, xi, w, phase_seed=None if phase_seed is None else phase_seed + i)
        for i, ((xi, w), node) in enumerate(zip(points, nodes))
    ]
    floor = lab_setting('OVERLAP_FLOOR')
    product = 1.0 + 0j
    for i in range(len(points)):
        j = (i + 1) % len(points)
        _, _, step = nearest_lattice_shift(points[j][0] - points[i][0], lat)
        step = complex(step)
        if abs(step) > NEIGHBOUR_FACTOR * spacing:
            raise ConfigurationError(f'loop step {points[i][0]:.4g} -> {points[j][0]:.4g} skips grid nodes')
        order = _basis_order(nodes[i].phi, nodes[j].phi)
        reorder = np.ix_(order, order)
        b_x = 0.5 * (nodes[i].b_x + nodes[j].b_x[reorder])
        b_y = 0.5 * (nodes[i].b_y + nodes[j].b_y[reorder])
        carried = scipy.linalg.expm(step.real * b_x + step.imag * b_y).conj().T @ frames[i].vector
        factor = np.vdot(frames[j].vector[order], carried)
        if abs(factor) < floor:
            raise FrameCorrelationLoss(f'cokernel overlap {abs(factor):.3f} below {floor} at xi={points[j][0]:.6g}')
        product *= factor
    return product / abs(product)


def radial_probe(center, reach=0.3, closest=3e-3, count=12, angle=0.3):
    """Nodes on a ray towards ``center``, geometrically spaced from ``reach`` down to ``closest``."""
    return complex(center) + np.geomspace(reach, closest, count) * np.exp(1j * angle)


def _puncture(sample, which):
    if isinstance(which, str):
        punctures = sample_punctures(sample)
        names = {'xi0': 0, '+xi0': 0, '-xi0': 1}
        if not punctures or which not in names:
            raise ConfigurationError(f'cannot locate puncture {which!r} from the sample metadata')
        return punctures[names[which]]
    return complex(which)


def pole_analysis(sample, which='xi0', reach=0.3, min_nodes=4, lat=None):
    """
    Pole order of Phi at a puncture (log-log slope of ||Phi|| against the
    distance) and its residue: (xi - xi0) * Phi is extrapolated to xi0 and
    its singular values are thresholded at RESIDUE_RANK_RATIO. Fitting the
    matrix rather than its sorted singular values keeps the extrapolation
    smooth when two of them cross along the ray. The residue is
    semisimple when it is invertible on its own image.
    """
    center = _puncture(sample, which)
    lat = lat or sample_lattice(sample)
    _, _, offsets = nearest_lattice_shift(sample.xi - center, lat)
    distance = np.abs(offsets)
    inside = np.flatnonzero((distance <= reach) & (distance > 0))
    inside = inside[np.argsort(distance[inside])]
    if inside.size < min_nodes:
        raise ProbeTooShort(f'{inside.size} probe nodes within {reach} of {center:.4g}, need {min_nodes}')
    if distance[inside[-1]] < 2 * distance[inside[0]]:
        raise ProbeTooShort('probe distances must span at least a factor of 2')

    inner = inside[:max(min_nodes, inside.size // 2)]
    phis = [sample.nodes[i].phi for i in inner]
    k = phis[0].shape[0]
    d = distance[inner]
    ratio = lab_setting('RESIDUE_RANK_RATIO')
    if k == 0:
        return PoleReport(center, 0.0, 0, True, (), int(inner.size), float(d[0]))

    norms = np.maximum([np.linalg.norm(phi, 2) for phi in phis], 1e-300)
    order = float(-np.polyfit(np.log(d), np.log(norms), 1)[0])

    # (xi - xi0) * Phi in the frame order of the closest node, fitted as a
    # polynomial in xi - xi0; its constant term is the residue.
    scaled = [offsets[i] * phi for i, phi in zip(inner, phis)]
    aligned = []
    for matrix in scaled:
        ordering = _basis_order(scaled[0], matrix)
        aligned.append(matrix[np.ix_(ordering, ordering)])
    degree = min(2, inner.size - 2)
    design = np.vander(offsets[inner], degree + 1, increasing=True)
    fit = np.linalg.lstsq(design, np.array(aligned).reshape(inner.size, k * k), rcond=None)[0]
    residue = fit[0].reshape(k, k)
    s = np.linalg.svd(residue, compute_uv=False)
    if s[0] <= ratio * max(np.linalg.norm(m, 2) for m in scaled):
        rank = 0
    else:
        rank = int(np.count_nonzero(s >= ratio * s[0]))

    semisimple = True
    if rank:
        u, _, _ = np.linalg.svd(residue)
        image = u[:, :rank]
        restricted = image.conj().T @ residue @ image
        semisimple = bool(np.linalg.svd(restricted, compute_uv=False).min() >= ratio * s[0])

    report = PoleReport(
        xi=center, order=order, residue_rank=rank, semisimple=semisimple,
        residue_singular_values=tuple(float(v) for v in s),
        probe_nodes=int(inner.size), closest=float(d[0]),
    )
    logger.info('pole at %s: order %.3f, residue rank %d%s', center, order, rank, '' if semisimple else ' (nilpotent part)')
    return report


def discriminant(phi):
    """prod_{i<j} (lambda_i - lambda_j)^2 over the eigenvalues of phi."""
    values = np.linalg.eigvals(phi)
    i, j = np.triu_indices(len(values), 1)
    return complex(np.prod((values[i] - values[j]) ** 2))


def _grid(sample, lat):
    """Node indices on the rectangular lattice-coordinate grid the sample was taken on."""
    x, y = lat.coordinates(sample.xi)
    x, y = np.round(np.mod(x, 1.0), 9) % 1.0, np.round(np.mod(y, 1.0), 9) % 1.0
    xs, ys = np.unique(x), np.unique(y)
    index = np.full((len(xs), len(ys)), -1, dtype=int)
    index[np.searchsorted(xs, x), np.searchsorted(ys, y)] = np.arange(len(x))

    def periodic(axis):
        if len(axis) < 3:
            return False
        steps = np.diff(axis)
        return abs(axis[0] + 1.0 - axis[-1] - np.median(steps)) < 1e-6

    return xs, ys, index, periodic(xs), periodic(ys)


def _field_k1(values, xs, ys, wrap_x):
    """d(phi)/d(xi) along the real lattice direction, by grid differences."""
    if wrap_x:
        h = xs[1] - xs[0]
        return (np.roll(values, -1, axis=0) - np.roll(values, 1, axis=0)) / (2 * h)
    return np.gradient(values, xs, axis=0)


def _winding(corners):
    if np.any(~np.isfinite(corners)):
        return 0
    if np.any(corners == 0):
        return None
    turns = np.angle(np.roll(corners, -1) / corners)
    return int(np.rint(turns.sum() / (2 * np.pi)))


def _refined_windings(evaluate_field, positions, subdivisions):
    """
    Zeros of the field inside a grid cell the sample does not cover, from
    windings around an evaluated subdivision. A subcell only counts when
    Newton's method finds a zero inside it, since a pole next to a corner
    can fake a winding.
    """
    origin = complex(positions[0])
    ex, ey = complex(positions[1]) - origin, complex(positions[3]) - origin
    t = np.arange(subdivisions + 1) / subdivisions
    grid = origin + t[:, None] * ex + t[None, :] * ey
    values = np.full(grid.shape, np.nan + 0j)
    for index in np.ndindex(grid.shape):
        try:
            values[index] = evaluate_field(complex(grid[index]))
        except NumericalError:
            continue
    size = max(abs(ex), abs(ey)) / subdivisions
    hits = []
    for p in range(subdivisions):
        for q in range(subdivisions):
            rows, cols = [p, p + 1, p + 1, p], [q, q, q + 1, q + 1]
            winding = _winding(values[rows, cols])
            if not winding or winding < 0:
                continue
            centre = complex(grid[rows, cols].mean())
            h = 1e-4 * size
            root, converged = newton(
                evaluate_field, lambda z: (evaluate_field(z + h) - evaluate_field(z - h)) / (2 * h), centre,
                max_step=size,
            )
            if converged and abs(root - centre) < size:
                hits.append((complex(root), winding))
    return hits


def higgs_branch_points(sample, evaluate=None, lat=None):
    """
    Points (xi_b, w_b) where eigenvalues of Phi collide: zeros of the
    discriminant, located by its winding around every grid cell and refined
    by Newton's method when ``evaluate(xi) -> Phi`` is available. For k = 1
    the critical points of the single eigenvalue are reported instead.
    """
    nodes = list(sample.nodes)
    if not nodes or nodes[0].k == 0:
        return []
    k = nodes[0].k
    lat = lat or sample_lattice(sample)
    xs, ys, index, wrap_x, wrap_y = _grid(sample, lat)
    spacing = min(np.diff(xs).min(initial=1.0), np.diff(ys).min(initial=1.0))

    if k == 1:
        raw = np.full(index.shape, np.nan + 0j)
        raw[index >= 0] = [nodes[i].phi[0, 0] for i in index[index >= 0]]
        field = _field_k1(raw, xs, ys, wrap_x)

        def evaluate_field(xi, h=1e-4):
            return (evaluate(xi + h)[0, 0] - evaluate(xi - h)[0, 0]) / (2 * h)
    else:
        field = np.full(index.shape, np.nan + 0j)
        field[index >= 0] = [discriminant(nodes[i].phi) for i in index[index >= 0]]

        def evaluate_field(xi):
            return discriminant(evaluate(xi))

    scale = max(np.linalg.norm(node.phi, 2) for node in nodes) ** max(k * (k - 1), 1)
    threshold = lab_setting('DISCRIMINANT_TOL') * scale
    found = []

    def corner(p, q):
        dx = 1.0 if p == len(xs) else 0.0
        dy = 1.0 if q == len(ys) else 0.0
        return (p % len(xs), q % len(ys)), lat.point(xs[p % len(xs)] + dx, ys[q % len(ys)] + dy)

    cells_x = len(xs) if wrap_x else len(xs) - 1
    cells_y = len(ys) if wrap_y else len(ys) - 1
    for p in range(cells_x):
        for q in range(cells_y):
            keys, positions = zip(*(corner(a, b) for a, b in ((p, q), (p + 1, q), (p + 1, q + 1), (p, q + 1))))
            values = np.array([field[key] for key in keys])
            if evaluate is not None and np.any(~np.isfinite(values)):
                found.extend(_refined_windings(evaluate_field, positions, SUBDIVISIONS))
                continue
            winding = _winding(values)
            if winding is None:
                hits = [positions[i] for i in range(4) if values[i] == 0]
                found.extend((complex(h), 0) for h in hits)
                continue
            if winding <= 0:
                continue
            positions = np.array(positions, dtype=complex)
            centre = positions.mean()
            design = np.column_stack([np.ones(4), positions - centre])
            a, b = np.linalg.lstsq(design, values, rcond=None)[0]
            guess = centre - a / b if b != 0 else centre
            if abs(guess - centre) > spacing:
                guess = centre
            found.append((complex(guess), winding))

    for key in zip(*np.nonzero(np.abs(field) < threshold)):
        found.append((complex(nodes[index[key]].xi), 0))

    points = []
    for guess, winding in found:
        xi_b = guess
        if evaluate is not None:
            h = 1e-4 * spacing
            root, converged = newton(
                evaluate_field, lambda z: (evaluate_field(z + h) - evaluate_field(z - h)) / (2 * h), guess,
                max_step=spacing,
            )
            if abs(root - guess) < 2 * spacing and abs(evaluate_field(root)) <= abs(evaluate_field(guess)):
                xi_b = root
            if not converged:
                logger.debug('branch point refinement from %s did not converge', guess)
        if any(torus_distance(xi_b, other.xi, lat) < 0.25 * spacing for other in points):
            continue
        points.append(HiggsBranchPoint(
            xi=complex(xi_b), w=_collision_value(sample, xi_b, evaluate, lat, k),
            winding=int(winding), discriminant=float(abs(evaluate_field(xi_b))) if evaluate else None,
        ))
    points.sort(key=lambda b: (b.xi.real, b.xi.imag))
    logger.info('%d branch points of the Higgs spectral curve', len(points))
    return points


def _collision_value(sample, xi, evaluate, lat, k):
    if evaluate is not None:
        phi = evaluate(xi)
    else:
        distance = np.asarray(torus_distance(sample.xi, xi, lat))
        phi = sample.nodes[int(np.argmin(distance))].phi
    values = np.linalg.eigvals(phi)
    if k == 1:
        return complex(values[0])
    gaps = np.abs(values[:, None] - values[None, :]) + np.diag(np.full(k, np.inf))
    i, j = np.unravel_index(np.argmin(gaps), gaps.shape)
    return complex(0.5 * (values[i] + values[j]))
