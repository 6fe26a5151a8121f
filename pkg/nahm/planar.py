"""
The truncated four-dimensional operator on T x D_R for fiberwise-flat
families: fiber Fourier modes times an M x M planar grid, glued across
the cuts where the two-valued eta(w) changes sign.
"""
import logging
from collections import deque
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

from torus.geometry import nearest_lattice_shift, pairing_constant

from .exceptions import CutConfigInvalid
from .models import TransformConfig

logger = logging.getLogger(__name__)

NODE_CLEARANCE = 1e-6
ENDPOINT_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class PlanarChart:
    """
    eta at every node of the planar grid, continued without crossing cuts,
    and the transition (sign, lattice shift) of every grid edge:
    eta[j] ~ sign * eta[j'] + shift.
    """

    w: np.ndarray
    h: float
    eta: np.ndarray
    edges: dict = field(repr=False)

    @property
    def M(self):
        return self.w.shape[0]

    @property
    def flips(self):
        return int(sum(np.count_nonzero(data['sign'] < 0) for data in self.edges.values()))


def planar_grid(R, M):
    h = 2.0 * R / M
    axis = -R + (np.arange(M) + 0.5) * h
    return axis[:, None] + 1j * axis[None, :], h


def _segments_cross(p1, p2, q1, q2):
    """Proper crossing of segments p1p2 (arrays) and q1q2 (scalars)."""
    def orient(a, b, c):
        return np.sign((np.conj(b - a) * (c - a)).imag)

    return (orient(p1, p2, q1) * orient(p1, p2, q2) < 0) & (orient(q1, q2, p1) * orient(q1, q2, p2) < 0)


def _distance_to_segment(points, a, b):
    ab = b - a
    t = np.clip(((points - a) * ab.conjugate()).real / max(abs(ab) ** 2, 1e-300), 0.0, 1.0)
    return np.abs(points - (a + t * ab))


def validate_cuts(cfg: TransformConfig, w):
    branches = np.asarray(cfg.family.branch_points, dtype=complex)
    used = np.zeros(len(branches), dtype=int)
    for a, b in cfg.cuts:
        for end in (a, b):
            distance = np.abs(branches - end) if len(branches) else np.array([np.inf])
            if distance.min() > ENDPOINT_TOL * max(1.0, abs(end)):
                raise CutConfigInvalid(f'cut endpoint {end:.6g} is not a branch point')
            used[int(np.argmin(distance))] += 1
        if np.min(_distance_to_segment(w.ravel(), a, b)) < NODE_CLEARANCE * cfg.h:
            raise CutConfigInvalid(f'cut {a:.4g} -> {b:.4g} passes through a grid node')
    if np.any(used != 1):
        raise CutConfigInvalid(f'cuts must pair every branch point exactly once (usage {used.tolist()})')


def _edge_transition(eta_a, eta_b, lat):
    """(sign, m, n) per edge with eta_a ~ sign * eta_b + m + n*tau."""
    m_plus, n_plus, r_plus = nearest_lattice_shift(eta_a - eta_b, lat)
    m_minus, n_minus, r_minus = nearest_lattice_shift(eta_a + eta_b, lat)
    keep = np.abs(r_plus) <= np.abs(r_minus)
    return {
        'sign': np.where(keep, 1, -1),
        'm': np.where(keep, m_plus, m_minus),
        'n': np.where(keep, n_plus, n_minus),
    }


@lru_cache(maxsize=8)
def build_chart(cfg: TransformConfig):
    """Continue eta over the grid breadth-first, never stepping across a cut."""
    w, h = planar_grid(cfg.R, cfg.M)
    validate_cuts(cfg, w)
    M = cfg.M

    blocked = {'x': np.zeros((M - 1, M), dtype=bool), 'y': np.zeros((M, M - 1), dtype=bool)}
    for a, b in cfg.cuts:
        blocked['x'] |= _segments_cross(w[:-1, :], w[1:, :], a, b)
        blocked['y'] |= _segments_cross(w[:, :-1], w[:, 1:], a, b)

    eta = np.full((M, M), np.nan + 0j)
    start = (M // 2, M // 2)
    eta[start] = cfg.family.pair(w[start])
    queue = deque([start])
    while queue:
        i, j = queue.popleft()
        for di, dj, axis in ((1, 0, 'x'), (-1, 0, 'x'), (0, 1, 'y'), (0, -1, 'y')):
            a, b = i + di, j + dj
            if not (0 <= a < M and 0 <= b < M) or not np.isnan(eta[a, b].real):
                continue
            edge = (min(i, a), j) if axis == 'x' else (i, min(j, b))
            if blocked[axis][edge]:
                continue
            eta[a, b] = cfg.family.lift(w[a, b], eta[i, j])
            queue.append((a, b))
    if np.isnan(eta.real).any():
        raise CutConfigInvalid('cuts separate the planar grid')

    edges = {
        'x': _edge_transition(eta[:-1, :], eta[1:, :], cfg.lat),
        'y': _edge_transition(eta[:, :-1], eta[:, 1:], cfg.lat),
    }
    chart = PlanarChart(w=w, h=h, eta=eta, edges=edges)
    logger.debug('planar chart M=%d R=%.3g: %d flipped edges', M, cfg.R, chart.flips)
    return chart


def mode_labels(N):
    side = np.arange(-N, N + 1)
    m, n, c = np.meshgrid(side, side, np.arange(2), indexing='ij')
    return m.ravel(), n.ravel(), c.ravel()


def mode_index(m, n, c, N):
    return ((m + N) * (2 * N + 1) + (n + N)) * 2 + c


def symbol(cfg: TransformConfig, chart: PlanarChart, xi):
    """kappa*(xi + s_c*eta(w_j) + m + n*tau), shape (M*M, modes)."""
    m, n, c = mode_labels(cfg.N)
    s = 1 - 2 * c
    eta = chart.eta.ravel()[:, None]
    return pairing_constant(cfg.lat) * (complex(xi) + s[None, :] * eta + (m + n * cfg.lat.tau)[None, :])


def _two_step(edge, axis):
    """Transition across two consecutive edges: eta_a ~ s1 s2 eta_c + lam1 + s1 lam2."""
    if axis == 'x':
        first, second = (slice(None, -1), slice(None)), (slice(1, None), slice(None))
    else:
        first, second = (slice(None), slice(None, -1)), (slice(None), slice(1, None))
    s1 = edge['sign'][first]
    return {
        'sign': s1 * edge['sign'][second],
        'm': edge['m'][first] + s1 * edge['m'][second],
        'n': edge['n'][first] + s1 * edge['n'][second],
    }


def dbar_matrix(cfg: TransformConfig, chart: PlanarChart):
    """
    One-sided second-order d/d(w-bar) on every fiber mode, with Dirichlet
    boundary: each axis reads (-3 u_0 + 4 u_1 - u_2) / 2h. Across a
    transition (s', lam), summand c at the near node reads summand c'
    (s_c' = s_c*s') at the far node, mode shifted by s_c*lam.
    """
    N, M, h = cfg.N, cfg.M, chart.h
    m, n, c = mode_labels(N)
    Q = m.size
    nodes = np.arange(M * M).reshape(M, M)
    size = M * M * Q
    s_c = (1 - 2 * c)[None, :]

    rows = [np.arange(size)]
    cols = [np.arange(size)]
    vals = [np.full(size, -0.75 * (1 + 1j) / h)]
    for axis, unit in (('x', 1.0), ('y', 1j)):
        for offset, weight in ((1, 1.0 / h), (2, -0.25 / h)):
            if axis == 'x':
                near, far = nodes[:-offset, :], nodes[offset:, :]
            else:
                near, far = nodes[:, :-offset], nodes[:, offset:]
            edge = chart.edges[axis] if offset == 1 else _two_step(chart.edges[axis], axis)
            near, far = near.ravel(), far.ravel()
            sign, dm, dn = edge['sign'].ravel(), edge['m'].ravel(), edge['n'].ravel()
            m2 = m[None, :] + s_c * dm[:, None]
            n2 = n[None, :] + s_c * dn[:, None]
            c2 = np.where(sign[:, None] > 0, c[None, :], 1 - c[None, :])
            valid = (np.abs(m2) <= N) & (np.abs(n2) <= N)
            row = near[:, None] * Q + np.arange(Q)[None, :]
            col = far[:, None] * Q + mode_index(m2, n2, c2, N)
            rows.append(row[valid])
            cols.append(col[valid])
            vals.append(np.full(np.count_nonzero(valid), weight * unit))
    return sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size),
    ).tocsr()


@dataclass(frozen=True, eq=False)
class PlanarOperator:
    """
    D* on T x D_R as a sparse matrix acting on (a, b) spinor halves, each
    indexed (node, mode): rows are (conj(sigma) a + dbar^H b, sigma b - dbar a).
    """

    cfg: TransformConfig
    xi: complex
    matrix: sparse.csr_matrix = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    dbar: sparse.csr_matrix = field(repr=False)
    chart: PlanarChart = field(repr=False)

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def N(self):
        return self.cfg.N

    @property
    def norm_estimate(self):
        return float(np.abs(self.matrix).sum(axis=1).max())

    @property
    def w(self):
        """Plane coordinate of every unknown, in matrix order."""
        per_node = np.repeat(self.chart.w.ravel(), self.sigma.shape[1])
        return np.concatenate([per_node, per_node])

    def dense(self):
        return self.matrix.toarray()

    def block_coupling(self):
        """Entries coupling different fiber modes (zero for families without cuts)."""
        Q = self.sigma.shape[1]
        coo = self.matrix.tocoo()
        return coo.data[(coo.row % Q) != (coo.col % Q)]


def assemble_planar(cfg: TransformConfig, xi):
    chart = build_chart(cfg)
    sigma = symbol(cfg, chart, xi)
    dbar = dbar_matrix(cfg, chart)
    flat = sigma.ravel()
    matrix = sparse.bmat([
        [sparse.diags(flat.conj()), dbar.conj().T],
        [-dbar, sparse.diags(flat)],
    ]).tocsr()
    return PlanarOperator(cfg=cfg, xi=complex(xi), matrix=matrix, sigma=sigma, dbar=dbar, chart=chart)


def zeroth_operator(op: PlanarOperator):
    """The twisted d-bar on functions: a -> (sigma a, dbar a)."""
    return sparse.vstack([sparse.diags(op.sigma.ravel()), op.dbar]).tocsr()
