"""Assembly and singular spectrum of the Fourier-truncated fiber operator."""
import logging

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse.linalg import ArpackNoConvergence, eigsh

from torus.conf import lab_setting
from torus.geometry import pairing_constant

from .exceptions import ConfigurationError, ConvergenceFailure, NotOnCurve, RankAmbiguity
from .models import FiberOperator, FlatPair, FourierConnection, LineFrame

logger = logging.getLogger(__name__)


def assemble_fiber(data, xi, N):
    """
    Matrix of the twisted fiber operator for ``data`` (FlatPair or
    FourierConnection) and twist ``xi`` on modes |m|, |n| <= N.
    """
    if int(N) < 1:
        raise ConfigurationError(f'Fourier cutoff N must be >= 1, got {N}')
    N = int(N)
    connection = data.connection() if isinstance(data, FlatPair) else data
    if not isinstance(connection, FourierConnection):
        raise ConfigurationError(f'unsupported fiber data {type(data).__name__}')
    lat = connection.lat
    kappa = pairing_constant(lat)
    xi = complex(xi)

    side = 2 * N + 1
    m, n = np.meshgrid(np.arange(-N, N + 1), np.arange(-N, N + 1), indexing='ij')
    m, n = m.ravel(), n.ravel()
    mode = (m + N) * side + (n + N)

    rows, cols, vals = [], [], []
    symbol = kappa * (xi + m + n * lat.tau)
    for c in range(2):
        rows.append(2 * mode + c)
        cols.append(2 * mode + c)
        vals.append(symbol)

    for (p, q), matrix in connection.coeffs.items():
        src_m, src_n = m - p, n - q
        valid = (np.abs(src_m) <= N) & (np.abs(src_n) <= N)
        src = (src_m[valid] + N) * side + (src_n[valid] + N)
        dst = mode[valid]
        for c in range(2):
            for d in range(2):
                if matrix[c, d] == 0:
                    continue
                rows.append(2 * dst + c)
                cols.append(2 * src + d)
                vals.append(np.full(dst.shape, kappa * matrix[c, d]))

    size = 2 * side * side
    matrix = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size),
    ).tocsr()
    return FiberOperator(N=N, xi=xi, data=connection, matrix=matrix)


def flat_singular_values(pair: FlatPair, xi, N):
    """Closed-form spectrum for flat data: kappa*|xi + s*eta + m + n*tau|, ascending."""
    lat = pair.lat
    side = np.arange(-N, N + 1)
    m, n = np.meshgrid(side, side, indexing='ij')
    lattice = (m + n * lat.tau).ravel()
    values = [np.abs(complex(xi) + s * pair.eta + lattice) for s in (1, -1)]
    return np.sort(pairing_constant(lat) * np.concatenate(values))


def singular_triplets(op: FiberOperator, count=1):
    """
    The ``count`` smallest singular values and right singular vectors.

    Dense SVD up to DENSE_SVD_LIMIT coordinates, shift-invert Lanczos on
    D^* D beyond that. Every pair is checked against ||D v|| <= sigma + 1e-12.
    """
    if count < 1:
        raise ConfigurationError('count must be >= 1')
    count = min(count, op.size)
    if op.size <= lab_setting('DENSE_SVD_LIMIT'):
        _, s, vh = scipy.linalg.svd(op.dense())
        order = np.argsort(s)[:count]
        values, vectors = s[order], vh[order].conj().T
    else:
        gram = (op.matrix.conj().T @ op.matrix).tocsc()
        shift = -1e-6 * max(op.norm_estimate, 1.0) ** 2
        rng = np.random.default_rng(lab_setting('SOLVER_SEED'))
        v0 = rng.normal(size=op.size) + 1j * rng.normal(size=op.size)
        try:
            eigvals, vectors = eigsh(gram, k=count, sigma=shift, which='LM', v0=v0)
        except ArpackNoConvergence as exc:
            raise ConvergenceFailure(f'Lanczos did not converge for {op.size} coordinates') from exc
        order = np.argsort(eigvals)
        values = np.sqrt(np.clip(eigvals[order], 0.0, None))
        vectors = vectors[:, order]

    residuals = np.linalg.norm(op.matrix @ vectors, axis=0)
    slack = 1e-12 * max(1.0, op.norm_estimate)
    if np.any(residuals > values + slack):
        raise ConvergenceFailure(f'backward error check failed (residuals {residuals}, values {values})')
    return values, vectors


def min_singulars(op: FiberOperator, count=1):
    """The ``count`` smallest singular values, nondecreasing."""
    values, _ = singular_triplets(op, count)
    return [float(v) for v in values]


def sigma_min(op: FiberOperator):
    """
    Smallest singular value alone. A diagonal matrix (flat data couples every
    mode only to itself) is read off its diagonal; otherwise the dense values
    or the Lanczos path of ``singular_triplets``.
    """
    diagonal = op.matrix.diagonal()
    if op.matrix.count_nonzero() == np.count_nonzero(diagonal):
        return float(np.abs(diagonal).min())
    if op.size <= lab_setting('DENSE_SVD_LIMIT'):
        return float(scipy.linalg.svdvals(op.dense()).min())
    return min_singulars(op, 1)[0]


def kernel_tolerance(op: FiberOperator):
    return lab_setting('KERNEL_TOL') * max(op.norm_estimate, 1.0)


def _phase_fixed(op, vector, w, eta, phase_seed):
    pivot = vector[np.argmax(np.abs(vector))]
    vector = vector * (np.conj(pivot) / abs(pivot))
    phase = 'max-real'
    if phase_seed is not None:
        angle = np.random.default_rng(phase_seed).uniform(0, 2 * np.pi)
        vector = vector * np.exp(1j * angle)
        phase = f'random:{phase_seed}'
    residual = float(np.linalg.norm(op.matrix @ vector))
    return LineFrame(xi=op.xi, w=complex(w), vector=vector, residual=residual, N=op.N, eta=complex(eta), phase=phase)


def kernel_frame(op: FiberOperator, w=0j, eta=0j, phase_seed=None):
    """
    Unit kernel vector of ``op`` with its largest coordinate made real
    positive. ``phase_seed`` multiplies by a random phase instead, to check
    convention independence of transported quantities.
    """
    kernel_tol = kernel_tolerance(op)
    frame_tol = lab_setting('FRAME_TOL_FACTOR') * kernel_tol
    values, vectors = singular_triplets(op, 2)
    if values[0] > frame_tol:
        raise NotOnCurve(f'smallest singular value {values[0]:.3e} exceeds frame tolerance {frame_tol:.3e}')
    if values[1] < 2 * kernel_tol:
        raise RankAmbiguity(f'second singular value {values[1]:.3e} below {2 * kernel_tol:.3e}: non-regular fiber')
    return _phase_fixed(op, vectors[:, 0], w, eta, phase_seed)


def summand_frame(op: FiberOperator, summand, w=0j, eta=0j, phase_seed=None):
    """
    Kernel frame of ``op`` restricted to one bundle summand (0 for L_eta,
    1 for L_-eta). At a non-regular fiber, eta = -eta, both summands carry
    a kernel mode; the summand a sheet is tracked on picks its frame.
    Needs data that does not couple the summands.
    """
    if summand not in (0, 1):
        raise ConfigurationError(f'summand must be 0 or 1, got {summand}')
    inside = np.arange(summand, op.size, 2)
    outside = np.arange(1 - summand, op.size, 2)
    if op.matrix[inside][:, outside].count_nonzero() or op.matrix[outside][:, inside].count_nonzero():
        raise ConfigurationError('the fiber data couples the two summands')
    kernel_tol = kernel_tolerance(op)
    frame_tol = lab_setting('FRAME_TOL_FACTOR') * kernel_tol
    _, s, vh = scipy.linalg.svd(op.matrix[inside][:, inside].toarray())
    if s[-1] > frame_tol:
        raise NotOnCurve(f'smallest singular value {s[-1]:.3e} on summand {summand} exceeds {frame_tol:.3e}')
    if s.size > 1 and s[-2] < 2 * kernel_tol:
        raise RankAmbiguity(f'summand {summand} has a kernel of dimension > 1')
    vector = np.zeros(op.size, dtype=complex)
    vector[inside] = vh[-1].conj()
    return _phase_fixed(op, vector, w, eta, phase_seed)


def shift_frame(frame: LineFrame, shifts):
    """
    Apply the lattice gauge transformation that moves summand c by the mode
    offset shifts[c] = (dm, dn); coordinates pushed past the cutoff are dropped.
    """
    N = frame.N
    side = 2 * N + 1
    grid = frame.vector.reshape(side, side, 2)
    out = np.zeros_like(grid)
    for c, (dm, dn) in enumerate(shifts):
        src = grid[:, :, c]
        dst = np.zeros_like(src)
        ms = slice(max(0, -dm), min(side, side - dm))
        md = slice(max(0, dm), min(side, side + dm))
        ns = slice(max(0, -dn), min(side, side - dn))
        nd = slice(max(0, dn), min(side, side + dn))
        dst[md, nd] = src[ms, ns]
        out[:, :, c] = dst
    return out.ravel()
