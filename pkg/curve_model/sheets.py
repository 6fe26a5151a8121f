"""Both projections of a model spectral curve: sheets over xi and over w."""
import logging

import numpy as np

from torus.conf import lab_setting
from torus.geometry import nearest_lattice_shift, reduce, torus_distance
from torus.models import DualPoint
from torus.zeros import find_zeros, newton

from .exceptions import DegenerateLeadingCoefficient, NearPuncture, RootFindFailure

logger = logging.getLogger(__name__)

ASYMPTOTIC_W = 1e6


def _xi(value):
    return value.xi if isinstance(value, DualPoint) else value


def eval_F(model, xi, w):
    """F(xi, w) = sum_j w^j theta_j(xi); xi and w broadcast against each other."""
    # Degree axis last so any xi shape broadcasts against any w shape.
    thetas = np.moveaxis(np.asarray(model.thetas(_xi(xi)), dtype=complex), 0, -1)
    powers = np.asarray(w, dtype=complex)[..., None] ** np.arange(model.k + 1)
    value = (powers * thetas).sum(axis=-1)
    return complex(value) if np.ndim(value) == 0 else value


def eval_F_slopes(model, xi, w):
    """(dF/dxi, dF/dw) at (xi, w), broadcasting like eval_F."""
    xi = _xi(xi)
    thetas = np.moveaxis(np.asarray(model.thetas(xi), dtype=complex), 0, -1)
    slopes = np.moveaxis(np.asarray(model.theta_derivatives(xi), dtype=complex), 0, -1)
    w = np.asarray(w, dtype=complex)[..., None]
    degrees = np.arange(model.k + 1)
    f_xi = (w ** degrees * slopes).sum(axis=-1)
    f_w = (degrees[1:] * w ** (degrees[1:] - 1) * thetas[..., 1:]).sum(axis=-1)
    return f_xi, f_w


def eta_slopes(model, w_points):
    """
    d eta / dw along the fiber pair at each of ``w_points``, by implicit
    differentiation of F(eta, w) = 0. Each point warm-starts from the one
    before it, so nearby points should come in sequence.
    """
    points = np.ravel(np.asarray(w_points, dtype=complex))
    eta = np.empty(points.size, dtype=complex)
    guess = None
    for i, w in enumerate(points):
        eta[i] = fiber_pair(model, w, guess=guess)[0]
        guess = eta[i]
    f_xi, f_w = eval_F_slopes(model, eta, points)
    return (-f_w / f_xi).reshape(np.shape(w_points))


def check_puncture_distance(model, xi, radius=None):
    radius = radius if radius is not None else lab_setting('PUNCTURE_RADIUS')
    xi = _xi(xi)
    dist = min(torus_distance(xi, p, model.lat) for p in model.punctures)
    if dist <= radius:
        raise NearPuncture(f'xi={xi:.6g} is within {radius} of a puncture (distance {dist:.3g})')
    return dist


def sheets_over_xi(model, xi, radius=None):
    """
    The k roots in w of F(xi, .), listed with multiplicity and ordered by
    modulus then argument.
    """
    check_puncture_distance(model, xi, radius)
    thetas = np.asarray(model.thetas(complex(_xi(xi))))
    scale = np.abs(thetas).max()
    if abs(thetas[-1]) < lab_setting('LEADING_COEFF_FLOOR') * max(scale, 1.0):
        raise DegenerateLeadingCoefficient(
            f'|theta_k({complex(_xi(xi)):.6g})| = {abs(thetas[-1]):.3e} away from the punctures'
        )
    roots = np.roots(thetas[::-1]) if model.k > 0 else np.array([])
    order = np.lexsort((np.angle(roots), np.abs(roots)))
    return [complex(r) for r in roots[order]]


def fiber_section(model, w):
    coeffs = model.fiber_coeffs(complex(w))
    norm = np.linalg.norm(coeffs)
    if norm <= 1e-13 * np.abs(model.coeffs).max() * max(1.0, abs(w)) ** model.k:
        raise RootFindFailure(f'F(., {w}) vanishes identically')
    coeffs = coeffs / norm
    basis = model.basis

    def f(z):
        return np.tensordot(coeffs, basis.evaluate(z), axes=(0, 0))

    def df(z):
        return np.tensordot(coeffs, basis.derivative(z), axes=(0, 0))

    return f, df


def sheets_over_w(model, w, guess=None):
    """
    The two zeros of xi -> F(xi, w) in the fundamental domain, as DualPoints.

    With ``guess`` (a nearby zero, e.g. from the previous grid node) a single
    Newton solve replaces the grid search; the pair is then completed by
    evenness. Falls back to the grid search when the warm start fails.
    """
    lat = model.lat
    f, df = fiber_section(model, w)
    if guess is not None:
        root, ok = newton(f, df, complex(_xi(guess)))
        if ok:
            root = complex(reduce(root, lat))
            # Models are even, so -root is the other zero.
            return [DualPoint(root, lat), DualPoint(complex(reduce(-root, lat)), lat)]
        logger.debug('warm start at w=%s failed, falling back to grid search', w)

    zeros = find_zeros(f, df, lat, 2, model.basis.periodic_modulus)
    points = []
    for root, mult in zeros:
        points.extend([DualPoint(root, lat)] * mult)
    return points


def fiber_pair(model, w, guess=None):
    """
    The flat-connection pair {eta, -eta} of the fiber over w, returned as a
    tuple of complex numbers with the second entry exactly the negative of the
    first (eta is the reduced representative of the first zero).
    """
    first = sheets_over_w(model, w, guess=guess)[0]
    eta = complex(reduce(first.xi, model.lat))
    return eta, -eta


def asymptotic_state(model, w_far=ASYMPTOTIC_W):
    """Fiber pair at very large |w|; it must approach {xi0, -xi0}."""
    eta, _ = fiber_pair(model, w_far)
    if torus_distance(eta, model.xi0, model.lat) > torus_distance(eta, -model.xi0, model.lat):
        eta = complex(reduce(-eta, model.lat))
    return eta, -eta


def sheet_graph(model, xi_grid, radius=None):
    """
    Oracle points (xi, w, sheet) for every grid node outside the puncture
    disks; nodes inside the disks are skipped.
    """
    rows = []
    for xi in np.ravel(xi_grid):
        try:
            sheets = sheets_over_xi(model, complex(xi), radius)
        except NearPuncture:
            continue
        for index, w in enumerate(sheets):
            rows.append((complex(xi), w, index))
    return rows


def continue_pair(model, w, previous):
    """
    The member of the pair over w, lifted to the plane, closest to
    ``previous``. Used to follow eta(w) along paths without lattice jumps.
    """
    eta, _ = fiber_pair(model, w, guess=complex(reduce(complex(previous), model.lat)))
    best = None
    for candidate in (eta, -eta):
        _, _, residual = nearest_lattice_shift(complex(candidate) - complex(previous), model.lat)
        lifted = complex(previous) + complex(residual)
        if best is None or abs(residual) < abs(best - complex(previous)):
            best = lifted
    return best
