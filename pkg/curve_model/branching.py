"""
Branch points of the two projections of a model spectral curve.

For an even model the zeros of F(., w) are {eta, -eta}, so they collide
exactly when eta is a half-period. The branch values of the double cover
over P^1 are therefore the roots of the four polynomials F(omega, .) with
omega a half-period; each one is certified by a winding count.
"""
import logging

import numpy as np

from torus.conf import lab_setting
from torus.exceptions import SpectralLabError
from torus.geometry import half_periods
from torus.special import theta_basis
from torus.zeros import count_zeros_in_disk, find_zeros

from .exceptions import CountMismatch, RootFindFailure
from .sheets import fiber_section

logger = logging.getLogger(__name__)


def branch_table(model):
    """
    Rows {w, xi, simple, winding} for each of the 4k candidate branch values.
    Nothing is raised here; branch_points decides what is acceptable.
    """
    rows = []
    margin = lab_setting('BRANCH_MARGIN')
    simple_tol = lab_setting('BRANCH_SIMPLE_TOL')
    for omega in half_periods(model.lat):
        coeffs = np.asarray(model.thetas(omega))
        scale = np.abs(coeffs).max()
        roots = np.roots(coeffs[::-1])
        derivative = np.polynomial.polynomial.polyder(coeffs)
        for w in roots:
            slope = np.polynomial.polynomial.polyval(w, derivative)
            try:
                f, _ = fiber_section(model, w)
                winding = count_zeros_in_disk(f, omega, margin)
            except RootFindFailure:
                winding = 0
            rows.append({
                'w': complex(w),
                'xi': complex(omega),
                'simple': bool(abs(slope) > simple_tol * scale * max(1.0, abs(w)) ** (model.k - 1)),
                'winding': winding,
            })
    return rows


def branch_points(model):
    """
    The 4k branch values of xi -> F(xi, w) over P^1.

    Raises CountMismatch when a candidate is not a simple root, does not carry
    a double zero, or coincides with another candidate.
    """
    rows = branch_table(model)
    bad = [row for row in rows if not row['simple'] or row['winding'] != 2]
    if bad:
        raise CountMismatch(f'{len(bad)} of {len(rows)} branch candidates failed certification')

    values = np.array([row['w'] for row in rows])
    gaps = np.abs(values[:, None] - values[None, :])
    np.fill_diagonal(gaps, np.inf)
    tol = lab_setting('BRANCH_SIMPLE_TOL') * max(1.0, np.abs(values).max())
    if len(values) > 1 and gaps.min() < tol:
        raise CountMismatch(f'branch values collide (closest pair {gaps.min():.3e})')
    if len(values) != 4 * model.k:
        raise CountMismatch(f'expected {4 * model.k} branch points, found {len(values)}')
    logger.debug('%d certified branch points for %s', len(values), model)
    return sorted((complex(v) for v in values), key=lambda v: (abs(v), np.angle(v)))


def genus_estimate(model):
    """Riemann-Hurwitz for the double cover of P^1: g = #branch / 2 - 1."""
    return len(branch_points(model)) // 2 - 1


def is_smooth(model):
    """True iff all branch points certify; dF/dw != 0 there is the simplicity test."""
    try:
        branch_points(model)
    except SpectralLabError as exc:
        logger.info('model %s is not smooth: %s', model, exc)
        return False
    return True


def discriminant(coeffs):
    """
    w-discriminant of sum_j coeffs[j] w^j, batched over trailing axes.

    Computed as the Sylvester resultant of p and p' divided by the leading
    coefficient, so it stays a polynomial in the coefficients.
    """
    coeffs = np.asarray(coeffs, dtype=complex)
    k = coeffs.shape[0] - 1
    if k < 2:
        return np.ones(coeffs.shape[1:], dtype=complex)
    high = np.moveaxis(coeffs[::-1], 0, -1)
    dhigh = high[..., :-1] * np.arange(k, 0, -1)
    size = 2 * k - 1
    sylvester = np.zeros(high.shape[:-1] + (size, size), dtype=complex)
    for row in range(k - 1):
        sylvester[..., row, row:row + k + 1] = high
    for row in range(k):
        sylvester[..., k - 1 + row, row:row + k] = dhigh
    sign = (-1) ** (k * (k - 1) // 2)
    return sign * np.linalg.det(sylvester) / high[..., 0]


def xi_branch_points(model, step=1e-6):
    """
    Zeros over the dual torus of the w-discriminant of F(xi, .), the branch
    points of the k-fold cover. The discriminant is a theta-type section of
    degree 4k - 4, so that many zeros are expected (none for k = 1).
    """
    degree = 4 * model.k - 4
    if degree == 0:
        return []

    def disc(z):
        return discriminant(model.thetas(z))

    def ddisc(z):
        return (disc(z + step) - disc(z - step)) / (2 * step)

    modulus = theta_basis(degree, model.lat).periodic_modulus
    try:
        zeros = find_zeros(disc, ddisc, model.lat, degree, modulus)
    except RootFindFailure as exc:
        raise CountMismatch(f'discriminant zeros over the dual torus: {exc}') from exc
    points = []
    for root, mult in zeros:
        points.extend([root] * mult)
    return points


def genus_cross_check(model):
    """
    Genus from both covers: (double cover of P^1, k-fold cover of the dual torus).
    Riemann-Hurwitz over a torus gives 2g - 2 = #branch.
    """
    over_w = genus_estimate(model)
    over_xi = len(xi_branch_points(model)) // 2 + 1
    return over_w, over_xi
