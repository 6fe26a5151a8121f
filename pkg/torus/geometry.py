import numpy as np

from .models import DualPoint, Lattice

_BOUNDARY_SNAP = 1e-12


def _as_complex(value):
    if isinstance(value, DualPoint):
        return value.xi
    return value


def _frac(t):
    t = np.asarray(t, dtype=float)
    frac = t - np.floor(t)
    # Ties at the far edge go back to 0 so reduction stays idempotent.
    return np.where((frac >= 1.0 - _BOUNDARY_SNAP) | (frac < _BOUNDARY_SNAP), 0.0, frac)


def reduce(z, lat: Lattice):
    """Representative of z in the half-open fundamental parallelogram [0,1)^2."""
    x, y = lat.coordinates(_as_complex(z))
    out = lat.point(_frac(x), _frac(y))
    return complex(out) if np.ndim(out) == 0 else out


def reduce_centered(z, lat: Lattice):
    """
    Representative with lattice coordinates in [-1/2, 1/2) plus the integer
    shifts (m, n) such that z = centered + m + n*tau.
    """
    x, y = lat.coordinates(_as_complex(z))
    m = np.floor(x + 0.5)
    n = np.floor(y + 0.5)
    return lat.point(x - m, y - n), m, n


def negate(xi):
    if isinstance(xi, DualPoint):
        return xi.negate()
    return -xi


def is_order_two(xi, lat: Lattice = None, tol=1e-10):
    """True when 2*xi is a lattice point."""
    if isinstance(xi, DualPoint):
        lat = xi.lat
    return torus_distance(2 * _as_complex(xi), 0.0, lat) < tol


def half_periods(lat: Lattice):
    """The four points of order dividing two: 0, 1/2, tau/2, (1+tau)/2."""
    return [0j, 0.5 + 0j, lat.tau / 2, (1 + lat.tau) / 2]


_TRANSLATES = [(m, n) for m in (-1, 0, 1, 2) for n in (-1, 0, 1, 2)]


def torus_distance(a, b, lat: Lattice = None):
    """Flat distance on C/(Z + tau Z); accepts DualPoints or complex arrays."""
    if lat is None:
        lat = a.lat if isinstance(a, DualPoint) else b.lat
    d = reduce(np.asarray(_as_complex(a), dtype=complex) - np.asarray(_as_complex(b), dtype=complex), lat)
    d = np.asarray(d)
    best = np.full(d.shape, np.inf)
    for m, n in _TRANSLATES:
        best = np.minimum(best, np.abs(d - (m + n * lat.tau)))
    return float(best) if best.ndim == 0 else best


def nearest_lattice_shift(z, lat: Lattice):
    """Lattice point closest to z, returned as (m, n, residual)."""
    z = np.asarray(_as_complex(z), dtype=complex)
    centered, m, n = reduce_centered(z, lat)
    best = np.abs(centered)
    best_m, best_n = np.asarray(m, dtype=float), np.asarray(n, dtype=float)
    for dm in (-1, 0, 1):
        for dn in (-1, 0, 1):
            cand = np.abs(centered - dm - dn * lat.tau)
            better = cand < best
            best = np.where(better, cand, best)
            best_m = np.where(better, m + dm, best_m)
            best_n = np.where(better, n + dn, best_n)
    best_m = best_m.astype(int)
    best_n = best_n.astype(int)
    return best_m, best_n, z - (best_m + best_n * lat.tau)


def pairing_constant(lat: Lattice):
    """
    Scale of the twisted d-bar symbol: the Fourier mode exp(2*pi*i*(m*x + n*y))
    of L_c has d-bar symbol kappa*(c + m + n*tau) with kappa = pi / Im(tau).
    """
    return np.pi / lat.tau.imag


def fundamental_grid(lat: Lattice, n, offset=0.5):
    """Cell-centred n x n grid of the fundamental parallelogram (complex array)."""
    t = (np.arange(n) + offset) / n
    x, y = np.meshgrid(t, t, indexing='ij')
    return lat.point(x, y)
