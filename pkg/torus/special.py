"""
Weierstrass functions and theta bases for the lattice Z + tau*Z.

Everything is evaluated from truncated q-series of the Jacobi theta function
theta_1 after moving the argument to the centred fundamental domain, so the
truncation in ``THETA_TERMS`` is far beyond double precision for Im(tau) >= 0.5.
"""
import logging
from functools import lru_cache

import numpy as np

from .conf import lab_setting
from .exceptions import PoleAtLattice
from .geometry import reduce_centered
from .models import Lattice, ThetaBasis

logger = logging.getLogger(__name__)

_POLE_TOL = 1e-12


def _theta1_series(v, q, terms):
    """theta_1 and its first three v-derivatives."""
    v = np.asarray(v, dtype=complex)
    n = np.arange(terms).reshape((terms,) + (1,) * v.ndim)
    odd = 2 * n + 1
    weight = 2.0 * (-1.0) ** n * q ** ((n + 0.5) ** 2)
    s = np.sin(odd * v)
    c = np.cos(odd * v)
    t0 = (weight * s).sum(axis=0)
    t1 = (weight * odd * c).sum(axis=0)
    t2 = -(weight * odd ** 2 * s).sum(axis=0)
    t3 = -(weight * odd ** 3 * c).sum(axis=0)
    return t0, t1, t2, t3


@lru_cache(maxsize=64)
def _eta_constants(tau, terms):
    """(eta1, eta3) with zeta(z+1) = zeta(z) + 2*eta1 and zeta(z+tau) = zeta(z) + 2*eta3."""
    q = np.exp(1j * np.pi * tau)
    _, d1, _, d3 = _theta1_series(0.0, q, terms)
    eta1 = -np.pi ** 2 * complex(d3) / (6.0 * complex(d1))
    # Legendre relation for periods (1, tau).
    eta3 = eta1 * tau - 1j * np.pi
    return eta1, eta3


def quasi_periods(lat: Lattice):
    """Return (zeta(z+1) - zeta(z), zeta(z+tau) - zeta(z))."""
    eta1, eta3 = _eta_constants(lat.tau, lab_setting('THETA_TERMS'))
    return 2 * eta1, 2 * eta3


def weierstrass(z, lat: Lattice):
    """
    Weierstrass p, p' and zeta at z (scalar or array).

    Raises PoleAtLattice when any z is a lattice point.
    """
    terms = lab_setting('THETA_TERMS')
    eta1, eta3 = _eta_constants(lat.tau, terms)
    centered, m, n = reduce_centered(z, lat)
    centered = np.asarray(centered)
    if np.any(np.abs(centered) < _POLE_TOL):
        raise PoleAtLattice(f'Weierstrass functions have a pole at lattice points (z={z!r})')

    q = lat.nome
    t0, t1, t2, t3 = _theta1_series(np.pi * centered, q, terms)
    l1 = t1 / t0
    l2 = t2 / t0
    l3 = t3 / t0

    zeta = 2 * eta1 * centered + np.pi * l1 + 2 * m * eta1 + 2 * n * eta3
    p = -2 * eta1 - np.pi ** 2 * (l2 - l1 ** 2)
    p_prime = -np.pi ** 3 * (l3 - 3 * l1 * l2 + 2 * l1 ** 3)

    if np.ndim(zeta) == 0:
        return complex(p), complex(p_prime), complex(zeta)
    return p, p_prime, zeta


def weierstrass_zeta(z, lat: Lattice):
    return weierstrass(z, lat)[2]


def weierstrass_p(z, lat: Lattice):
    return weierstrass(z, lat)[0]


def theta_basis(n, lat: Lattice):
    """Degree-n theta basis sharing one automorphy factor."""
    basis = ThetaBasis(degree=n, lat=lat, terms=lab_setting('THETA_TERMS'))
    logger.debug('theta basis of degree %d for %s', n, lat)
    return basis
