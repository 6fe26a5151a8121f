from dataclasses import dataclass, field

import numpy as np

from torus.geometry import is_order_two
from torus.models import DualPoint, Lattice
from torus.special import theta_basis, weierstrass

from .exceptions import AsymptoticStateOrderTwo, ConfigurationError


@dataclass(frozen=True, eq=False)
class CurveModel:
    """
    Spectral curve F(xi, w) = sum_j w^j theta_j(xi) in the linear system
    |k*[T^] + 2*[P^1]|, each theta_j written in the even degree-2 theta basis.
    """

    k: int
    lat: Lattice
    xi0: complex
    coeffs: np.ndarray
    family: str = 'generic'
    basis: object = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        coeffs = np.asarray(self.coeffs, dtype=complex)
        if int(self.k) < 1:
            raise ConfigurationError('instanton number k must be >= 1')
        if coeffs.shape != (int(self.k) + 1, 2):
            raise ConfigurationError(
                f'theta_coeffs must have shape ({int(self.k) + 1}, 2), got {coeffs.shape}'
            )
        if is_order_two(complex(self.xi0), self.lat):
            raise AsymptoticStateOrderTwo('xi0 of order two gives a double point at (xi0, infinity)')
        object.__setattr__(self, 'k', int(self.k))
        object.__setattr__(self, 'xi0', complex(self.xi0))
        object.__setattr__(self, 'coeffs', coeffs)
        object.__setattr__(self, 'basis', theta_basis(2, self.lat))

    def __str__(self):
        return f"CurveModel(k={self.k}, {self.family}, xi0={self.xi0:.4g}, {self.lat})"

    @property
    def punctures(self):
        return [self.xi0, -self.xi0]

    @property
    def asymptotic_state(self):
        return DualPoint(self.xi0, self.lat)

    def thetas(self, xi):
        """theta_0..theta_k at xi, shape (k+1,) + shape(xi)."""
        values = self.basis.evaluate(xi)
        return np.tensordot(self.coeffs, values, axes=(1, 0))

    def theta_derivatives(self, xi):
        return np.tensordot(self.coeffs, self.basis.derivative(xi), axes=(1, 0))

    def fiber_coeffs(self, w):
        """Basis coefficients of the degree-2 section xi -> F(xi, w)."""
        powers = w ** np.arange(self.k + 1)
        return powers @ self.coeffs


@dataclass(frozen=True)
class BuiltinK1:
    """
    The k = 1 family with sheet map phi(xi) = a*(zeta(xi - xi0) - zeta(xi + xi0)) + b.
    phi is elliptic and even, with simple poles of residue a at xi0 and -a at -xi0.
    """

    a: complex
    b: complex
    xi0: complex
    lat: Lattice

    def __post_init__(self):
        for name in ('a', 'b', 'xi0'):
            object.__setattr__(self, name, complex(getattr(self, name)))
        if is_order_two(self.xi0, self.lat):
            raise AsymptoticStateOrderTwo('xi0 of order two gives a double point at (xi0, infinity)')

    def phi(self, xi):
        _, _, z_minus = weierstrass(np.asarray(xi) - self.xi0, self.lat)
        _, _, z_plus = weierstrass(np.asarray(xi) + self.xi0, self.lat)
        return self.a * (z_minus - z_plus) + self.b

    def phi_prime(self, xi):
        p_minus, _, _ = weierstrass(np.asarray(xi) - self.xi0, self.lat)
        p_plus, _, _ = weierstrass(np.asarray(xi) + self.xi0, self.lat)
        return -self.a * (p_minus - p_plus)
