from dataclasses import dataclass, field

import numpy as np

from .exceptions import ConfigurationError


@dataclass(frozen=True)
class Lattice:
    """The lattice Z + tau*Z; the torus T and its dual share the modulus."""

    tau: complex

    def __post_init__(self):
        tau = complex(self.tau)
        if not np.isfinite(tau.real) or not np.isfinite(tau.imag):
            raise ConfigurationError('tau must be finite')
        if tau.imag <= 0:
            raise ConfigurationError(f'Im(tau) must be positive, got {tau.imag!r}')
        object.__setattr__(self, 'tau', tau)

    def __str__(self):
        return f"Lattice(tau={self.tau.real:.6g}{self.tau.imag:+.6g}i)"

    @property
    def area(self):
        return self.tau.imag

    @property
    def nome(self):
        """q = exp(i*pi*tau), the nome of the Jacobi theta series."""
        return np.exp(1j * np.pi * self.tau)

    def coordinates(self, z):
        """Split z = x + y*tau into real lattice coordinates (x, y)."""
        z = np.asarray(z, dtype=complex)
        y = z.imag / self.tau.imag
        x = z.real - y * self.tau.real
        return x, y

    def point(self, x, y):
        return np.asarray(x) + np.asarray(y) * self.tau

    def to_json(self):
        return [self.tau.real, self.tau.imag]


@dataclass(frozen=True)
class DualPoint:
    """A flat connection i*xi on the trivial line bundle, xi modulo the lattice."""

    xi: complex
    lat: Lattice

    def __post_init__(self):
        object.__setattr__(self, 'xi', complex(self.xi))

    def __str__(self):
        return f"xi={self.xi.real:.6g}{self.xi.imag:+.6g}i"

    def __complex__(self):
        return self.xi

    def negate(self):
        return DualPoint(-self.xi, self.lat)

    def reduced(self):
        from .geometry import reduce
        return DualPoint(complex(reduce(self.xi, self.lat)), self.lat)

    def to_json(self):
        return [self.xi.real, self.xi.imag]


@dataclass(frozen=True)
class ThetaBasis:
    """
    Degree-n theta functions for the lattice, all sharing the automorphy factor
    f(z + 1) = f(z), f(z + tau) = exp(-i*pi*n*tau - 2*i*pi*n*z) * f(z).
    """

    degree: int
    lat: Lattice
    terms: int = 12
    _shifts: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.degree) < 1:
            raise ConfigurationError('theta basis degree must be >= 1')
        object.__setattr__(self, 'degree', int(self.degree))
        m = np.arange(-self.terms, self.terms + 1)
        # shifts[a, j] = m_j + a/n
        shifts = m[None, :] + np.arange(self.degree)[:, None] / self.degree
        object.__setattr__(self, '_shifts', shifts)

    def __len__(self):
        return self.degree

    def _terms(self, z):
        z = np.asarray(z, dtype=complex)
        n = self.degree
        s = self._shifts.reshape(self._shifts.shape + (1,) * z.ndim)
        return s, np.exp(1j * np.pi * n * self.lat.tau * s ** 2 + 2j * np.pi * n * s * z)

    def evaluate(self, z):
        """Values of all basis elements, shape (degree,) + shape(z)."""
        _, terms = self._terms(z)
        return terms.sum(axis=1)

    def derivative(self, z):
        s, terms = self._terms(z)
        return (2j * np.pi * self.degree * s * terms).sum(axis=1)

    def automorphy_factor(self, z):
        z = np.asarray(z, dtype=complex)
        return np.exp(-1j * np.pi * self.degree * self.lat.tau - 2j * np.pi * self.degree * z)

    def periodic_modulus(self, values, z):
        """|f(z)| * exp(-pi*n*Im(z)^2/Im(tau)): doubly periodic for any section."""
        z = np.asarray(z, dtype=complex)
        return np.abs(values) * np.exp(-np.pi * self.degree * z.imag ** 2 / self.lat.tau.imag)
