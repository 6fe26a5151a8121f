from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from torus.geometry import is_order_two, pairing_constant
from torus.models import Lattice

from .exceptions import ConfigurationError


@dataclass(frozen=True, eq=False)
class FourierConnection:
    """
    (0,1)-part of a rank-2 connection on a torus fiber, as a finite Fourier
    series: coeffs[(p, q)] is the 2x2 matrix multiplying exp(2*pi*i*(p*x + q*y)).
    Entries are in the units of the twist, so {(0, 0): diag(eta, -eta)} is the
    flat pair L_eta + L_-eta.
    """

    lat: Lattice
    coeffs: dict

    def __post_init__(self):
        clean = {}
        for key, value in self.coeffs.items():
            p, q = (int(v) for v in key)
            matrix = np.asarray(value, dtype=complex)
            if matrix.shape != (2, 2):
                raise ConfigurationError(f'connection coefficient {key} must be 2x2, got {matrix.shape}')
            clean[(p, q)] = matrix
        object.__setattr__(self, 'coeffs', clean)

    @property
    def is_flat(self):
        off = [m for key, m in self.coeffs.items() if key != (0, 0)]
        zero = self.coeffs.get((0, 0), np.zeros((2, 2)))
        return all(np.abs(m).max() == 0 for m in off) and zero[0, 1] == 0 and zero[1, 0] == 0

    def conjugate(self, unitary):
        """Constant gauge transformation A -> U A U^*."""
        unitary = np.asarray(unitary, dtype=complex)
        return FourierConnection(
            self.lat, {key: unitary @ m @ unitary.conj().T for key, m in self.coeffs.items()}
        )


@dataclass(frozen=True)
class FlatPair:
    """Fiber data L_eta + L_-eta of a fiberwise-flat SU(2) instanton."""

    eta: complex
    lat: Lattice

    def __post_init__(self):
        object.__setattr__(self, 'eta', complex(self.eta))

    @property
    def summands(self):
        return self.eta, -self.eta

    def connection(self):
        return FourierConnection(self.lat, {(0, 0): np.diag([self.eta, -self.eta])})


def is_regular_fiber(pair: FlatPair):
    """h^0(End) = 2 unless eta = -eta, where End picks up two extra trivial summands."""
    return not is_order_two(pair.eta, pair.lat)


@dataclass(frozen=True, eq=False)
class FiberOperator:
    """
    Fourier-truncated twisted d-bar operator on one fiber: modes |m|, |n| <= N,
    two bundle summands, one spinor component. Row (m, n, c) carries
    kappa*(xi + m + n*tau) on the diagonal plus the connection convolution.
    """

    N: int
    xi: complex
    data: FourierConnection
    matrix: sparse.csr_matrix = field(repr=False)

    @property
    def lat(self):
        return self.data.lat

    @property
    def size(self):
        return self.matrix.shape[0]

    @property
    def kappa(self):
        return pairing_constant(self.lat)

    @property
    def norm_estimate(self):
        """Max absolute row sum, an upper bound for the operator norm."""
        return float(np.abs(self.matrix).sum(axis=1).max())

    def labels(self):
        """(m, n, c) of every coordinate, in matrix order."""
        side = np.arange(-self.N, self.N + 1)
        m, n, c = np.meshgrid(side, side, np.arange(2), indexing='ij')
        return np.stack([m.ravel(), n.ravel(), c.ravel()], axis=1)

    def index(self, m, n, c):
        side = 2 * self.N + 1
        return ((m + self.N) * side + (n + self.N)) * 2 + c

    def dense(self):
        return self.matrix.toarray()


@dataclass(frozen=True)
class CloudPoint:
    xi: complex
    w: complex
    sheet: int
    sigma: float


@dataclass
class CurveCloud:
    """Sampled spectral curve: points (xi, w, sheet, sigma_min) plus run metadata."""

    points: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def __iter__(self):
        return iter(self.points)

    @property
    def xi(self):
        return np.array([p.xi for p in self.points], dtype=complex)

    @property
    def w(self):
        return np.array([p.w for p in self.points], dtype=complex)

    def rows(self):
        return [
            {
                'xi_re': p.xi.real, 'xi_im': p.xi.imag,
                'w_re': p.w.real, 'w_im': p.w.imag,
                'sigma_min': p.sigma, 'sheet': p.sheet,
            }
            for p in self.points
        ]


@dataclass(frozen=True, eq=False)
class LineFrame:
    """Unit kernel vector of the fiber operator at a point of the curve."""

    xi: complex
    w: complex
    vector: np.ndarray
    residual: float
    N: int
    eta: complex = 0j
    phase: str = 'max-real'

    def __post_init__(self):
        norm = np.linalg.norm(self.vector)
        if not np.isclose(norm, 1.0, atol=1e-10):
            raise ConfigurationError(f'frame vector must have unit norm, got {norm}')
