from dataclasses import dataclass, field

import numpy as np

from torus.conf import lab_setting

from .exceptions import ConfigurationError, DimensionMismatch
from .families import CurveFamily, FiberFamily

MODES = ('LOCALIZED', 'FULL')

# Higgs field convention: the stored matrix is <v_a, w v_b>; the 1-form
# carries these extra factors.
HIGGS_CONVENTION = {'prefactor': '1/sqrt(2)', 'form': 'dxi', 'stored': 'eigenvalue-normalized'}


@dataclass(frozen=True, eq=False)
class TransformConfig:
    """
    One numerical Nahm transform: the fiber family, the truncated plane
    D_R (an M x M cell-centred grid), the fiber Fourier cutoff N and the
    way kernel frames are produced.

    ``cuts`` is a list of (w_a, w_b) segments joining branch points; by
    default branch points are paired in angular order around their mean.
    """

    family: FiberFamily
    R: float = 6.0
    M: int = 32
    N: int = 1
    mode: str = 'LOCALIZED'
    profile_width: float = None
    cuts: tuple = None
    gap_factor: float = None
    step: float = None

    def __post_init__(self):
        mode = str(self.mode).upper()
        if mode not in MODES:
            raise ConfigurationError(f'unknown transform mode {self.mode!r}; expected one of {MODES}')
        object.__setattr__(self, 'mode', mode)
        if int(self.M) < 4:
            raise ConfigurationError(f'planar grid size M must be >= 4, got {self.M}')
        if int(self.N) < 1:
            raise ConfigurationError(f'Fourier cutoff N must be >= 1, got {self.N}')
        object.__setattr__(self, 'M', int(self.M))
        object.__setattr__(self, 'N', int(self.N))
        for name, setting in (('profile_width', 'PROFILE_WIDTH'), ('gap_factor', 'GAP_FACTOR'), ('step', 'FD_STEP')):
            if getattr(self, name) is None:
                object.__setattr__(self, name, lab_setting(setting))
        if self.profile_width <= 0 or self.step <= 0 or self.gap_factor <= 1:
            raise ConfigurationError('profile_width and step must be positive and gap_factor > 1')

        branches = self.family.branch_points
        reach = max((abs(b) for b in branches), default=0.0) + 2.0
        if float(self.R) <= reach:
            raise ConfigurationError(f'R={self.R} must exceed max |branch point| + 2 = {reach:.4g}')
        object.__setattr__(self, 'R', float(self.R))

        if self.cuts is None:
            object.__setattr__(self, 'cuts', default_cuts(branches))
        else:
            object.__setattr__(self, 'cuts', tuple((complex(a), complex(b)) for a, b in self.cuts))

    @classmethod
    def for_model(cls, model, **kwargs):
        return cls(family=CurveFamily(model), **kwargs)

    @property
    def model(self):
        return getattr(self.family, 'model', None)

    @property
    def k(self):
        return self.family.k

    @property
    def lat(self):
        return self.family.lat

    @property
    def h(self):
        """Planar grid spacing."""
        return 2.0 * self.R / self.M

    def describe(self):
        return {
            **self.family.describe(),
            'mode': self.mode, 'R': self.R, 'M': self.M, 'N': self.N,
            'profile_width': self.profile_width, 'gap_factor': self.gap_factor, 'step': self.step,
            'cuts': [[[a.real, a.imag], [b.real, b.imag]] for a, b in self.cuts],
            'higgs_convention': HIGGS_CONVENTION,
        }


def default_cuts(branches):
    if not branches:
        return ()
    points = np.asarray(branches, dtype=complex)
    order = np.argsort(np.angle(points - points.mean()))
    points = points[order]
    return tuple((complex(points[i]), complex(points[i + 1])) for i in range(0, len(points) - 1, 2))


_RADIAL_NODES, _RADIAL_WEIGHTS = np.polynomial.legendre.leggauss(24)
_ANGLES = 2 * np.pi * np.arange(48) / 48


def profile(r, width):
    """Normalized biweight bump (1 - (r/width)^2)^2 on the disk of radius width."""
    r = np.asarray(r, dtype=float)
    bump = np.where(r < width, (1.0 - (r / width) ** 2) ** 2, 0.0)
    return bump / np.sqrt(np.pi * width ** 2 / 5.0)


def profile_moments(center_a, center_b, width):
    """
    (<p_a, p_b>, <p_a, w p_b>) for bumps centred at center_a and center_b.
    Quadrature is exact when the centres coincide.
    """
    center_a, center_b = complex(center_a), complex(center_b)
    if abs(center_a - center_b) >= 2 * width:
        return 0.0, 0j
    r = 0.5 * width * (_RADIAL_NODES + 1.0)
    weights = 0.5 * width * _RADIAL_WEIGHTS * r * (2 * np.pi / len(_ANGLES))
    w = center_a + r[:, None] * np.exp(1j * _ANGLES)[None, :]
    integrand = profile(np.abs(w - center_a), width) * profile(np.abs(w - center_b), width)
    overlap = float(np.sum(weights[:, None] * integrand))
    moment = complex(np.sum(weights[:, None] * integrand * w))
    return overlap, moment


@dataclass(frozen=True, eq=False)
class LocalizedFrames:
    """
    Adiabatic frames v_a = f_a (x) p_a: a fiber kernel vector times a bump
    centred at the sheet w_a(xi). ``mixing`` orthonormalizes them when bumps
    overlap and is the identity otherwise.
    """

    xi: complex
    centers: np.ndarray
    fiber: np.ndarray
    width: float
    residuals: np.ndarray
    mixing: np.ndarray = None

    def __post_init__(self):
        k = len(self.centers)
        if self.mixing is None:
            gram = self._raw(self)[0]
            if k and np.linalg.eigvalsh(gram).min() < 1e-8:
                raise DimensionMismatch(f'sheet frames at xi={self.xi:.6g} are linearly dependent')
            mixing = _inverse_sqrt(gram)
            object.__setattr__(self, 'mixing', np.asarray(mixing, dtype=complex))

    @property
    def k(self):
        return len(self.centers)

    def _raw(self, other):
        k, l = self.k, other.k
        overlap = np.zeros((k, l), dtype=complex)
        moment = np.zeros((k, l), dtype=complex)
        fibers = self.fiber.conj() @ other.fiber.T
        for a in range(k):
            for b in range(l):
                o, m = profile_moments(self.centers[a], other.centers[b], self.width)
                overlap[a, b] = fibers[a, b] * o
                moment[a, b] = fibers[a, b] * m
        return overlap, moment

    def overlap(self, other):
        """<v_a(self), v_b(other)>."""
        return self.mixing.conj().T @ self._raw(other)[0] @ other.mixing

    def gram(self):
        return self.overlap(self)

    def higgs(self):
        return self.mixing.conj().T @ self._raw(self)[1] @ self.mixing

    def remix(self, unitary):
        return LocalizedFrames(self.xi, self.centers, self.fiber, self.width, self.residuals,
                               mixing=self.mixing @ np.asarray(unitary, dtype=complex))

    def reorder(self, order):
        return self.remix(np.eye(self.k)[:, list(order)])

    def fiber_component(self, coeffs, w):
        """
        Fiber vector of sum_a coeffs_a v_a at the plane point w, with the
        largest such norm over the sheet centres.
        """
        weights = self.mixing @ np.asarray(coeffs, dtype=complex)

        def at(z):
            return (weights * profile(np.abs(z - self.centers), self.width)) @ self.fiber

        peak = max(np.linalg.norm(at(c)) for c in self.centers)
        return at(complex(w)), float(peak)


@dataclass(frozen=True, eq=False)
class VectorFrames:
    """Kernel frames of the assembled planar operator, one column per frame."""

    xi: complex
    vectors: np.ndarray
    w: np.ndarray
    singular_values: np.ndarray
    residuals: np.ndarray
    modes: int = 1

    @property
    def k(self):
        return self.vectors.shape[1]

    def overlap(self, other):
        return self.vectors.conj().T @ other.vectors

    def gram(self):
        return self.overlap(self)

    def higgs(self):
        return self.vectors.conj().T @ (self.w[:, None] * self.vectors)

    def remix(self, unitary):
        return VectorFrames(self.xi, self.vectors @ np.asarray(unitary, dtype=complex), self.w,
                            self.singular_values, self.residuals, self.modes)

    def reorder(self, order):
        return self.remix(np.eye(self.k)[:, list(order)])

    def fiber_component(self, coeffs, w):
        """First spinor half of sum_a coeffs_a v_a at the grid node nearest w, and its peak node norm."""
        combined = self.vectors @ np.asarray(coeffs, dtype=complex)
        half = combined.size // 2
        upper = combined[:half].reshape(-1, self.modes)
        nodes = self.w[:half:self.modes]
        nearest = int(np.argmin(np.abs(nodes - complex(w))))
        return upper[nearest], float(np.linalg.norm(upper, axis=1).max())

    def mass_near(self, center, radius):
        """Squared norm of each frame carried by grid points within ``radius`` of ``center``."""
        near = np.abs(self.w - complex(center)) < radius
        return np.sum(np.abs(self.vectors[near]) ** 2, axis=0)


@dataclass(frozen=True)
class HiggsNode:
    xi: complex
    phi: np.ndarray
    b_x: np.ndarray
    b_y: np.ndarray
    gram_defect: float
    frame_residual: float

    @property
    def k(self):
        return self.phi.shape[0]

    @property
    def eigenvalues(self):
        return np.linalg.eigvals(self.phi)


@dataclass
class HiggsSample:
    """Higgs matrices and Berry connection samples over a grid of the dual torus."""

    nodes: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.nodes)

    def __iter__(self):
        return iter(self.nodes)

    @property
    def xi(self):
        return np.array([node.xi for node in self.nodes], dtype=complex)

    def node_at(self, xi, tol=1e-12):
        for node in self.nodes:
            if abs(node.xi - complex(xi)) <= tol:
                return node
        raise KeyError(xi)


def _inverse_sqrt(gram):
    k = gram.shape[0]
    if np.allclose(gram, np.eye(k), atol=1e-14, rtol=0):
        return np.eye(k)
    values, vectors = np.linalg.eigh(gram)
    return (vectors / np.sqrt(values)) @ vectors.conj().T
