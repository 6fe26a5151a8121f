"""
Fiber families: the data the transform is run on. A family knows its
fiber pair eta(w) (up to sign and lattice), its sheets w_i(xi) over the
dual torus, or both.
"""
import logging
from abc import ABC, abstractmethod
from functools import cached_property

import numpy as np

from curve_model.branching import branch_points, branch_table
from curve_model.exceptions import CountMismatch
from curve_model.sheets import continue_pair, eta_slopes, fiber_pair, sheets_over_xi
from torus.conf import lab_setting
from torus.geometry import nearest_lattice_shift
from torus.models import Lattice

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

STENCIL_POINTS = 8


def stencil_derivatives(family, w_points, step=None):
    """
    (d eta / dw, d eta / d w-bar) at every point from a circular stencil of
    lifts; the eight-point rule is exact through degree 6.
    """
    step = step or lab_setting('FD_STEP')
    roots = np.exp(2j * np.pi * np.arange(STENCIL_POINTS) / STENCIL_POINTS)
    points = np.ravel(np.asarray(w_points, dtype=complex))
    holo = np.empty(points.size, dtype=complex)
    anti = np.empty(points.size, dtype=complex)
    for i, w in enumerate(points):
        center = family.pair(w)
        values = np.array([family.lift(w + step * z, center) for z in roots])
        holo[i] = np.sum(np.conj(roots) * values) / (STENCIL_POINTS * step)
        anti[i] = np.sum(roots * values) / (STENCIL_POINTS * step)
    shape = np.shape(w_points)
    return holo.reshape(shape), anti.reshape(shape)


class FiberFamily(ABC):
    """Common interface of the families a TransformConfig can carry."""

    name = 'abstract'
    holomorphic = True

    @property
    @abstractmethod
    def k(self):
        pass

    @property
    @abstractmethod
    def lat(self) -> Lattice:
        pass

    @property
    def punctures(self):
        return []

    @cached_property
    def branch_points(self):
        return []

    @abstractmethod
    def pair(self, w):
        """One member of the fiber pair over w."""

    @abstractmethod
    def lift(self, w, previous):
        """The member of the pair over w, lifted to the plane, closest to ``previous``."""

    def sheets(self, xi):
        """The k points w_i(xi) of the curve over xi."""
        raise ConfigurationError(f'{self.name} family has no sheets over the dual torus')

    def fiber_eta(self, xi, w):
        """Lift of the pair over w that xi itself tracks."""
        return self.lift(w, xi)

    def derivatives(self, w_points):
        """(d eta / dw, d eta / d w-bar) at each point; both members of the pair share the moduli."""
        return stencil_derivatives(self, w_points)

    def describe(self):
        return {'family': self.name, 'k': self.k, 'tau': [self.lat.tau.real, self.lat.tau.imag]}


class CurveFamily(FiberFamily):
    """eta(w) read off a spectral curve model F(xi, w) = 0."""

    name = 'curve'

    def __init__(self, model):
        self.model = model

    @property
    def k(self):
        return self.model.k

    @property
    def lat(self):
        return self.model.lat

    @property
    def punctures(self):
        return self.model.punctures

    @cached_property
    def branch_points(self):
        try:
            return branch_points(self.model)
        except CountMismatch as exc:
            # Degenerate models (a = 0, colliding values) still bound the sheets.
            logger.warning('uncertified branch points for %s: %s', self.model, exc)
            return [row['w'] for row in branch_table(self.model)]

    def pair(self, w):
        return fiber_pair(self.model, complex(w))[0]

    def lift(self, w, previous):
        return continue_pair(self.model, complex(w), complex(previous))

    def sheets(self, xi):
        # Puncture disks are the caller's business.
        return np.array(sheets_over_xi(self.model, complex(xi), radius=0.0), dtype=complex)

    def derivatives(self, w_points):
        # eta is holomorphic off the branch points.
        holo = eta_slopes(self.model, w_points)
        return holo, np.zeros_like(holo)

    def describe(self):
        return {**super().describe(), 'model_family': self.model.family, 'xi0': [self.model.xi0.real, self.model.xi0.imag]}


class ConstantFamily(FiberFamily):
    """eta(w) = eta0 everywhere: a flat connection, no curve."""

    name = 'constant'

    def __init__(self, eta0, lat):
        self.eta0 = complex(eta0)
        self._lat = lat

    @property
    def k(self):
        return 0

    @property
    def lat(self):
        return self._lat

    def pair(self, w):
        return self.eta0

    def lift(self, w, previous):
        best = None
        for candidate in (self.eta0, -self.eta0):
            _, _, residual = nearest_lattice_shift(candidate - complex(previous), self.lat)
            if best is None or abs(residual) < abs(best):
                best = complex(residual)
        return complex(previous) + best

    def sheets(self, xi):
        return np.array([], dtype=complex)

    def derivatives(self, w_points):
        zeros = np.zeros(np.shape(w_points), dtype=complex)
        return zeros, zeros.copy()


class ConjugatedFamily(FiberFamily):
    """eta(conj(w)) for a base family: anti-holomorphic in w."""

    name = 'conjugated'
    holomorphic = False

    def __init__(self, base: FiberFamily):
        self.base = base

    @property
    def k(self):
        return self.base.k

    @property
    def lat(self):
        return self.base.lat

    @property
    def punctures(self):
        return self.base.punctures

    @cached_property
    def branch_points(self):
        return [complex(np.conj(b)) for b in self.base.branch_points]

    def pair(self, w):
        return self.base.pair(np.conj(complex(w)))

    def lift(self, w, previous):
        return self.base.lift(np.conj(complex(w)), previous)

    def sheets(self, xi):
        return np.conj(self.base.sheets(xi))

    def fiber_eta(self, xi, w):
        return self.base.fiber_eta(xi, np.conj(complex(w)))

    def derivatives(self, w_points):
        holo, anti = self.base.derivatives(np.conj(np.asarray(w_points, dtype=complex)))
        return anti, holo


class PerturbedFamily(FiberFamily):
    """
    Sheets of a base family moved by a smooth, doubly periodic,
    non-holomorphic offset eps * g(xi). Only the sheet picture exists, so
    this family runs in LOCALIZED mode only.
    """

    name = 'perturbed'
    holomorphic = False

    def __init__(self, base: FiberFamily, eps=0.2, seed=0, modes=2):
        self.base = base
        self.eps = float(eps)
        self.seed = int(seed)
        rng = np.random.default_rng(self.seed)
        p, q = np.meshgrid(np.arange(-modes, modes + 1), np.arange(-modes, modes + 1), indexing='ij')
        keep = (p != 0) | (q != 0)
        self._p, self._q = p[keep], q[keep]
        decay = 1.0 / (1.0 + self._p ** 2 + self._q ** 2)
        self._c = decay * (rng.normal(size=self._p.size) + 1j * rng.normal(size=self._p.size))

    @property
    def k(self):
        return self.base.k

    @property
    def lat(self):
        return self.base.lat

    @property
    def punctures(self):
        return self.base.punctures

    @cached_property
    def branch_points(self):
        return self.base.branch_points

    def offset(self, xi):
        x, y = self.lat.coordinates(complex(xi))
        return complex(np.sum(self._c * np.exp(2j * np.pi * (self._p * x + self._q * y))))

    def pair(self, w):
        raise ConfigurationError('perturbed family has no fiber pair over w')

    def lift(self, w, previous):
        raise ConfigurationError('perturbed family has no fiber pair over w')

    def sheets(self, xi):
        return self.base.sheets(xi) + self.eps * self.offset(xi)

    def fiber_eta(self, xi, w):
        # Every sheet point lies on the family's curve by construction.
        return complex(xi)

    def describe(self):
        return {**super().describe(), 'eps': self.eps, 'seed': self.seed}
