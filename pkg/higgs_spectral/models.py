from dataclasses import dataclass, field

import numpy as np

from torus.models import Lattice

from .exceptions import ConfigurationError

UNASSIGNED = -1
AT_INFINITY = -2


def sample_lattice(sample):
    """The lattice a HiggsSample was computed on, read from its metadata."""
    try:
        tau = sample.metadata['tau']
    except KeyError:
        raise ConfigurationError('sample metadata carries no tau') from None
    return Lattice(complex(*tau) if isinstance(tau, (list, tuple)) else complex(tau))


def sample_punctures(sample):
    """(xi0, -xi0) of the sample's model, or [] when it has none."""
    xi0 = sample.metadata.get('xi0')
    if xi0 is None:
        return []
    xi0 = complex(*xi0) if isinstance(xi0, (list, tuple)) else complex(xi0)
    return [xi0, -xi0]


@dataclass(frozen=True)
class CurvePoint:
    xi: complex
    w: complex
    sheet: int
    cond: float

    @property
    def at_infinity(self):
        return not np.isfinite(self.w)


@dataclass
class HiggsCurveCloud:
    """Eigenvalues of the Higgs field at every sampled xi, with sheet labels."""

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

    def over(self, xi, tol=1e-12):
        """Points whose base is xi."""
        return [p for p in self.points if abs(p.xi - complex(xi)) <= tol]

    def sheet(self, label):
        return [p for p in self.points if p.sheet == label]

    def rows(self):
        rows = []
        for p in self.points:
            finite = not p.at_infinity
            rows.append({
                'xi_re': p.xi.real, 'xi_im': p.xi.imag,
                'w_re': p.w.real if finite else None, 'w_im': p.w.imag if finite else None,
                'sheet': p.sheet, 'cond': p.cond,
            })
        return rows


@dataclass(frozen=True, eq=False)
class CokernelFrame:
    """Unit left-null vector u of Phi[xi] - w: u^H (Phi - w) = 0."""

    xi: complex
    w: complex
    vector: np.ndarray
    residual: float
    phase: str = 'max-real'

    @property
    def k(self):
        return len(self.vector)


@dataclass(frozen=True)
class HiggsBranchPoint:
    """A zero of the discriminant over xi; ``winding`` certifies it on its grid cell."""

    xi: complex
    w: complex
    winding: int
    discriminant: float = None


@dataclass(frozen=True)
class PoleReport:
    xi: complex
    order: float
    residue_rank: int
    semisimple: bool
    residue_singular_values: tuple
    probe_nodes: int
    closest: float

    def as_dict(self):
        return {
            'xi': [self.xi.real, self.xi.imag],
            'order': self.order,
            'residue_rank': self.residue_rank,
            'semisimple': self.semisimple,
            'residue_singular_values': list(self.residue_singular_values),
            'probe_nodes': self.probe_nodes,
            'closest': self.closest,
        }
