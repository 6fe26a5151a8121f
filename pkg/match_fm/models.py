from dataclasses import dataclass, field

import numpy as np

from nahm.models import TransformConfig
from torus.conf import lab_setting
from torus.geometry import fundamental_grid

from .exceptions import ConfigurationError


@dataclass(frozen=True, eq=False)
class MatchConfig:
    """
    Grids shared by both sides of a comparison: an n x n cell-centred
    xi-grid over the dual torus and a square w-window for the fiber scan.
    ``w_radius`` left as None is fitted to the Higgs eigenvalues.
    """

    transform: TransformConfig
    xi_points: int = 8
    w_radius: float = None
    w_points: int = 41
    fiber_N: int = 8
    fiber_points: int = 4
    loop_sizes: tuple = (1, 2, 3)
    loop_margin: float = None
    puncture_radius: float = None
    workers: int = None

    def __post_init__(self):
        if not isinstance(self.transform, TransformConfig):
            raise ConfigurationError('MatchConfig needs a TransformConfig')
        for name, floor in (('xi_points', 2), ('w_points', 3), ('fiber_N', 1), ('fiber_points', 0)):
            value = int(getattr(self, name))
            if value < floor:
                raise ConfigurationError(f'{name} must be >= {floor}, got {value}')
            object.__setattr__(self, name, value)
        if self.w_radius is not None and float(self.w_radius) <= 0:
            raise ConfigurationError(f'w_radius must be positive, got {self.w_radius}')
        sizes = tuple(int(s) for s in self.loop_sizes)
        if any(s < 1 for s in sizes):
            raise ConfigurationError(f'loop sizes must be positive, got {sizes}')
        object.__setattr__(self, 'loop_sizes', sizes)
        if self.loop_margin is None:
            object.__setattr__(self, 'loop_margin', lab_setting('BRANCH_MARGIN'))
        if self.puncture_radius is None:
            object.__setattr__(self, 'puncture_radius', lab_setting('PUNCTURE_RADIUS'))

    @property
    def lat(self):
        return self.transform.lat

    @property
    def xi_step(self):
        return 1.0 / self.xi_points

    def xi_grid(self):
        return fundamental_grid(self.lat, self.xi_points)

    def w_grid(self, radius=None):
        radius = float(radius if radius is not None else self.w_radius)
        axis = np.linspace(-radius, radius, self.w_points)
        return axis[:, None] + 1j * axis[None, :]

    def describe(self):
        return {
            **self.transform.describe(),
            'xi_points': self.xi_points, 'w_radius': self.w_radius, 'w_points': self.w_points,
            'fiber_N': self.fiber_N, 'loop_sizes': list(self.loop_sizes), 'loop_margin': self.loop_margin,
            'puncture_radius': self.puncture_radius,
        }


@dataclass
class MatchState:
    """Everything the match stages hand on to each other."""

    model: object
    sample: object = None
    higgs_cloud: object = None
    instanton_cloud: object = None
    w_radius: float = None
    hausdorff: tuple = None
    fiber_defects: list = field(default_factory=list)
    holonomy: list = field(default_factory=list)
    support: object = None
    rank: dict = field(default_factory=dict)
    fm_support_distance: float = None
    timings: dict = field(default_factory=dict)


@dataclass
class MatchReport:
    hausdorff_S_to_C: float
    hausdorff_C_to_S: float
    holonomy: list = field(default_factory=list)
    fiber_defects: list = field(default_factory=list)
    fm_support_distance: float = None
    rank: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)
    # Wall-clock seconds per stage; kept out of as_dict().
    timings: dict = field(default_factory=dict, repr=False)

    @property
    def hausdorff(self):
        return max(self.hausdorff_S_to_C, self.hausdorff_C_to_S)

    @property
    def worst_holonomy(self):
        return max((loop['difference'] for loop in self.holonomy), default=0.0)

    @property
    def worst_fiber_defect(self):
        return max((entry['defect'] for entry in self.fiber_defects), default=0.0)

    def as_dict(self):
        return {
            'hausdorff': self.hausdorff,
            'hausdorff_S_to_C': self.hausdorff_S_to_C,
            'hausdorff_C_to_S': self.hausdorff_C_to_S,
            'holonomy': self.holonomy,
            'fiber_defects': self.fiber_defects,
            'fm_support_distance': self.fm_support_distance,
            'rank': self.rank,
            'metadata': self.metadata,
        }
