import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from curve_model.serializers import model_from_json
from match_fm.models import MatchConfig
from nahm.families import CurveFamily
from nahm.models import TransformConfig
from torus.geometry import fundamental_grid

from .exceptions import ConfigurationError, InvalidRunConfig
from .validation import validate_run_config

# Default plane radius beyond the outermost branch point.
R_MARGIN = 3.0

DEFAULT_ENERGY_R = (4.0, 8.0, 16.0)

# Run config tolerance -> SPECTRAL_LAB entry.
TOLERANCE_SETTINGS = {
    'kernel_tol': 'KERNEL_TOL',
    'frame_tol_factor': 'FRAME_TOL_FACTOR',
    'delta': 'PUNCTURE_RADIUS',
    'branch_margin': 'BRANCH_MARGIN',
}


@dataclass(frozen=True)
class RunConfig:
    """
    A validated run configuration file.

    Sections: ``model`` (CurveModel JSON), ``grids`` (xi: n for an n x n
    dual grid, w: m for an m x m window, optional w_radius), ``truncation``
    (N, fiber_N, M, R, mode, profile_width), ``tolerances`` (kernel_tol,
    frame_tol_factor, delta, branch_margin), ``seed``, ``diagnostics`` and
    ``output``.
    """

    model: dict
    grids: dict = field(default_factory=dict)
    truncation: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    seed: int = None
    diagnostics: dict = field(default_factory=dict)
    output: str = None
    source: str = None

    @classmethod
    def from_dict(cls, data, source=None):
        errors = validate_run_config(data)
        if errors:
            raise InvalidRunConfig(errors)
        return cls(
            model=dict(data['model']),
            grids=dict(data.get('grids', {})),
            truncation=dict(data.get('truncation', {})),
            tolerances=dict(data.get('tolerances', {})),
            seed=data.get('seed'),
            diagnostics=dict(data.get('diagnostics', {})),
            output=data.get('output'),
            source=source,
        )

    @classmethod
    def from_json(cls, path):
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigurationError(f'cannot read config {path}: {exc}') from exc
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidRunConfig({'config': f'line {exc.lineno}, column {exc.colno}: {exc.msg}'}) from exc
        return cls.from_dict(data, source=str(path))

    def overrides(self):
        """SPECTRAL_LAB entries this run replaces; None keeps the default."""
        values = {name: self.tolerances.get(key) for key, name in TOLERANCE_SETTINGS.items()}
        values['SOLVER_SEED'] = self.seed
        return values

    def output_dir(self, default):
        return Path(self.output or default)

    @property
    def xi_points(self):
        return int(self.grids.get('xi', 8))

    @property
    def w_points(self):
        return int(self.grids.get('w', 41))

    @property
    def fiber_N(self):
        return int(self.truncation.get('fiber_N', 8))

    @property
    def energy_R(self):
        return list(self.diagnostics.get('energy_R', DEFAULT_ENERGY_R))

    def build_model(self):
        return model_from_json(self.model)

    def xi_grid(self, model):
        return fundamental_grid(model.lat, self.xi_points)

    def w_grid(self, radius):
        axis = np.linspace(-radius, radius, self.w_points)
        return axis[:, None] + 1j * axis[None, :]

    def default_w_radius(self, model):
        """Half-width of the scan window: configured, or a margin past the branch points."""
        if self.grids.get('w_radius') is not None:
            return float(self.grids['w_radius'])
        branches = CurveFamily(model).branch_points
        return max((abs(b) for b in branches), default=0.0) + R_MARGIN

    def transform_config(self, model):
        truncation = self.truncation
        R = truncation.get('R')
        if R is None:
            branches = CurveFamily(model).branch_points
            R = max((abs(b) for b in branches), default=0.0) + R_MARGIN
        return TransformConfig.for_model(
            model,
            R=float(R),
            M=int(truncation.get('M', 32)),
            N=int(truncation.get('N', 1)),
            mode=truncation.get('mode', 'LOCALIZED'),
            profile_width=truncation.get('profile_width'),
        )

    def match_config(self, transform, workers=None):
        grids = self.grids
        return MatchConfig(
            transform=transform,
            xi_points=self.xi_points,
            w_radius=grids.get('w_radius'),
            w_points=self.w_points,
            fiber_N=self.fiber_N,
            fiber_points=grids.get('fiber_points', 4),
            loop_sizes=tuple(grids.get('loop_sizes', (1, 2, 3))),
            workers=workers,
        )

    def describe(self):
        return {
            'model': self.model, 'grids': self.grids, 'truncation': self.truncation,
            'tolerances': self.tolerances, 'seed': self.seed, 'diagnostics': self.diagnostics,
        }
