from fiber_dirac.exceptions import FrameCorrelationLoss  # noqa: F401
from torus.exceptions import ConfigurationError, NumericalError


class CutConfigInvalid(ConfigurationError):
    """Cut arcs do not pair the branch points or pass through grid nodes."""


class DimensionMismatch(NumericalError):
    """The certified kernel dimension differs from the instanton number."""
