from fiber_dirac.exceptions import BranchTooClose, FrameCorrelationLoss  # noqa: F401
from torus.exceptions import ConfigurationError, NumericalError  # noqa: F401


class EmptyCloud(NumericalError):
    """A curve comparison was asked for with no points on one side."""
