from fiber_dirac.exceptions import BranchTooClose, FrameCorrelationLoss, NotOnCurve  # noqa: F401
from torus.exceptions import ConfigurationError, NumericalError  # noqa: F401


class SheetTrackingAmbiguous(NumericalError):
    """Nearest-neighbour continuation cannot tell two eigenvalue sheets apart."""


class EigenvalueNotSimple(NumericalError):
    """The cokernel of Phi - w is more than one-dimensional."""


class ProbeTooShort(NumericalError):
    """Too few radial probe nodes, or they stop too far from the puncture."""
