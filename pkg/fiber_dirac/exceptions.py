from torus.exceptions import ConfigurationError, NumericalError  # noqa: F401


class ConvergenceFailure(NumericalError):
    """The iterative singular-value solver did not converge."""


class RankAmbiguity(NumericalError):
    """The fiber kernel is not one-dimensional (non-regular fiber)."""


class BranchTooClose(NumericalError):
    """A holonomy loop passes within the margin of a branch point."""


class FrameCorrelationLoss(NumericalError):
    """Consecutive frames along a loop are nearly orthogonal."""


class NotOnCurve(NumericalError):
    """No singular value of the fiber operator is below the frame tolerance."""
