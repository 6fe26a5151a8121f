from torus.exceptions import ConfigurationError, NumericalError, RootFindFailure  # noqa: F401


class AsymptoticStateOrderTwo(ConfigurationError):
    """xi0 = -xi0: the double-point case is detected but not analysed."""


class NearPuncture(NumericalError):
    """The requested xi lies inside the excluded disk around +-xi0."""


class DegenerateLeadingCoefficient(NumericalError):
    """theta_k vanishes away from the punctures, so the w-degree drops."""


class CountMismatch(NumericalError):
    """A certified count (branch points, sheets) differs from the expected one."""
