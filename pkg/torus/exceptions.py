class SpectralLabError(Exception):
    """Base class for every error raised by the lab."""


class ConfigurationError(SpectralLabError, ValueError):
    """Invalid input data or run configuration."""


class NumericalError(SpectralLabError, ArithmeticError):
    """A computation could not produce a certified result."""


class PoleAtLattice(NumericalError):
    """A Weierstrass function was evaluated at a lattice point."""


class RootFindFailure(NumericalError):
    """A zero finder did not recover the expected number of zeros."""
