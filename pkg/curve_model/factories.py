"""
Factory Pattern Implementation for Spectral Curve Models

Each concrete factory knows how to produce the theta coefficients of one model
family; the abstract base fixes the construction order (leading coefficient,
lower coefficients, evenness check) in a single template method.
"""

import logging
from abc import ABC, abstractmethod

import numpy as np

from torus.models import Lattice
from torus.special import theta_basis

from .exceptions import ConfigurationError, NumericalError
from .models import BuiltinK1, CurveModel

logger = logging.getLogger(__name__)


def leading_coefficient(lat: Lattice, xi0):
    """Basis coefficients of the degree-2 theta function vanishing exactly at +-xi0."""
    values = theta_basis(2, lat).evaluate(complex(xi0))
    coeffs = np.array([values[1], -values[0]], dtype=complex)
    return coeffs / np.linalg.norm(coeffs)


def solve_coefficients(lat: Lattice, func, coords=((0.23, 0.31), (0.61, 0.17), (0.37, 0.77), (0.83, 0.59))):
    """
    Least-squares basis coefficients of a degree-2 section given by its values
    at a few points (lattice coordinates). Raises when the fit is not exact.
    """
    basis = theta_basis(2, lat)
    x, y = np.asarray(coords, dtype=float).T
    pts = lat.point(x, y)
    matrix = basis.evaluate(pts).T
    rhs = np.asarray(func(pts), dtype=complex)
    coeffs, *_ = np.linalg.lstsq(matrix, rhs, rcond=None)
    misfit = np.abs(matrix @ coeffs - rhs).max()
    if misfit > 1e-8 * max(1.0, np.abs(rhs).max()):
        raise NumericalError(f"values are not a degree-2 section (misfit {misfit:.2e})")
    return coeffs


class CurveModelFactory(ABC):
    """
    Abstract Factory for spectral curve models.
    Defines the interface for producing the coefficient rows of F(xi, w).
    """

    family = 'abstract'

    @abstractmethod
    def leading_row(self, lat, xi0, **kwargs):
        """Coefficients of theta_k (must vanish at +-xi0)"""
        pass

    @abstractmethod
    def lower_rows(self, lat, xi0, k, **kwargs):
        """Coefficients of theta_0 .. theta_{k-1}"""
        pass

    def create_model(self, k, tau, xi0, **kwargs):
        """
        Template method that orchestrates model construction.
        Builds the rows, lets CurveModel validate the asymptotic state and
        checks evenness.
        """
        lat = Lattice(complex(tau))
        lead = self.leading_row(lat, xi0, **kwargs)
        lower = self.lower_rows(lat, xi0, k, **kwargs)
        coeffs = np.vstack([np.atleast_2d(lower), lead[None, :]])
        model = CurveModel(k=k, lat=lat, xi0=xi0, coeffs=coeffs, family=self.family)
        check_evenness(model)
        logger.info('built %s', model)
        return model


class BuiltinK1Factory(CurveModelFactory):
    """
    The k = 1 family F(xi, w) = theta_1(xi) * (w - phi(xi)), phi the zeta-difference
    sheet map. The rows are recovered from phi*theta_1, which is again a
    degree-2 section because theta_1 cancels the poles of phi.
    """

    family = 'builtin_k1'

    def leading_row(self, lat, xi0, **kwargs):
        return leading_coefficient(lat, xi0)

    def lower_rows(self, lat, xi0, k, a=1.0, b=0.0, **kwargs):
        if k != 1:
            raise ConfigurationError('the builtin family has k = 1')
        builtin = BuiltinK1(a=a, b=b, xi0=xi0, lat=lat)
        lead = leading_coefficient(lat, xi0)
        basis = theta_basis(2, lat)

        def theta0(pts):
            return -builtin.phi(pts) * (lead @ basis.evaluate(pts))

        return solve_coefficients(lat, theta0)[None, :]

    def create_model(self, k=1, tau=1j, xi0=0.25 + 0.1j, a=1.0, b=0.0, **kwargs):
        return super().create_model(k, tau, xi0, a=a, b=b)


class GenericEvenFactory(CurveModelFactory):
    """Random lower rows from a seeded generator; generic for almost every seed."""

    family = 'generic'

    def leading_row(self, lat, xi0, scale=1.0, **kwargs):
        return complex(scale) * leading_coefficient(lat, xi0)

    def lower_rows(self, lat, xi0, k, seed=0, **kwargs):
        rng = np.random.default_rng(seed)
        return rng.normal(size=(k, 2)) + 1j * rng.normal(size=(k, 2))


class ExplicitFactory(CurveModelFactory):
    """Rows given verbatim (JSON input); the leading row is checked, not rebuilt."""

    family = 'explicit'

    def leading_row(self, lat, xi0, rows=None, **kwargs):
        lead = np.asarray(rows, dtype=complex)[-1]
        values = lead @ theta_basis(2, lat).evaluate(np.array([xi0, -xi0]))
        if np.any(np.abs(values) > 1e-8 * max(np.linalg.norm(lead), 1.0)):
            raise ConfigurationError('theta_k must vanish at +-xi0 (leading row does not)')
        return lead

    def lower_rows(self, lat, xi0, k, rows=None, **kwargs):
        return np.asarray(rows, dtype=complex)[:-1]


class CollidingBranchFactory(CurveModelFactory):
    """
    A k = 2 model whose half-period polynomial at xi = 0 has a double root, so
    two branch points collide. Used to exercise the smoothness detector.
    """

    family = 'colliding'

    def leading_row(self, lat, xi0, **kwargs):
        return leading_coefficient(lat, xi0)

    def lower_rows(self, lat, xi0, k, seed=0, **kwargs):
        if k != 2:
            raise ConfigurationError('the colliding family has k = 2')
        basis_at_zero = theta_basis(2, lat).evaluate(0.0)
        rng = np.random.default_rng(seed)
        row0 = rng.normal(size=2) + 1j * rng.normal(size=2)
        direction = np.array([1.0, 0.5], dtype=complex)
        t2 = leading_coefficient(lat, xi0) @ basis_at_zero
        t0 = row0 @ basis_at_zero
        # theta_1(0)^2 = 4 theta_2(0) theta_0(0) makes the discriminant vanish.
        t1 = np.sqrt(4 * t2 * t0)
        row1 = direction * (t1 / (direction @ basis_at_zero))
        return np.vstack([row0, row1])


MODEL_FAMILIES = {
    'builtin_k1': BuiltinK1Factory(),
    'generic': GenericEvenFactory(),
    'explicit': ExplicitFactory(),
    'colliding': CollidingBranchFactory(),
}


def get_factory(family):
    try:
        return MODEL_FAMILIES[family]
    except KeyError:
        raise ConfigurationError(f'Unsupported model family: {family}') from None


def check_evenness(model, samples=5, seed=11):
    """F(-xi, w) / F(xi, w) must be one xi-independent constant."""
    rng = np.random.default_rng(seed)
    xi = rng.random(samples) + rng.random(samples) * model.lat.tau
    w = complex(rng.normal(), rng.normal())
    from .sheets import eval_F
    ratios = eval_F(model, -xi, w) / eval_F(model, xi, w)
    spread = np.abs(ratios - ratios[0]).max()
    if spread > 1e-8 * max(1.0, abs(ratios[0])):
        raise ConfigurationError(f'model is not even (ratio spread {spread:.2e})')
    return complex(ratios[0])


def builtin_k1(a=1.0, b=0.0, xi0=0.25 + 0.1j, tau=1j):
    """Shortcut returning (CurveModel, BuiltinK1) for the builtin family."""
    model = MODEL_FAMILIES['builtin_k1'].create_model(tau=tau, xi0=xi0, a=a, b=b)
    return model, BuiltinK1(a=a, b=b, xi0=xi0, lat=model.lat)
