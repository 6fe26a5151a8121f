import json

import numpy as np

from .exceptions import ConfigurationError
from .factories import get_factory
from .models import CurveModel


def _pair(value, name):
    try:
        re, im = value
        return complex(float(re), float(im))
    except (TypeError, ValueError):
        raise ConfigurationError(f'{name} must be a [re, im] pair, got {value!r}') from None


def model_to_json(model: CurveModel, **extra):
    """CurveModel as a JSON-ready dict: {k, tau, xi0, theta_coeffs, family, ...}."""
    payload = {
        'k': model.k,
        'tau': model.lat.to_json(),
        'xi0': [model.xi0.real, model.xi0.imag],
        'theta_coeffs': [[[c.real, c.imag] for c in row] for row in model.coeffs],
        'family': model.family,
    }
    payload.update(extra)
    return payload


def model_from_json(data):
    """
    Build a CurveModel from its JSON dict. Explicit ``theta_coeffs`` win;
    otherwise the family factory builds the rows from its parameters
    (``a``, ``b`` for builtin_k1, ``seed`` for generic and colliding).
    """
    if isinstance(data, str):
        try:
            data = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f'Invalid JSON: {exc}') from exc

    tau = _pair(data.get('tau', [0.0, 1.0]), 'tau')
    xi0 = _pair(data.get('xi0'), 'xi0')
    family = data.get('family', 'generic')

    if data.get('theta_coeffs') is not None:
        rows = np.array([[_pair(c, 'theta_coeffs') for c in row] for row in data['theta_coeffs']])
        k = int(data.get('k', len(rows) - 1))
        if rows.shape != (k + 1, 2):
            raise ConfigurationError(f'theta_coeffs must have shape ({k + 1}, 2), got {rows.shape}')
        model = get_factory('explicit').create_model(k, tau, xi0, rows=rows)
        return CurveModel(k=model.k, lat=model.lat, xi0=model.xi0, coeffs=model.coeffs, family=family)

    params = {}
    if family == 'builtin_k1':
        params['a'] = _pair(data.get('a', [1.0, 0.0]), 'a')
        params['b'] = _pair(data.get('b', [0.0, 0.0]), 'b')
    else:
        params['seed'] = int(data.get('seed', 0))
    try:
        k = int(data['k'])
    except (KeyError, TypeError, ValueError):
        raise ConfigurationError('k must be a positive integer') from None
    return get_factory(family).create_model(k=k, tau=tau, xi0=xi0, **params)
