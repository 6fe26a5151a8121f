"""
Run configuration validation. Every check reports into one dict keyed by
the dotted path of the offending field, so a config with several mistakes
is reported in one pass.
"""
from numbers import Number

from curve_model.factories import MODEL_FAMILIES
from nahm.models import MODES

TOLERANCE_FIELDS = ('kernel_tol', 'frame_tol_factor', 'delta', 'branch_margin')


def _is_int(value):
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value):
    return isinstance(value, Number) and not isinstance(value, bool)


def _is_pair(value):
    return isinstance(value, (list, tuple)) and len(value) == 2 and all(_is_number(v) for v in value)


def _section(data, name, errors):
    section = data.get(name, {})
    if not isinstance(section, dict):
        errors[name] = f'{name} must be an object'
        return {}
    return section


def _positive_int(section, key, path, errors, floor=1, required=False):
    value = section.get(key)
    if value is None:
        if required:
            errors[path] = f'{path} is required'
        return
    if not _is_int(value) or value < floor:
        errors[path] = f'{path} must be an integer >= {floor}'


def _positive_number(section, key, path, errors):
    value = section.get(key)
    if value is not None and (not _is_number(value) or value <= 0):
        errors[path] = f'{path} must be a positive number'


def validate_model(model, errors):
    if not isinstance(model, dict):
        errors['model'] = 'model is required'
        return
    family = model.get('family', 'generic')
    if family not in MODEL_FAMILIES:
        errors['model.family'] = f'model.family must be one of {sorted(MODEL_FAMILIES)}'

    if model.get('theta_coeffs') is None:
        _positive_int(model, 'k', 'model.k', errors, required=True)
    elif 'k' in model:
        _positive_int(model, 'k', 'model.k', errors)

    tau = model.get('tau', [0.0, 1.0])
    if not _is_pair(tau):
        errors['model.tau'] = 'model.tau must be a [re, im] pair'
    elif tau[1] <= 0:
        errors['model.tau'] = 'model.tau must lie in the upper half plane'

    if 'xi0' not in model:
        errors['model.xi0'] = 'model.xi0 is required'
    elif not _is_pair(model['xi0']):
        errors['model.xi0'] = 'model.xi0 must be a [re, im] pair'

    for key in ('a', 'b'):
        if key in model and not _is_pair(model[key]):
            errors[f'model.{key}'] = f'model.{key} must be a [re, im] pair'
    if 'seed' in model and not _is_int(model['seed']):
        errors['model.seed'] = 'model.seed must be an integer'

    rows = model.get('theta_coeffs')
    if rows is not None:
        if not isinstance(rows, list) or not all(
            isinstance(row, list) and len(row) == 2 and all(_is_pair(c) for c in row) for row in rows
        ):
            errors['model.theta_coeffs'] = 'model.theta_coeffs must be a list of rows of two [re, im] pairs'
        elif _is_int(model.get('k')) and len(rows) != model['k'] + 1:
            errors['model.theta_coeffs'] = f'model.theta_coeffs must have k + 1 = {model["k"] + 1} rows'


def validate_run_config(data):
    """Return {dotted.path: message}; empty when the config is usable."""
    errors = {}
    if not isinstance(data, dict):
        return {'config': 'config must be a JSON object'}

    validate_model(data.get('model'), errors)

    grids = _section(data, 'grids', errors)
    _positive_int(grids, 'xi', 'grids.xi', errors, floor=2)
    _positive_int(grids, 'w', 'grids.w', errors, floor=3)
    _positive_number(grids, 'w_radius', 'grids.w_radius', errors)
    _positive_int(grids, 'fiber_points', 'grids.fiber_points', errors, floor=0)
    loops = grids.get('loop_sizes')
    if loops is not None and (not isinstance(loops, list) or not all(_is_int(s) and s >= 1 for s in loops)):
        errors['grids.loop_sizes'] = 'grids.loop_sizes must be a list of positive integers'

    truncation = _section(data, 'truncation', errors)
    _positive_int(truncation, 'N', 'truncation.N', errors)
    _positive_int(truncation, 'fiber_N', 'truncation.fiber_N', errors)
    _positive_int(truncation, 'M', 'truncation.M', errors, floor=4)
    _positive_number(truncation, 'R', 'truncation.R', errors)
    _positive_number(truncation, 'profile_width', 'truncation.profile_width', errors)
    mode = truncation.get('mode')
    if mode is not None and str(mode).upper() not in MODES:
        errors['truncation.mode'] = f'truncation.mode must be one of {list(MODES)}'

    tolerances = _section(data, 'tolerances', errors)
    for key in TOLERANCE_FIELDS:
        _positive_number(tolerances, key, f'tolerances.{key}', errors)
    unknown = sorted(set(tolerances) - set(TOLERANCE_FIELDS))
    if unknown:
        errors['tolerances'] = f'unknown tolerance fields: {", ".join(unknown)}'

    if 'seed' in data and not _is_int(data['seed']):
        errors['seed'] = 'seed must be an integer'

    diagnostics = _section(data, 'diagnostics', errors)
    radii = diagnostics.get('energy_R')
    if radii is not None:
        if not isinstance(radii, list) or not radii or not all(_is_number(r) and r > 0 for r in radii):
            errors['diagnostics.energy_R'] = 'diagnostics.energy_R must be a list of positive radii'
        elif any(b <= a for a, b in zip(radii, radii[1:])):
            errors['diagnostics.energy_R'] = 'diagnostics.energy_R must be increasing'
    _positive_int(diagnostics, 'hitchin_patches', 'diagnostics.hitchin_patches', errors, floor=0)
    _positive_number(diagnostics, 'pole_reach', 'diagnostics.pole_reach', errors)
    _positive_int(diagnostics, 'pole_nodes', 'diagnostics.pole_nodes', errors, floor=2)

    output = data.get('output')
    if output is not None and not isinstance(output, str):
        errors['output'] = 'output must be a directory path'
    return errors
