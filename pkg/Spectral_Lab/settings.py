from pathlib import Path
import os

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

# Load environment variables from .env if present (safe fallbacks)
try:
    from dotenv import load_dotenv  # type: ignore
except Exception:
    load_dotenv = None


def _env_bool(value, default=False):
    if value is None:
        return default
    return str(value).lower() in ("1", "true", "yes", "on")


def _env_int(value, default):
    if value in (None, ""):
        return default
    try:
        return int(value)
    except (TypeError, ValueError):
        return default


def _env_float(value, default):
    if value in (None, ""):
        return default
    try:
        return float(value)
    except (TypeError, ValueError):
        return default


def _env_list(value):
    if not value:
        return []
    return [item.strip() for item in str(value).split(",") if item.strip()]


# Try to load from .env, but don't fail if module/file not available
ENV_FILE = BASE_DIR / ".env"
if load_dotenv and ENV_FILE.exists():
    try:
        load_dotenv(ENV_FILE)
    except Exception:
        pass
elif ENV_FILE.exists():
    # Minimal fallback parser if python-dotenv is not installed
    try:
        with ENV_FILE.open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line or line.startswith("#") or "=" not in line:
                    continue
                k, v = line.split("=", 1)
                os.environ.setdefault(k.strip(), v.strip())
    except Exception:
        pass


# The lab has no web surface; the key only satisfies Django's startup checks.
SECRET_KEY = os.environ.get('SECRET_KEY', 'spectral-lab-local-only')

DEBUG = _env_bool(os.environ.get('DEBUG'), False)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    'torus',
    'curve_model',
    'fiber_dirac',
    'nahm',
    'higgs_spectral',
    'match_fm',
    'lab',
]

# No database: every artifact is a JSON/CSV/SVG file.
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Worker cap for grid scans; the --workers flag of the commands wins.
LAB_WORKERS = _env_int(os.environ.get('LAB_WORKERS'), os.cpu_count() or 1)

LAB_OUTPUT_DIR = os.environ.get('LAB_OUTPUT_DIR', str(BASE_DIR / 'out'))


# Numerical defaults. Every entry can be overridden with LAB_<NAME>.
_SPECTRAL_DEFAULTS = {
    # torus
    'THETA_TERMS': 12,
    'ZERO_GRID': 64,
    'NEWTON_MAX_ITER': 60,
    'NEWTON_TOL': 1e-13,
    # curve_model
    'PUNCTURE_RADIUS': 0.1,
    'LEADING_COEFF_FLOOR': 1e-10,
    'MULTIPLICITY_RADIUS': 1e-3,
    'BRANCH_SIMPLE_TOL': 1e-7,
    # fiber_dirac
    'KERNEL_TOL': 1e-6,
    'FRAME_TOL_FACTOR': 10.0,
    'BRANCH_MARGIN': 0.05,
    'OVERLAP_FLOOR': 0.5,
    'DENSE_SVD_LIMIT': 4000,
    # nahm
    'PROFILE_WIDTH': 0.15,
    'GAP_FACTOR': 10.0,
    'SOLVER_SEED': 7,
    'FD_STEP': 1e-3,
    # higgs_spectral
    'RESIDUE_RANK_RATIO': 1e-2,
    'DISCRIMINANT_TOL': 1e-10,
}

SPECTRAL_LAB = {}
for _name, _default in _SPECTRAL_DEFAULTS.items():
    _raw = os.environ.get(f'LAB_{_name}')
    if isinstance(_default, int):
        SPECTRAL_LAB[_name] = _env_int(_raw, _default)
    else:
        SPECTRAL_LAB[_name] = _env_float(_raw, _default)


LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        app: {'level': os.environ.get('LAB_LOG_LEVEL', 'INFO')}
        for app in INSTALLED_APPS
    },
}
