"""
Django settings for the timelab project.
"""

from pathlib import Path
import os
from dotenv import load_dotenv
from django.core.exceptions import ImproperlyConfigured

load_dotenv()

# Import dj_database_url (required)
try:
    import dj_database_url
except ImportError:
    dj_database_url = None

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# The lab has no web surface; the key only satisfies Django's checks.
SECRET_KEY = os.getenv('SECRET_KEY', 'django-insecure-timelab-local-key')

DEBUG = os.getenv('DEBUG', 'False') == 'True'

ALLOWED_HOSTS = os.getenv('ALLOWED_HOSTS', 'localhost,127.0.0.1').split(',')


# Application definition

INSTALLED_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
    'rest_framework',
    'delays',
]

MIDDLEWARE = []


# Database
# https://docs.djangoproject.com/en/4.2/ref/settings/#databases

# Run records only; a local sqlite file is enough unless DATABASE_URL says otherwise
DATABASE_URL = os.getenv('DATABASE_URL', f"sqlite:///{BASE_DIR / 'timelab.sqlite3'}")

if dj_database_url:
    DATABASES = {
        'default': dj_database_url.config(
            default=DATABASE_URL,
            conn_max_age=600,
        )
    }
else:
    raise ImproperlyConfigured(
        "dj-database-url package is required. Install it with: pip install dj-database-url"
    )


# Internationalization
# https://docs.djangoproject.com/en/4.2/topics/i18n/

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


def _env_float(name, default):
    value = os.getenv(f'TIMELAB_{name.upper()}')
    return float(value) if value not in (None, '') else default


# Numerical defaults (natural units, hbar = m = 1)
TIMELAB_NUMERICS = {
    'e_min': _env_float('e_min', 0.05),
    'phase_step': _env_float('phase_step', 1e-4),
    'points_per_wavelength': int(_env_float('points_per_wavelength', 200)),
    'radial_points_per_wavelength': int(_env_float('radial_points_per_wavelength', 800)),
    'condition_threshold': _env_float('condition_threshold', 1e-10),
    'unitarity_tolerance': _env_float('unitarity_tolerance', 1e-6),
    'floquet_unitarity_tolerance': _env_float('floquet_unitarity_tolerance', 1e-4),
    'region_probability_floor': _env_float('region_probability_floor', 1e-8),
    'quiet_steps': int(_env_float('quiet_steps', 100)),
    'norm_drift_tolerance': _env_float('norm_drift_tolerance', 1e-6),
    'absorber_width': _env_float('absorber_width', 20.0),
    'qr_interval': int(_env_float('qr_interval', 20)),
    'rho_ratio': _env_float('rho_ratio', 0.1),
    'slope_points': int(_env_float('slope_points', 64)),
}

# Logging Configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        'delays': {
            'handlers': ['console'],
            'level': os.getenv('TIMELAB_LOG_LEVEL', 'WARNING'),
            'propagate': False,
        },
    },
}
