"""
Access to the numerical defaults declared in settings.TIMELAB_NUMERICS.

A run may override them for its own duration with `overridden(...)`; the
`numerics.*` section of a run configuration goes through there.
"""
from contextlib import contextmanager
from contextvars import ContextVar

from django.conf import settings

_FALLBACK = {
    'e_min': 0.05,
    'phase_step': 1e-4,
    'points_per_wavelength': 200,
    'radial_points_per_wavelength': 800,
    'condition_threshold': 1e-10,
    'unitarity_tolerance': 1e-6,
    'floquet_unitarity_tolerance': 1e-4,
    'region_probability_floor': 1e-8,
    'quiet_steps': 100,
    'norm_drift_tolerance': 1e-6,
    'absorber_width': 20.0,
    'qr_interval': 20,
    'rho_ratio': 0.1,
    'slope_points': 64,
}

_overrides: ContextVar = ContextVar('timelab_numerics', default={})


def names() -> tuple:
    return tuple(_FALLBACK)


def numerics() -> dict:
    """Resolved numerical defaults; settings entries override the fallbacks, run overrides win."""
    resolved = dict(_FALLBACK)
    if settings.configured:
        resolved.update(getattr(settings, 'TIMELAB_NUMERICS', {}))
    resolved.update(_overrides.get())
    return resolved


def numeric(name: str):
    return numerics()[name]


@contextmanager
def overridden(**values):
    token = _overrides.set({**_overrides.get(), **values})
    try:
        yield numerics()
    finally:
        _overrides.reset(token)
