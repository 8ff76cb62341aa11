"""
Closed-form results the numerical routes are checked against.
"""
import math

import numpy as np
from scipy.integrate import quad
from scipy.special import spherical_jn, spherical_yn


def square_transmission(height, width, energy):
    """Complex T of a square barrier (height > 0) or well (height < 0) of the given width."""
    k = math.sqrt(2.0 * energy)
    q = np.sqrt(complex(2.0 * (energy - height)))
    denominator = np.cos(q * width) - 0.5j * (k * k + q * q) / (k * q) * np.sin(q * width)
    return complex(np.exp(-1j * k * width) / denominator)


def square_transmission_probability(height, width, energy):
    """|T|^2 in the familiar sinh / sin form."""
    if energy < height:
        kappa = math.sqrt(2.0 * (height - energy))
        return 1.0 / (1.0 + math.sinh(kappa * width) ** 2 * height ** 2 / (4.0 * energy * (height - energy)))
    q = math.sqrt(2.0 * (energy - height))
    return 1.0 / (1.0 + math.sin(q * width) ** 2 * height ** 2 / (4.0 * energy * (energy - height)))


def square_transmission_phase_derivative(height, width, energy, h=1e-6):
    """d arg T / dE by a central difference of the closed form."""
    forward = square_transmission(height, width, energy + h)
    backward = square_transmission(height, width, energy - h)
    return float(np.angle(forward / backward)) / (2.0 * h)


def radial_well_phase_shift(depth, radius, energy):
    """s-wave shift of V = -depth for s < radius: tan(kR + delta) = (k / K) tan(KR)."""
    k = math.sqrt(2.0 * energy)
    inner = math.sqrt(2.0 * (energy + depth))
    return math.atan2(k * math.sin(inner * radius), inner * math.cos(inner * radius)) - k * radius


def riccati(l, z):
    s = z * spherical_jn(l, z)
    c = -z * spherical_yn(l, z)
    ds = spherical_jn(l, z) + z * spherical_jn(l, z, derivative=True)
    dc = -spherical_yn(l, z) - z * spherical_yn(l, z, derivative=True)
    return s, c, ds, dc


def radial_well_phase_shift_l(depth, radius, energy, l):
    """Shift of partial wave l from matching log-derivatives at the well edge."""
    k = math.sqrt(2.0 * energy)
    inner = math.sqrt(2.0 * (energy + depth))
    s_in, _, ds_in, _ = riccati(l, inner * radius)
    log_derivative = inner * ds_in / s_in
    s, c, ds, dc = riccati(l, k * radius)
    return math.atan2(k * ds - log_derivative * s, log_derivative * c - k * dc)


def hard_core_phase_shift(radius, energy, l=0):
    """u vanishes at the core: tan delta = -s_l(ka) / c_l(ka)."""
    k = math.sqrt(2.0 * energy)
    s, c, _, _ = riccati(l, k * radius)
    return math.atan2(-s, c)


def phase_difference(first, second):
    """Distance between two phase shifts, blind to multiples of pi."""
    return abs(math.sin(first - second))


def classical_square_delay(height, width, energy):
    """Transmission (E > height) or reflection delay of a square barrier centred on the origin."""
    v = math.sqrt(2.0 * energy)
    if energy > height:
        return width / math.sqrt(2.0 * (energy - height)) - width / v
    return -width / v


def classical_smooth_delay(potential, lower, upper, energy):
    """Transmission delay over [lower, upper] for E above the barrier top."""
    v = math.sqrt(2.0 * energy)

    def integrand(x):
        return 1.0 / math.sqrt(2.0 * (energy - float(potential(x)))) - 1.0 / v

    value, _ = quad(integrand, lower, upper, limit=200)
    return value
