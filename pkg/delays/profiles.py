"""
Incoming energy profiles and fuzzy membership regions.
"""
import logging
from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import simpson

from .conf import numeric
from .exceptions import ConfigurationError, ProfileError
from .potentials import speed, wavenumber

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MembershipShape:
    """Shape g on [0, 1] with g(0) = 1, plus the numbers the interference bound needs."""

    name: str
    g: Callable[[np.ndarray], np.ndarray]
    integral: float
    g2_at_zero: float
    g2_total_variation: float

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        inside = (u >= 0.0) & (u <= 1.0)
        return np.where(inside, self.g(np.clip(u, 0.0, 1.0)), 0.0)


SHAPES = {
    # g' vanishes at both ends
    'cos2': MembershipShape('cos2', lambda u: np.cos(0.5 * np.pi * u) ** 2, 0.5, 0.5 * np.pi ** 2, np.pi),
    # g'(0) = -2, the fixed-energy residual goes like 1/rho
    'quadratic': MembershipShape('quadratic', lambda u: (1.0 - u) ** 2, 1.0 / 3.0, 2.0, 2.0),
    'sharp': MembershipShape('sharp', lambda u: (u == 0.0).astype(float), 0.0, 0.0, 0.0),
}


@dataclass(frozen=True)
class FuzzyProfile:
    """
    Membership chi_{r,rho}(x): 1 for |x - c| <= r, g((|x - c| - r) / rho) beyond.

    rho = 0 (or the 'sharp' shape) is the plain ball of radius r.
    """

    r: float
    rho: float = 0.0
    shape: str = 'cos2'
    center: float = 0.0

    def __post_init__(self):
        if self.r < 0:
            raise ConfigurationError("region radius must be >= 0", r=self.r)
        if self.rho < 0:
            raise ConfigurationError("fuzziness rho must be >= 0", rho=self.rho)
        if self.shape not in SHAPES:
            raise ConfigurationError(f"unknown membership shape '{self.shape}'", allowed=sorted(SHAPES))

    @classmethod
    def sharp(cls, r: float, center: float = 0.0) -> 'FuzzyProfile':
        return cls(r=r, rho=0.0, shape='sharp', center=center)

    @property
    def is_sharp(self) -> bool:
        return self.rho == 0.0 or self.shape == 'sharp'

    @property
    def g(self) -> MembershipShape:
        return SHAPES[self.shape]

    @property
    def outer_radius(self) -> float:
        return self.r if self.is_sharp else self.r + self.rho

    @property
    def f_norm(self) -> float:
        return self.free_flight_normalizer()

    def membership(self, x):
        distance = np.abs(np.asarray(x, dtype=float) - self.center)
        if self.is_sharp:
            return (distance <= self.r).astype(float)
        return np.where(distance <= self.r, 1.0, self.g((distance - self.r) / self.rho))

    def free_flight_normalizer(self) -> float:
        """f(r, rho) = r + rho * integral of g."""
        if self.is_sharp:
            return float(self.r)
        return float(self.r + self.rho * self.g.integral)

    def interference_bound(self, energy: float) -> float:
        """(1 / k rho)(1 / 4E)(|g''(0)| + integral |g''|): bound on the fixed-energy oscillation."""
        if self.is_sharp:
            return np.inf
        k = float(wavenumber(energy))
        g = self.g
        return (g.g2_at_zero + g.g2_total_variation) / (k * self.rho * 4.0 * energy)

    def scaled(self, r: float, rho: Optional[float] = None) -> 'FuzzyProfile':
        return replace(self, r=r, rho=self.rho if rho is None else rho)

    def shifted(self, center: float) -> 'FuzzyProfile':
        return replace(self, center=center)


Region = Union[float, FuzzyProfile]


def as_region(region: Region) -> FuzzyProfile:
    """Accept a bare radius as the sharp ball B_r."""
    if isinstance(region, FuzzyProfile):
        return region
    return FuzzyProfile.sharp(float(region))


def membership(f: FuzzyProfile, x):
    return f.membership(x)


def free_flight_normalizer(f: FuzzyProfile) -> float:
    return f.free_flight_normalizer()


@dataclass(frozen=True, eq=False)
class EnergyProfile:
    """
    Incoming energy distribution phi(E) sampled on an ascending grid.

    |phi|^2 integrates to 1 (Simpson) and no sample lies below e_min.
    `direction` is 'left'/'right' for full-line packets or a channel label.
    """

    energies: np.ndarray
    amplitudes: np.ndarray
    direction: str = 'left'
    e_min: float = 0.05

    def __post_init__(self):
        energies = np.asarray(self.energies, dtype=float)
        amplitudes = np.asarray(self.amplitudes, dtype=complex)
        object.__setattr__(self, 'energies', energies)
        object.__setattr__(self, 'amplitudes', amplitudes)
        if energies.ndim != 1 or energies.shape != amplitudes.shape or energies.size < 3:
            raise ProfileError("profile needs at least 3 (E, amplitude) samples")
        if np.any(np.diff(energies) <= 0):
            raise ProfileError("profile energies must be strictly increasing")
        if self.e_min <= 0:
            raise ProfileError("E_min must be strictly positive", e_min=self.e_min)
        if energies[0] < self.e_min:
            raise ProfileError("profile reaches below E_min", e_min=self.e_min, lowest=float(energies[0]))
        norm = self.norm
        if abs(norm - 1.0) > 1e-10:
            raise ProfileError("profile is not normalised", norm=norm)

    @classmethod
    def from_samples(cls, energies, amplitudes, direction: str = 'left',
                     e_min: Optional[float] = None) -> 'EnergyProfile':
        """Normalise raw samples and build the profile."""
        energies = np.asarray(energies, dtype=float)
        amplitudes = np.asarray(amplitudes, dtype=complex)
        e_min = numeric('e_min') if e_min is None else e_min
        norm = simpson(np.abs(amplitudes) ** 2, x=energies)
        if not norm > 0:
            raise ProfileError("profile has zero weight")
        return cls(energies, amplitudes / np.sqrt(norm), direction=direction, e_min=e_min)

    @classmethod
    def gaussian(cls, center: float, width: float, samples: int = 401, span: float = 6.0,
                 direction: str = 'left', e_min: Optional[float] = None) -> 'EnergyProfile':
        """|phi(E)|^2 Gaussian of standard deviation `width`, cut at center +- span*width."""
        e_min = numeric('e_min') if e_min is None else e_min
        if width <= 0:
            raise ProfileError("profile width must be positive", width=width)
        lower = center - span * width
        if lower < e_min:
            raise ProfileError("profile touches energies below E_min", e_min=e_min, lowest=lower)
        energies = np.linspace(lower, center + span * width, samples)
        amplitudes = np.exp(-((energies - center) ** 2) / (4.0 * width ** 2))
        return cls.from_samples(energies, amplitudes, direction=direction, e_min=e_min)

    @classmethod
    def gaussian_momentum(cls, k0: float, sigma_k: float, samples: int = 401, span: float = 6.0,
                          direction: str = 'left', e_min: Optional[float] = None) -> 'EnergyProfile':
        """Gaussian in momentum, |a(k)|^2 of standard deviation sigma_k, expressed in energy."""
        e_min = numeric('e_min') if e_min is None else e_min
        k_low = k0 - span * sigma_k
        if k_low <= 0 or 0.5 * k_low ** 2 < e_min:
            raise ProfileError("momentum profile touches energies below E_min", e_min=e_min)
        k = np.linspace(k_low, k0 + span * sigma_k, samples)
        # |phi(E)|^2 dE = |a(k)|^2 dk with dE = k dk
        amplitudes = np.exp(-((k - k0) ** 2) / (4.0 * sigma_k ** 2)) / np.sqrt(k)
        return cls.from_samples(0.5 * k ** 2, amplitudes, direction=direction, e_min=e_min)

    @property
    def weights(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def norm(self) -> float:
        return float(simpson(self.weights, x=self.energies))

    @property
    def mean_energy(self) -> float:
        return self.average(self.energies)

    @property
    def mean_inverse_speed(self) -> float:
        return self.average(1.0 / speed(self.energies))

    def average(self, values) -> float:
        """Integral of values(E) |phi(E)|^2 dE."""
        values = np.asarray(values)
        return simpson(values * self.weights, x=self.energies)

    def amplitude_at(self, energies) -> np.ndarray:
        energies = np.asarray(energies, dtype=float)
        real = np.interp(energies, self.energies, self.amplitudes.real, left=0.0, right=0.0)
        imag = np.interp(energies, self.energies, self.amplitudes.imag, left=0.0, right=0.0)
        return real + 1j * imag

    def momentum_amplitude(self, k) -> np.ndarray:
        """a(k) = phi(k^2 / 2) sqrt(k), so that |a|^2 dk = |phi|^2 dE."""
        k = np.asarray(k, dtype=float)
        positive = k > 0
        safe = np.where(positive, k, 0.0)
        return np.where(positive, self.amplitude_at(0.5 * safe ** 2) * np.sqrt(safe), 0.0)

    def resample(self, energies) -> 'EnergyProfile':
        """Interpolate onto a new grid inside the current one and renormalise."""
        energies = np.asarray(energies, dtype=float)
        if energies[0] < self.energies[0] or energies[-1] > self.energies[-1]:
            raise ProfileError("resampling grid leaves the profile range")
        return EnergyProfile.from_samples(energies, self.amplitude_at(energies),
                                          direction=self.direction, e_min=self.e_min)
