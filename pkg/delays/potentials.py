"""
Units, grids and potentials shared by every solver.

Natural units throughout: hbar = m = 1, so k = sqrt(2E), v = k and hbar*k = k.
Every potential has compact support; V is exactly zero outside it.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from .exceptions import ConfigurationError, GridError

logger = logging.getLogger(__name__)

HBAR = 1.0
MASS = 1.0

GEOMETRIES = ('full-line', 'radial')


def wavenumber(energy):
    """k = sqrt(2 m E) / hbar for positive energies."""
    return np.sqrt(2.0 * MASS * np.asarray(energy, dtype=float)) / HBAR


def speed(energy):
    """v = hbar k / m."""
    return HBAR * wavenumber(energy) / MASS


def de_broglie_wavelength(energy):
    return 2.0 * np.pi / wavenumber(energy)


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform grid on [x_min, x_max] with n_points nodes (both ends included)."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 3:
            raise GridError("grid needs at least 3 points", n_points=self.n_points)
        if not self.x_max > self.x_min:
            raise GridError("grid must have x_max > x_min", x_min=self.x_min, x_max=self.x_max)

    @property
    def dx(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @property
    def points(self) -> np.ndarray:
        return self.x_min + self.dx * np.arange(self.n_points)

    @property
    def length(self) -> float:
        return self.x_max - self.x_min

    def covers(self, left: float, right: float) -> bool:
        return self.x_min <= left and right <= self.x_max

    @classmethod
    def covering(cls, support_radius: float, e_min: float, dx: float,
                 margin_wavelengths: float = 4.0) -> 'SpatialGrid':
        """Symmetric grid over the support plus margins of a few wavelengths at e_min."""
        half = support_radius + margin_wavelengths * float(de_broglie_wavelength(e_min))
        n_points = int(math.ceil(2.0 * half / dx)) + 1
        return cls(-half, half, n_points)

    @classmethod
    def periodic(cls, half_width: float, n_points: int) -> 'SpatialGrid':
        """Grid for FFT work: spacing 2*half_width/n_points, right end excluded."""
        dx = 2.0 * half_width / n_points
        return cls(-half_width, half_width - dx, n_points)


class Segment(NamedTuple):
    left: float
    right: float
    value: float


@dataclass(frozen=True)
class Potential:
    """
    Static potential on the full line or on the radial half line.

    Either `segments` (piecewise constant, solved with exact transfer matrices)
    or `profile` (any vectorised callable, solved with Numerov) describes V
    inside `support`. A radial potential may carry a hard core of radius
    `hard_core` (Dirichlet condition there).
    """

    name: str
    geometry: str = 'full-line'
    segments: Tuple[Segment, ...] = ()
    profile: Optional[Callable[[np.ndarray], np.ndarray]] = field(default=None, compare=False)
    support: Tuple[float, float] = (0.0, 0.0)
    l: int = 0
    hard_core: float = 0.0
    key: Tuple = ()

    def __post_init__(self):
        if self.geometry not in GEOMETRIES:
            raise ConfigurationError(f"unknown geometry '{self.geometry}'", allowed=GEOMETRIES)
        if self.l < 0:
            raise ConfigurationError("angular momentum must be >= 0", l=self.l)
        if self.l and self.geometry != 'radial':
            raise ConfigurationError("angular momentum only applies to radial potentials")
        left, right = self.support
        if right < left:
            raise ConfigurationError("support must satisfy left <= right", support=self.support)
        if self.geometry == 'radial' and left < 0:
            raise ConfigurationError("radial support starts at s >= 0", support=self.support)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        values = np.zeros_like(x)
        left, right = self.support
        if self.segments:
            for segment in self.segments:
                values = np.where((x >= segment.left) & (x < segment.right), segment.value, values)
        elif self.profile is not None:
            inside = (x >= left) & (x <= right)
            if np.any(inside):
                values = np.where(inside, self.profile(np.where(inside, x, left)), 0.0)
        if self.hard_core > 0:
            values = np.where(x < self.hard_core, np.inf, values)
        return values

    @property
    def support_radius(self) -> float:
        return max(abs(self.support[0]), abs(self.support[1]), self.hard_core)

    @property
    def is_piecewise(self) -> bool:
        return self.profile is None

    @property
    def is_free(self) -> bool:
        return not self.segments and self.profile is None and self.hard_core == 0

    def with_l(self, l: int) -> 'Potential':
        return replace(self, l=l)

    def perturbed(self, region, coupling: float) -> 'Potential':
        """V + coupling * chi_region, the perturbation used by clocks and linear response."""
        if coupling == 0:
            return self
        center = region.center
        lower = center - region.outer_radius
        upper = center + region.outer_radius
        if self.geometry == 'radial':
            lower = max(lower, 0.0)
        if self.is_piecewise and region.is_sharp:
            edges = {lower, upper}
            for segment in self.segments:
                edges.update((segment.left, segment.right))
            edges = sorted(edges)
            segments = []
            for a, b in zip(edges[:-1], edges[1:]):
                middle = 0.5 * (a + b)
                value = float(self(middle)) + coupling * float(lower <= middle <= upper)
                if value != 0.0:
                    segments.append(Segment(a, b, value))
            return replace(self, name=f"{self.name}+{coupling:g}chi", segments=tuple(segments),
                           support=(edges[0], edges[-1]), key=self.key + ('perturbed', region, coupling))

        base = self

        def profile(x):
            return base(x) + coupling * region.membership(x)

        support = (min(self.support[0], lower), max(self.support[1], upper))
        return replace(self, name=f"{self.name}+{coupling:g}chi", segments=(), profile=profile,
                       support=support, key=self.key + ('perturbed', region, coupling))


def eval_potential(p: Potential, x):
    """V(x); exactly zero outside the support."""
    return p(x)


def free(geometry: str = 'full-line', l: int = 0) -> Potential:
    return Potential(name='free', geometry=geometry, l=l, key=('free', geometry, l))


def piecewise(segments: Sequence[Tuple[float, float, float]], name: str = 'piecewise',
              geometry: str = 'full-line', l: int = 0) -> Potential:
    """Piecewise-constant potential from (left, right, value) triples."""
    ordered = sorted((Segment(float(a), float(b), float(v)) for a, b, v in segments),
                     key=lambda s: s.left)
    if not ordered:
        return free(geometry, l)
    for segment in ordered:
        if not segment.right > segment.left:
            raise ConfigurationError("segment must have right > left", segment=tuple(segment))
    for first, second in zip(ordered[:-1], ordered[1:]):
        if second.left < first.right:
            raise ConfigurationError("segments overlap", first=tuple(first), second=tuple(second))
    support = (ordered[0].left, ordered[-1].right)
    if geometry == 'radial':
        support = (0.0, support[1])
    return Potential(name=name, geometry=geometry, segments=tuple(ordered), support=support, l=l,
                     key=('piecewise', tuple(ordered), geometry, l))


def square(height: float, width: float, left: Optional[float] = None) -> Potential:
    """Square barrier (height > 0) or well (height < 0); centred on 0 unless `left` is given."""
    if width <= 0:
        raise ConfigurationError("width must be positive", width=width)
    left = -0.5 * width if left is None else left
    name = 'square barrier' if height >= 0 else 'square well'
    return piecewise([(left, left + width, height)], name=name)


def double_barrier(height: float, width: float, gap: float) -> Potential:
    """Two equal barriers separated by `gap`, symmetric about the origin."""
    inner = 0.5 * gap
    return piecewise([(-inner - width, -inner, height), (inner, inner + width, height)],
                     name='double barrier')


def gaussian_bump(height: float, sigma: float, cutoff: float = 6.0) -> Potential:
    """height * exp(-x^2 / 2 sigma^2), cut to zero beyond cutoff * sigma."""
    if sigma <= 0:
        raise ConfigurationError("sigma must be positive", sigma=sigma)
    half = cutoff * sigma

    def profile(x):
        return height * np.exp(-0.5 * (np.asarray(x) / sigma) ** 2)

    return Potential(name='gaussian bump', profile=profile, support=(-half, half),
                     key=('gaussian', height, sigma, cutoff))


def tabulated(x: Sequence[float], v: Sequence[float], geometry: str = 'full-line', l: int = 0,
              name: str = 'tabulated') -> Potential:
    """Linearly interpolated samples; zero outside the sampled range."""
    xs = np.asarray(x, dtype=float)
    vs = np.asarray(v, dtype=float)
    if xs.ndim != 1 or xs.shape != vs.shape or xs.size < 2:
        raise ConfigurationError("tabulated potential needs two equal-length columns")
    if np.any(np.diff(xs) <= 0):
        raise ConfigurationError("tabulated x values must be strictly increasing")
    xs_t, vs_t = tuple(xs.tolist()), tuple(vs.tolist())

    def profile(points):
        return np.interp(points, xs, vs, left=0.0, right=0.0)

    support = (float(xs[0]), float(xs[-1]))
    if geometry == 'radial':
        support = (0.0, support[1])
    return Potential(name=name, geometry=geometry, profile=profile, support=support, l=l,
                     key=('tabulated', xs_t, vs_t, geometry, l))


def load_tabulated(path, geometry: str = 'full-line', l: int = 0) -> Potential:
    """Two-column text file (x, V) with '#' comments."""
    try:
        data = np.loadtxt(path, comments='#', ndmin=2)
    except (OSError, ValueError) as exc:
        raise ConfigurationError(f"cannot read tabulated potential {path}: {exc}") from exc
    if data.shape[1] != 2:
        raise ConfigurationError("tabulated potential file must have two columns",
                                 path=str(path), columns=data.shape[1])
    return tabulated(data[:, 0], data[:, 1], geometry=geometry, l=l, name=f"tabulated:{path}")


def radial_square_well(depth: float, radius: float, l: int = 0) -> Potential:
    """V = -depth for s < radius (depth < 0 gives a repulsive step)."""
    return piecewise([(0.0, radius, -depth)], name='radial square well', geometry='radial', l=l)


def radial_hard_core(radius: float, l: int = 0) -> Potential:
    """Impenetrable sphere: Dirichlet condition at s = radius."""
    if radius <= 0:
        raise ConfigurationError("hard-core radius must be positive", radius=radius)
    return Potential(name='hard core', geometry='radial', support=(0.0, radius), l=l,
                     hard_core=radius, key=('hard-core', radius, l))


@dataclass(frozen=True)
class Harmonic:
    """One Fourier component V_n(s) = amplitude * shape(s)."""

    order: int
    amplitude: complex
    shape: Potential


@dataclass(frozen=True)
class PeriodicPotential:
    """V(s, t) = sum_n V_n(s) exp(-i n omega t) on the radial half line."""

    base: Potential
    omega: float
    harmonics: Tuple[Harmonic, ...] = ()

    def __post_init__(self):
        if self.omega <= 0:
            raise ConfigurationError("drive frequency must be positive", omega=self.omega)
        if self.base.geometry != 'radial':
            raise ConfigurationError("periodic potentials are radial")
        if self.base.hard_core:
            raise ConfigurationError("periodic potentials do not support a hard core")
        for harmonic in self.harmonics:
            if harmonic.order == 0:
                raise ConfigurationError("the static part belongs to `base`")
            partner = [h for h in self.harmonics
                       if h.order == -harmonic.order and h.shape == harmonic.shape]
            if not partner or abs(partner[0].amplitude - np.conj(harmonic.amplitude)) > 1e-12:
                raise ConfigurationError("drive is not Hermitian: V_-n must equal conj(V_n)",
                                         order=harmonic.order)

    @property
    def l(self) -> int:
        return self.base.l

    @property
    def max_order(self) -> int:
        return max((abs(h.order) for h in self.harmonics if abs(h.amplitude) > 1e-12), default=0)

    @property
    def support_radius(self) -> float:
        radii = [self.base.support_radius] + [h.shape.support_radius for h in self.harmonics]
        return max(radii)

    @property
    def is_static(self) -> bool:
        return self.max_order == 0

    def component(self, n: int, s) -> np.ndarray:
        """V_n(s)."""
        s = np.asarray(s, dtype=float)
        if n == 0:
            return self.base(s).astype(complex)
        values = np.zeros(s.shape, dtype=complex)
        for harmonic in self.harmonics:
            if harmonic.order == n:
                values = values + harmonic.amplitude * harmonic.shape(s)
        return values

    def reconstruct(self, s, t) -> np.ndarray:
        """V(s, t); raises if the Fourier data does not give a real potential."""
        s = np.asarray(s, dtype=float)
        total = self.component(0, s)
        for harmonic in self.harmonics:
            total = total + harmonic.amplitude * harmonic.shape(s) * np.exp(-1j * harmonic.order * self.omega * t)
        scale = max(1.0, float(np.max(np.abs(total))) if total.size else 1.0)
        if np.max(np.abs(total.imag), initial=0.0) > 1e-12 * scale:
            raise ConfigurationError("reconstructed potential is not real")
        return total.real

    def with_l(self, l: int) -> 'PeriodicPotential':
        return replace(self, base=self.base.with_l(l))


def driven(base: Potential, omega: float, amplitude: float,
           shape: Optional[Potential] = None) -> PeriodicPotential:
    """base(s) + 2 * amplitude * cos(omega t) * shape(s); shape defaults to 1 on base's support."""
    if shape is None:
        shape = piecewise([(0.0, base.support_radius, 1.0)], name='drive shape', geometry='radial')
    harmonics = (
        Harmonic(1, complex(amplitude), shape),
        Harmonic(-1, complex(amplitude), shape),
    )
    return PeriodicPotential(base=base, omega=omega, harmonics=harmonics)
