"""
Stationary scattering states, on-shell S-matrices and phase derivatives.

Full line: psi_+ comes in from the left (e^{ikx} + L e^{-ikx} | T e^{ikx}),
psi_- from the right (T e^{-ikx} | R e^{ikx} + e^{-ikx}). Piecewise-constant
potentials are crossed with exact transfer matrices, everything else with
Numerov. Radial states are regular at the origin (or at a hard core) and
normalised to u -> e^{i delta} sin(ks - l pi/2 + delta).
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, List, NamedTuple, Optional, Tuple, Union

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import spherical_jn, spherical_yn

from .conf import numeric
from .exceptions import ConfigurationError, GridError, PhaseJumpError, UnitarityError
from .potentials import Potential, SpatialGrid, de_broglie_wavelength, wavenumber

logger = logging.getLogger(__name__)

DIRECTIONS = ('left', 'right')

_RESCALE = 1e100
# largest growth exp(kappa * length) allowed inside one transfer chunk
_CHUNK_GROWTH = 10.0
# octave edges sit away from round test energies so derivative stencils share a grid
_BUCKET_ORIGIN = 1.37


class Piece(NamedTuple):
    """Samples of a state on one interval; derivatives only for exact transfer states."""

    x: np.ndarray
    values: np.ndarray
    derivatives: Optional[np.ndarray] = None


def riccati_s(l: int, z):
    """s_l(z) = z j_l(z), regular, ~ sin(z - l pi/2)."""
    z = np.asarray(z, dtype=float)
    return z * spherical_jn(l, z)


def riccati_c(l: int, z):
    """c_l(z) = -z y_l(z), irregular, ~ cos(z - l pi/2)."""
    z = np.asarray(z, dtype=float)
    return -z * spherical_yn(l, z)


def _radial_exterior(l: int, k: float, delta: float, s) -> np.ndarray:
    z = k * np.asarray(s, dtype=float)
    if delta == 0.0:
        return riccati_s(l, z).astype(complex)
    return np.exp(1j * delta) * (riccati_s(l, z) * np.cos(delta) + riccati_c(l, z) * np.sin(delta))


@dataclass(frozen=True, eq=False)
class StationaryState:
    """
    Scattering state at fixed energy.

    `pieces` sample the state inside `support`; outside it the state is the
    analytic exterior: A e^{ikx} + B e^{-ikx} with (A, B) = `left` / `right`
    on the full line, or the Riccati combination fixed by `phase_shift` on the
    half line. `extent` is the spatial window the state is trusted on.
    """

    energy: float
    direction: str
    pieces: Tuple[Piece, ...]
    support: Tuple[float, float]
    extent: Tuple[float, float] = (-np.inf, np.inf)
    left: Tuple[complex, complex] = (1.0 + 0j, 0j)
    right: Tuple[complex, complex] = (1.0 + 0j, 0j)
    l: int = 0
    phase_shift: Optional[float] = None
    method: str = 'transfer'

    @property
    def k(self) -> float:
        return float(wavenumber(self.energy))

    @property
    def is_radial(self) -> bool:
        return self.direction == 'radial'

    def exterior(self, x) -> np.ndarray:
        """Analytic continuation of the state outside the support."""
        x = np.asarray(x, dtype=float)
        k = self.k
        if self.is_radial:
            return _radial_exterior(self.l, k, self.phase_shift, x)
        a_left, b_left = self.left
        a_right, b_right = self.right
        on_left = a_left * np.exp(1j * k * x) + b_left * np.exp(-1j * k * x)
        on_right = a_right * np.exp(1j * k * x) + b_right * np.exp(-1j * k * x)
        middle = 0.5 * (self.support[0] + self.support[1])
        return np.where(x < middle, on_left, on_right)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        values = self.exterior(x).astype(complex)
        lower = self.support[0]
        for piece in self.pieces:
            inside = (x >= piece.x[0]) & (x <= piece.x[-1])
            if np.any(inside):
                real = np.interp(x[inside], piece.x, piece.values.real)
                imag = np.interp(x[inside], piece.x, piece.values.imag)
                values[inside] = real + 1j * imag
        if self.is_radial:
            values = np.where(x < lower, 0.0, values)
        return values

    def samples(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.pieces:
            return np.empty(0), np.empty(0, dtype=complex)
        return (np.concatenate([piece.x for piece in self.pieces]),
                np.concatenate([piece.values for piece in self.pieces]))

    def residual(self, potential: Potential) -> float:
        """Max of |psi'' + 2(E - V) psi| / max|psi| over interior samples (second differences)."""
        worst = 0.0
        scale = max((np.max(np.abs(piece.values)) for piece in self.pieces), default=1.0)
        for piece in self.pieces:
            if piece.x.size < 3:
                continue
            dx = piece.x[1] - piece.x[0]
            second = (piece.values[2:] - 2.0 * piece.values[1:-1] + piece.values[:-2]) / dx ** 2
            middle = piece.x[1:-1]
            f = 2.0 * (self.energy - potential(middle))
            if self.is_radial and self.l:
                f = f - self.l * (self.l + 1) / middle ** 2
            worst = max(worst, float(np.max(np.abs(second + f * piece.values[1:-1]))))
        return worst / scale

    def wronskian(self, other: 'StationaryState') -> np.ndarray:
        """psi psi_other' - psi' psi_other on interior samples of two exact transfer states."""
        if self.method != 'transfer' or other.method != 'transfer':
            raise ConfigurationError("Wronskian needs exact derivative samples (transfer states)")
        return np.concatenate([
            mine.values * theirs.derivatives - mine.derivatives * theirs.values
            for mine, theirs in zip(self.pieces, other.pieces)
        ])


@dataclass(frozen=True)
class SMatrix1D:
    """
    On-shell S-matrix of a full-line potential, channel order (+, -).

    S = [[T, R], [L, T]]: column + is incidence from the left, column - from
    the right. `T_right` is the transmission read off psi_- and only feeds
    the reciprocity check.
    """

    energy: float
    T: complex
    L: complex
    R: complex
    T_right: complex

    @property
    def alpha_T(self) -> float:
        return float(np.angle(self.T))

    @property
    def alpha_L(self) -> float:
        return float(np.angle(self.L))

    @property
    def alpha_R(self) -> float:
        return float(np.angle(self.R))

    @property
    def transmission(self) -> float:
        return float(abs(self.T) ** 2)

    @property
    def reflection(self) -> float:
        return float(abs(self.L) ** 2)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.T, self.R], [self.L, self.T]], dtype=complex)

    @property
    def unitarity_defect(self) -> float:
        s = self.matrix
        return float(np.max(np.abs(s.conj().T @ s - np.eye(2))))

    @property
    def reciprocity_defect(self) -> float:
        return float(abs(self.T - self.T_right))


@dataclass(frozen=True)
class PhaseDerivative:
    value: float
    error: float
    step: float


@dataclass(frozen=True)
class PhaseTable:
    """S-matrix at E with the energy derivatives of its three phases."""

    s: SMatrix1D
    d_alpha_T: PhaseDerivative
    d_alpha_L: PhaseDerivative
    d_alpha_R: PhaseDerivative


@dataclass(frozen=True, eq=False)
class PhaseShiftTable:
    """delta_l(E) over an energy sweep, unwrapped and tending to 0 at the top of the sweep."""

    l: int
    energies: np.ndarray
    deltas: np.ndarray

    @classmethod
    def from_samples(cls, l: int, energies, deltas) -> 'PhaseShiftTable':
        energies = np.asarray(energies, dtype=float)
        unwrapped = np.unwrap(2.0 * np.asarray(deltas, dtype=float)) / 2.0
        unwrapped = unwrapped - np.round(unwrapped[-1] / np.pi) * np.pi
        return cls(l, energies, unwrapped)

    @classmethod
    def sweep(cls, p: Potential, energies) -> 'PhaseShiftTable':
        deltas = [solve_radial(p, float(energy)).phase_shift for energy in energies]
        return cls.from_samples(p.l, energies, deltas)

    def delta(self, energy):
        return CubicSpline(self.energies, self.deltas)(energy)

    def amplitude(self, energy):
        return np.exp(2j * self.delta(energy))


# --- grids ---------------------------------------------------------------

def _energy_bucket(energy: float) -> Tuple[float, float]:
    """Octave of E around _BUCKET_ORIGIN; Numerov grids only change between octaves."""
    exponent = math.floor(math.log2(energy / _BUCKET_ORIGIN))
    return _BUCKET_ORIGIN * 2.0 ** exponent, _BUCKET_ORIGIN * 2.0 ** (exponent + 1)


def _local_wavenumber_max(p: Potential, energy: float, lower: float, upper: float) -> float:
    values = p(np.linspace(lower, upper, 2001))
    values = values[np.isfinite(values)]
    k = float(wavenumber(energy))
    if values.size == 0:
        return k
    fastest = math.sqrt(max(2.0 * (energy - float(np.min(values))), 0.0))
    evanescent = math.sqrt(max(2.0 * (float(np.max(values)) - energy), 0.0))
    return max(k, fastest, evanescent)


def _even_steps(length: float, step: float, minimum: int = 8) -> int:
    n = max(minimum, int(math.ceil(length / step)))
    return n + (n % 2)


def _odd_samples(length: float, scale: float, ppw: float) -> int:
    n = _even_steps(length, 2.0 * np.pi / (ppw * scale))
    return n + 1


# --- exact transfer over piecewise-constant segments ------------------------

def _propagator(q2: complex, d: float) -> np.ndarray:
    """Map (psi, psi') across a distance d (either sign) where psi'' = -q2 psi."""
    q = np.sqrt(complex(q2))
    qd = q * d
    if abs(qd) < 1e-8:
        sin_over_q = d * (1.0 - qd * qd / 6.0)
    else:
        sin_over_q = np.sin(qd) / q
    cos = np.cos(qd)
    return np.array([[cos, sin_over_q], [-q2 * sin_over_q, cos]], dtype=complex)


def _chunks(p: Potential, energy: float, lower: float, upper: float) -> List[Tuple[float, float, float]]:
    """Contiguous constant pieces covering [lower, upper], split so no piece grows by more than e^10."""
    pieces = []
    cursor = lower
    for segment in p.segments:
        left, right = max(segment.left, lower), min(segment.right, upper)
        if right <= left:
            continue
        if left > cursor:
            pieces.append((cursor, left, 0.0))
        pieces.append((left, right, segment.value))
        cursor = right
    if upper > cursor:
        pieces.append((cursor, upper, 0.0))
    chunks = []
    for left, right, value in pieces:
        kappa = math.sqrt(max(2.0 * (value - energy), 0.0))
        count = max(1, int(math.ceil(kappa * (right - left) / _CHUNK_GROWTH)))
        edges = np.linspace(left, right, count + 1)
        chunks.extend((float(a), float(b), value) for a, b in zip(edges[:-1], edges[1:]))
    return chunks


def _sample_chunk(chunk, energy: float, anchor: float, state: np.ndarray, ppw: float) -> Piece:
    left, right, value = chunk
    q2 = complex(2.0 * (energy - value))
    q = np.sqrt(q2)
    n = _odd_samples(right - left, max(abs(q), float(wavenumber(energy))), ppw)
    x = np.linspace(left, right, n)
    d = x - anchor
    cos = np.cos(q * d)
    sin_over_q = d.astype(complex) if abs(q) < 1e-300 else np.sin(q * d) / q
    values = cos * state[0] + sin_over_q * state[1]
    derivatives = -q2 * sin_over_q * state[0] + cos * state[1]
    return Piece(x, values, derivatives)


class _Rescaler:
    """Keeps a growing recursion finite; `log_scale` is the total factor divided out."""

    def __init__(self):
        self.log_scale = 0.0

    def __call__(self, vector, stored):
        size = float(np.max(np.abs(vector)))
        if size > _RESCALE:
            vector = vector / size
            for index, item in enumerate(stored):
                if item is not None:
                    stored[index] = item / size
            self.log_scale += math.log(size)
        return vector


def _transfer_full_line(p: Potential, energy: float, direction: str, ppw: float):
    k = float(wavenumber(energy))
    a, b = p.support
    chunks = _chunks(p, energy, a, b)
    rescale = _Rescaler()
    starts: List[Optional[np.ndarray]] = [None] * len(chunks)
    if direction == 'left':
        vector = np.array([np.exp(1j * k * b), 1j * k * np.exp(1j * k * b)])
        for index in reversed(range(len(chunks))):
            left, right, value = chunks[index]
            starts[index] = vector
            vector = _propagator(2.0 * (energy - value), left - right) @ vector
            vector = rescale(vector, starts)
        incoming = (vector[0] + vector[1] / (1j * k)) * np.exp(-1j * k * a) / 2.0
        outgoing = (vector[0] - vector[1] / (1j * k)) * np.exp(1j * k * a) / 2.0
        anchors = [chunk[1] for chunk in chunks]
    else:
        vector = np.array([np.exp(-1j * k * a), -1j * k * np.exp(-1j * k * a)])
        for index, (left, right, value) in enumerate(chunks):
            starts[index] = vector
            vector = _propagator(2.0 * (energy - value), right - left) @ vector
            vector = rescale(vector, starts)
        outgoing = (vector[0] + vector[1] / (1j * k)) * np.exp(-1j * k * b) / 2.0
        incoming = (vector[0] - vector[1] / (1j * k)) * np.exp(1j * k * b) / 2.0
        anchors = [chunk[0] for chunk in chunks]
    if rescale.log_scale > 600.0:
        logger.warning(f"Transmission below double precision at E={energy:g} (log scale {rescale.log_scale:.1f})")
    pieces = tuple(
        _sample_chunk(chunk, energy, anchor, start / incoming, ppw)
        for chunk, anchor, start in zip(chunks, anchors, starts)
    )
    return pieces, complex(math.exp(-rescale.log_scale) / incoming), complex(outgoing / incoming)


# --- Numerov ---------------------------------------------------------------

def _numerov_full_line(p: Potential, energy: float, direction: str, ppw: float):
    k = float(wavenumber(energy))
    a, b = p.support
    _, ceiling = _energy_bucket(energy)
    k_fast = _local_wavenumber_max(p, ceiling, a, b)
    n = _even_steps(b - a, 2.0 * np.pi / (ppw * k_fast))
    h = (b - a) / n
    x = a - 2.0 * h + h * np.arange(n + 5)
    w = 1.0 - h * h * 2.0 * (p(x) - energy) / 12.0
    psi = np.zeros(x.size, dtype=complex)
    log_scale = 0.0
    if direction == 'left':
        psi[-2:] = np.exp(1j * k * x[-2:])
        for j in range(x.size - 2, 0, -1):
            psi[j - 1] = ((12.0 - 10.0 * w[j]) * psi[j] - w[j + 1] * psi[j + 1]) / w[j - 1]
            size = abs(psi[j - 1])
            if size > _RESCALE:
                psi /= size
                log_scale += math.log(size)
        nodes = x[:2]
        values = psi[:2]
    else:
        psi[:2] = np.exp(-1j * k * x[:2])
        for j in range(1, x.size - 1):
            psi[j + 1] = ((12.0 - 10.0 * w[j]) * psi[j] - w[j - 1] * psi[j - 1]) / w[j + 1]
            size = abs(psi[j + 1])
            if size > _RESCALE:
                psi /= size
                log_scale += math.log(size)
        nodes = x[-2:]
        values = psi[-2:]
    basis = np.column_stack([np.exp(1j * k * nodes), np.exp(-1j * k * nodes)])
    forward, backward = np.linalg.solve(basis, values)
    incoming, outgoing = (forward, backward) if direction == 'left' else (backward, forward)
    piece = Piece(x[2:n + 3], psi[2:n + 3] / incoming)
    return (piece,), complex(math.exp(-log_scale) / incoming), complex(outgoing / incoming)


@lru_cache(maxsize=4096)
def _full_line_core(p: Potential, energy: float, direction: str, ppw: float):
    """(pieces, transmission, reflection, method) for one direction of incidence."""
    a, b = p.support
    if p.is_free or b <= a:
        return (), 1.0 + 0j, 0j, 'transfer'
    if p.is_piecewise:
        return _transfer_full_line(p, energy, direction, ppw) + ('transfer',)
    return _numerov_full_line(p, energy, direction, ppw) + ('numerov',)


def _check_energy(energy: float):
    if not energy > 0:
        raise ConfigurationError("scattering energy must be positive", energy=energy)


def solve_full_line(p: Potential, energy: float, grid: Optional[SpatialGrid] = None,
                    direction: str = 'left') -> StationaryState:
    """psi_+ (direction 'left') or psi_- ('right') at energy E."""
    if p.geometry != 'full-line':
        raise ConfigurationError("solve_full_line needs a full-line potential", geometry=p.geometry)
    if direction not in DIRECTIONS:
        raise ConfigurationError(f"unknown direction '{direction}'", allowed=DIRECTIONS)
    _check_energy(energy)
    extent = (-np.inf, np.inf)
    if grid is not None:
        if not grid.covers(*p.support):
            raise GridError("grid does not cover the potential support",
                            support=p.support, grid=(grid.x_min, grid.x_max))
        extent = (grid.x_min, grid.x_max)
    pieces, transmission, reflection, method = _full_line_core(
        p, float(energy), direction, float(numeric('points_per_wavelength')))
    if direction == 'left':
        left, right = (1.0 + 0j, reflection), (transmission, 0j)
    else:
        left, right = (0j, transmission), (reflection, 1.0 + 0j)
    return StationaryState(energy=float(energy), direction=direction, pieces=pieces,
                           support=p.support, extent=extent, left=left, right=right, method=method)


@lru_cache(maxsize=8192)
def _s_matrix_core(p: Potential, energy: float, ppw: float) -> SMatrix1D:
    _, t_plus, l_plus, _ = _full_line_core(p, energy, 'left', ppw)
    _, t_minus, r_minus, _ = _full_line_core(p, energy, 'right', ppw)
    return SMatrix1D(energy=energy, T=t_plus, L=l_plus, R=r_minus, T_right=t_minus)


def s_matrix(p: Potential, energy: float, tolerance: Optional[float] = None) -> SMatrix1D:
    """On-shell S-matrix from both matchings; raises UnitarityError past tolerance."""
    if p.geometry != 'full-line':
        raise ConfigurationError("s_matrix needs a full-line potential", geometry=p.geometry)
    _check_energy(energy)
    tolerance = numeric('unitarity_tolerance') if tolerance is None else tolerance
    s = _s_matrix_core(p, float(energy), float(numeric('points_per_wavelength')))
    defect = max(s.unitarity_defect, s.reciprocity_defect)
    logger.debug(f"S({p.name}, E={energy:g}): |T|^2={s.transmission:.6g} defect={defect:.2e}")
    if defect > tolerance:
        raise UnitarityError("S-matrix unitarity defect above tolerance", energy=energy,
                             defect=defect, tolerance=tolerance, potential=p.name)
    return s


def phase_sweep(p: Potential, energies) -> dict:
    """S-matrix elements and unwrapped phases along an energy sweep."""
    matrices = [s_matrix(p, float(energy)) for energy in energies]
    sweep = {
        'E': np.asarray(energies, dtype=float),
        'T': np.array([s.T for s in matrices]),
        'L': np.array([s.L for s in matrices]),
        'R': np.array([s.R for s in matrices]),
    }
    for name in ('T', 'L', 'R'):
        sweep[f'alpha_{name}'] = np.unwrap(np.angle(sweep[name]))
    sweep['defect'] = np.array([s.unitarity_defect for s in matrices])
    return sweep


# --- radial ----------------------------------------------------------------

def _match_radius(p: Potential, energy: float, grid: Optional[SpatialGrid]) -> float:
    floor, _ = _energy_bucket(energy)
    radius = p.support_radius + 6.0 / float(wavenumber(floor))
    if grid is None:
        return radius
    quarter = 0.25 * float(de_broglie_wavelength(energy))
    if grid.x_max < p.support_radius + quarter:
        raise GridError("radial grid edge lies inside the potential support",
                        edge=grid.x_max, support_radius=p.support_radius)
    return min(radius, grid.x_max)


def _radial_transfer(p: Potential, energy: float, ppw: float):
    """Exact s-wave solution over piecewise-constant segments."""
    k = float(wavenumber(energy))
    start = p.hard_core
    end = max(start, p.support_radius)
    chunks = _chunks(p, energy, start, end)
    rescale = _Rescaler()
    starts: List[Optional[np.ndarray]] = [None] * len(chunks)
    vector = np.array([0.0 + 0j, 1.0 + 0j])
    for index, (left, right, value) in enumerate(chunks):
        starts[index] = vector
        vector = _propagator(2.0 * (energy - value), right - left) @ vector
        vector = rescale(vector, starts)
    u, du = vector[0].real, vector[1].real / k
    sine = u * math.sin(k * end) + du * math.cos(k * end)
    cosine = u * math.cos(k * end) - du * math.sin(k * end)
    delta = _fold(math.atan2(cosine, sine))
    amplitude = sine / math.cos(delta) if abs(math.cos(delta)) > 0.5 else cosine / math.sin(delta)
    norm = np.exp(1j * delta) / amplitude
    pieces = tuple(
        _sample_chunk(chunk, energy, chunk[0], state * norm, ppw)
        for chunk, state in zip(chunks, starts)
    )
    return pieces, delta, (start, end)


def _radial_numerov(p: Potential, energy: float, match: float, ppw: float):
    k = float(wavenumber(energy))
    l = p.l
    start = p.hard_core
    _, ceiling = _energy_bucket(energy)
    k_fast = _local_wavenumber_max(p, ceiling, start, max(p.support_radius, start + 1e-12))
    n = _even_steps(match - start, 2.0 * np.pi / (ppw * k_fast))
    h = (match - start) / n
    s = start + h * np.arange(n + 1)
    # w[0] only ever multiplies u[0] = 0 at the origin
    centrifugal = np.divide(float(l * (l + 1)), s ** 2, out=np.zeros_like(s), where=s > 0)
    f = centrifugal + 2.0 * (p(s) - energy)
    w = 1.0 - h * h * f / 12.0
    u = np.zeros(n + 1)
    if start == 0.0:
        first = max(1, l)
        u[:first + 1] = s[:first + 1] ** (l + 1)
    else:
        first = 1
        u[1] = h
    for j in range(first, n):
        previous = 0.0 if u[j - 1] == 0.0 else w[j - 1] * u[j - 1]
        u[j + 1] = ((12.0 - 10.0 * w[j]) * u[j] - previous) / w[j + 1]
        if abs(u[j + 1]) > _RESCALE:
            u /= abs(u[j + 1])
    offset = max(1, int(round(0.25 * float(de_broglie_wavelength(energy)) / h)))
    i1, i2 = n - offset, n
    z1, z2 = k * s[i1], k * s[i2]
    s1, s2 = riccati_s(l, z1), riccati_s(l, z2)
    c1, c2 = riccati_c(l, z1), riccati_c(l, z2)
    delta = _fold(math.atan2(u[i1] * s2 - u[i2] * s1, u[i2] * c1 - u[i1] * c2))
    targets = np.exp(1j * delta) * (np.array([s1, s2]) * math.cos(delta) + np.array([c1, c2]) * math.sin(delta))
    anchors = np.array([u[i1], u[i2]])
    norm = np.sum(targets * anchors) / np.sum(anchors ** 2)
    return (Piece(s, u * norm),), delta, (start, match)


def _fold(delta: float) -> float:
    """Phase shift into (-pi/2, pi/2]."""
    folded = (delta + 0.5 * np.pi) % np.pi - 0.5 * np.pi
    return float(0.5 * np.pi if folded == -0.5 * np.pi else folded)


@lru_cache(maxsize=4096)
def _radial_core(p: Potential, energy: float, match: float, ppw: float):
    if p.is_free:
        return (), 0.0, (0.0, 0.0), 'exact'
    if p.is_piecewise and p.l == 0:
        return _radial_transfer(p, energy, ppw) + ('transfer',)
    return _radial_numerov(p, energy, match, ppw) + ('numerov',)


def solve_radial(p: Potential, energy: float, grid: Optional[SpatialGrid] = None) -> StationaryState:
    """Regular radial solution u_l at energy E with its phase shift."""
    if p.geometry != 'radial':
        raise ConfigurationError("solve_radial needs a radial potential", geometry=p.geometry)
    _check_energy(energy)
    match = _match_radius(p, float(energy), grid)
    pieces, delta, support, method = _radial_core(
        p, float(energy), match, float(numeric('radial_points_per_wavelength')))
    extent = (0.0, np.inf if grid is None else grid.x_max)
    logger.debug(f"delta_{p.l}({p.name}, E={energy:g}) = {delta:.10g} [{method}]")
    return StationaryState(energy=float(energy), direction='radial', pieces=pieces, support=support,
                           extent=extent, l=p.l, phase_shift=delta, method=method)


# --- phase derivatives ------------------------------------------------------

Amplitude = Union[Callable[[float], complex], PhaseShiftTable]


def phase_derivative(amplitude: Amplitude, energy: float, step: Optional[float] = None) -> PhaseDerivative:
    """
    d arg a(E) / dE by central differences at h and h/2 with Richardson extrapolation.

    Phase increments are taken as arg(a(E+h)/a(E)), so no unwrapping is needed
    as long as each increment stays below pi/2.
    """
    if isinstance(amplitude, PhaseShiftTable):
        amplitude = amplitude.amplitude
    step = numeric('phase_step') if step is None else step
    if step <= 0:
        raise ConfigurationError("derivative step must be positive", step=step)
    if energy - step <= 0:
        raise ConfigurationError("derivative stencil reaches E <= 0", energy=energy, step=step)
    center = complex(amplitude(energy))

    def central(h: float) -> float:
        forward = float(np.angle(complex(amplitude(energy + h)) / center))
        backward = float(np.angle(center / complex(amplitude(energy - h))))
        jump = max(abs(forward), abs(backward))
        if jump > 0.5 * np.pi:
            raise PhaseJumpError("phase jumps across the derivative stencil, reduce the step",
                                 energy=energy, step=h, jump=jump)
        return (forward + backward) / (2.0 * h)

    coarse = central(step)
    fine = central(0.5 * step)
    return PhaseDerivative(value=(4.0 * fine - coarse) / 3.0, error=abs(fine - coarse) / 3.0, step=step)


def phase_table(p: Potential, energy: float, step: Optional[float] = None) -> PhaseTable:
    """S(E) with dalpha_T/dE, dalpha_L/dE and dalpha_R/dE."""
    step = numeric('phase_step') if step is None else step
    return _phase_table(p, float(energy), float(step), float(numeric('points_per_wavelength')))


@lru_cache(maxsize=4096)
def _phase_table(p: Potential, energy: float, step: float, ppw: float) -> PhaseTable:
    s = s_matrix(p, energy)
    d_t = phase_derivative(lambda e: s_matrix(p, e).T, energy, step)
    if abs(s.L) < 1e-12:
        # no reflected wave, its phase is undefined and carries no weight
        d_l = d_r = PhaseDerivative(0.0, 0.0, step)
    else:
        d_l = phase_derivative(lambda e: s_matrix(p, e).L, energy, step)
        d_r = phase_derivative(lambda e: s_matrix(p, e).R, energy, step)
    logger.debug(f"phase table E={energy:g}: aT'={d_t.value:.8g} aL'={d_l.value:.8g} aR'={d_r.value:.8g}")
    return PhaseTable(s=s, d_alpha_T=d_t, d_alpha_L=d_l, d_alpha_R=d_r)


def radial_phase_derivative(p: Potential, energy: float, step: Optional[float] = None) -> PhaseDerivative:
    """d(2 delta_l)/dE, the derivative of the phase of e^{2 i delta_l}."""
    return phase_derivative(lambda e: np.exp(2j * solve_radial(p, e).phase_shift), energy, step)
