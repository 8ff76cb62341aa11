"""
On-shell sojourn times, reference times and every time-delay built on them.

Sojourn times at fixed energy are (1/k) int chi |psi|^2 on the full line and
(4/k) int chi |u|^2 on the half line. Inside the potential support the
stationary samples are integrated with Simpson; outside it the state is a
pair of plane waves and the sharp part of the region is integrated exactly.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.optimize import curve_fit
from scipy.signal import find_peaks, peak_widths

from .conf import numeric
from .exceptions import (ConditionProbabilityError, ConfigurationError, ConvergenceError,
                         GridError, ResonanceFitError)
from .potentials import Potential, free, speed, wavenumber
from .profiles import EnergyProfile, FuzzyProfile, Region, as_region
from .stationary_service import (PhaseDerivative, SMatrix1D, StationaryState, phase_table,
                                 radial_phase_derivative, s_matrix, solve_full_line, solve_radial)

logger = logging.getLogger(__name__)

REFERENCE_KINDS = ('in', 'out', 'symmetric', 'free-flight')
CONDITIONS = ('transmit', 'reflect-left', 'reflect-right')
PROJECTORS = {
    'identity': (1.0, 1.0),
    'transmit': (1.0, 0.0),
    'reflect': (0.0, 1.0),
}

EnergyOrProfile = Union[float, EnergyProfile]
System = Union[Potential, SMatrix1D]
Wavenumbers = Union[None, float, Sequence[float]]


@dataclass(frozen=True)
class SojournOnShell:
    energy: float
    r: float
    value: float
    kind: str
    region: FuzzyProfile
    channel: str = '+'


@dataclass(frozen=True, eq=False)
class DelayResult:
    """
    A time-delay with the convention it was computed under.

    `table` holds the convergence table (named columns of equal length) when
    the value is a limit; `residual` is the size of what the limit removed
    from the last table row.
    """

    value: float
    convention: str
    condition: str = 'none'
    origin: float = 0.0
    rho: float = 0.0
    shape: str = 'sharp'
    table: Dict[str, np.ndarray] = field(default_factory=dict)
    residual: float = 0.0
    error: float = 0.0
    probability: float = 1.0
    extras: Dict[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ResonanceFit:
    E_r: float
    Delta_E: float
    background_phase: float
    peak_delay: float
    quality: float
    amplitude: float
    offset: float

    @property
    def ratio(self) -> float:
        """tau(E_r) * Delta_E / hbar."""
        return self.peak_delay * self.Delta_E


# --- averaging over energy --------------------------------------------------

def _energies(target: EnergyOrProfile) -> np.ndarray:
    if isinstance(target, EnergyProfile):
        return target.energies
    return np.array([float(target)])


def _average(target: EnergyOrProfile, values) -> np.ndarray:
    """Profile average of per-energy values (first axis), or the single value at fixed E."""
    values = np.asarray(values)
    if not isinstance(target, EnergyProfile):
        return values[0]
    weights = target.weights.reshape((-1,) + (1,) * (values.ndim - 1))
    return simpson(values * weights, x=target.energies, axis=0)


def _channel(target: EnergyOrProfile, channel: Optional[str]) -> str:
    if channel is not None:
        return channel
    return target.direction if isinstance(target, EnergyProfile) else 'left'


# --- states -------------------------------------------------------------------

def _proxy_state(s: SMatrix1D, direction: str) -> StationaryState:
    """Exterior-only state built from S alone (the potential shrunk to a point at 0)."""
    if direction == 'left':
        left, right = (1.0 + 0j, s.L), (s.T, 0j)
    else:
        left, right = (0j, s.T), (s.R, 1.0 + 0j)
    return StationaryState(energy=s.energy, direction=direction, pieces=(), support=(0.0, 0.0),
                           left=left, right=right, method='exterior')


def _state(system: System, energy: float, direction: str) -> StationaryState:
    if isinstance(system, SMatrix1D):
        if system.energy != energy:
            raise ConfigurationError("S-matrix energy does not match", s_energy=system.energy, energy=energy)
        return _proxy_state(system, direction)
    if system.geometry == 'radial':
        return solve_radial(system, energy)
    return solve_full_line(system, energy, direction=direction)


def _s_of(system: System, energy: float) -> SMatrix1D:
    return system if isinstance(system, SMatrix1D) else s_matrix(system, energy)


# --- spatial integrals ----------------------------------------------------------

def _kinks(region: FuzzyProfile) -> Tuple[float, ...]:
    c, r = region.center, region.r
    if region.is_sharp:
        return (c - r, c + r)
    outer = region.outer_radius
    return (c - outer, c - r, c + r, c + outer)


def _dense_points(length: float, k: float) -> int:
    n = max(257, int(math.ceil(64.0 * length * k / np.pi)))
    return n + 1 - (n % 2)


def _split(lo: float, hi: float, region: FuzzyProfile):
    """Sub-intervals of [lo, hi] on which chi is smooth."""
    cuts = [lo] + [x for x in _kinks(region) if lo < x < hi] + [hi]
    return [(a, b) for a, b in zip(cuts[:-1], cuts[1:]) if b > a]


def _plane_wave_overlap(first: Tuple[complex, complex], second: Tuple[complex, complex],
                        k: float, lo: float, hi: float) -> complex:
    """Integral over [lo, hi] of conj(A1 e^{ikx} + B1 e^{-ikx}) (A2 e^{ikx} + B2 e^{-ikx})."""
    a1, b1 = first
    a2, b2 = second

    def exp_integral(q):
        if abs(q) < 1e-300:
            return hi - lo
        return (np.exp(1j * q * hi) - np.exp(1j * q * lo)) / (1j * q)

    return ((np.conj(a1) * a2 + np.conj(b1) * b2) * (hi - lo)
            + np.conj(a1) * b2 * exp_integral(-2.0 * k)
            + np.conj(b1) * a2 * exp_integral(2.0 * k))


def _exterior_overlap(first: StationaryState, second: StationaryState, region: FuzzyProfile,
                      lo: float, hi: float) -> complex:
    k = first.k
    total = 0j
    for a, b in _split(lo, hi, region):
        middle = 0.5 * (a + b)
        weight = float(region.membership(middle))
        if weight == 0.0:
            continue
        sharp_part = abs(middle - region.center) <= region.r
        if sharp_part and not first.is_radial:
            side = 'left' if middle < first.support[0] else 'right'
            total += _plane_wave_overlap(getattr(first, side), getattr(second, side), k, a, b)
            continue
        x = np.linspace(a, b, _dense_points(b - a, k))
        integrand = np.conj(first.exterior(x)) * second.exterior(x) * region.membership(x)
        total += simpson(integrand, x=x)
    return total


def _piece_overlap(first, second, region: FuzzyProfile) -> complex:
    lo, hi = first.x[0], first.x[-1]
    intervals = _split(lo, hi, region)
    if len(intervals) == 1:
        integrand = np.conj(first.values) * second.values * region.membership(first.x)
        return simpson(integrand, x=first.x)
    total = 0j
    product = np.conj(first.values) * second.values
    real = CubicSpline(first.x, product.real)
    imag = CubicSpline(first.x, product.imag)
    for a, b in intervals:
        middle = 0.5 * (a + b)
        if float(region.membership(middle)) == 0.0:
            continue
        n = max(33, int(round((b - a) / (hi - lo) * first.x.size)) | 1)
        x = np.linspace(a, b, n)
        total += simpson((real(x) + 1j * imag(x)) * region.membership(x), x=x)
    return total


def _check_extent(state: StationaryState, region: FuzzyProfile):
    lower, upper = state.extent
    if region.center - region.outer_radius < lower - 1e-12 and not state.is_radial:
        raise GridError("region exceeds the state grid", region_lower=region.center - region.outer_radius,
                        grid_lower=lower)
    if region.center + region.outer_radius > upper + 1e-12:
        raise GridError("region exceeds the state grid", region_upper=region.center + region.outer_radius,
                        grid_upper=upper)


def region_overlap(first: StationaryState, second: StationaryState, region: Region) -> complex:
    """Integral of chi conj(psi_1) psi_2 over the region (both states at the same energy)."""
    region = as_region(region)
    _check_extent(first, region)
    if first.is_radial and region.center != 0.0:
        raise ConfigurationError("radial regions are centred on the origin", center=region.center)
    lower = region.center - region.outer_radius
    upper = region.center + region.outer_radius
    a, b = first.support
    total = 0j
    for mine, theirs in zip(first.pieces, second.pieces):
        if mine.x[-1] <= lower or mine.x[0] >= upper:
            continue
        total += _piece_overlap(mine, theirs, region)
    if first.is_radial:
        if upper > b:
            total += _exterior_overlap(first, second, region, max(b, 0.0), upper)
        return total
    if lower < a:
        total += _exterior_overlap(first, second, region, lower, min(a, upper))
    if upper > b:
        total += _exterior_overlap(first, second, region, max(b, lower), upper)
    return total


def _prefactor(state: StationaryState) -> float:
    return (4.0 if state.is_radial else 1.0) / state.k


# --- on-shell sojourn times ---------------------------------------------------

def onshell_interaction_sojourn(state: StationaryState, region: Region) -> SojournOnShell:
    """(1/k) int chi |psi|^2, or (4/k) int chi |u|^2 for radial states."""
    region = as_region(region)
    value = _prefactor(state) * region_overlap(state, state, region).real
    channel = {'left': '+', 'right': '-'}.get(state.direction, 'radial')
    return SojournOnShell(energy=state.energy, r=region.r, value=float(value), kind='interaction',
                          region=region, channel=channel)


def onshell_sojourn_matrix(system: System, energy: float, region: Region) -> np.ndarray:
    """<sigma|T_E(B)|rho> for sigma, rho in (+, -): (1/k) int chi conj(psi_sigma) psi_rho."""
    region = as_region(region)
    states = [_state(system, energy, 'left'), _state(system, energy, 'right')]
    matrix = np.empty((2, 2), dtype=complex)
    for i, first in enumerate(states):
        for j, second in enumerate(states):
            if j < i:
                matrix[i, j] = np.conj(matrix[j, i])
                continue
            matrix[i, j] = region_overlap(first, second, region) / first.k
    return matrix


def _interaction_sojourn(system: System, energy: float, region: FuzzyProfile, channel: str) -> float:
    state = _state(system, energy, channel)
    return _prefactor(state) * region_overlap(state, state, region).real


def _free_interference(region: FuzzyProfile, k: float) -> complex:
    """Integral of chi(x) e^{2ikx} dx for a symmetric region about its center."""
    if region.r == 0.0 and region.is_sharp:
        return 0j
    core = math.sin(2.0 * k * region.r) / k
    if not region.is_sharp:
        u = np.linspace(0.0, 1.0, _dense_points(region.rho, k))
        core += 2.0 * region.rho * simpson(region.g(u) * np.cos(2.0 * k * (region.r + region.rho * u)), x=u)
    return np.exp(2j * k * region.center) * core


def free_radial_sojourn(l: int, energy: float, region: Region) -> float:
    """(4/k) int chi |s_l(ks)|^2 ds, the free sojourn of partial wave l."""
    region = as_region(region)
    state = solve_radial(free('radial', l), energy)
    return _prefactor(state) * region_overlap(state, state, region).real


def _free_in(energy: float, region: FuzzyProfile, radial_l: Optional[int]) -> float:
    if radial_l is not None:
        return free_radial_sojourn(radial_l, energy, region)
    return 2.0 * region.free_flight_normalizer() / float(speed(energy))


def _free_out(s: SMatrix1D, region: FuzzyProfile, channel: str) -> float:
    k = float(wavenumber(s.energy))
    interference = _free_interference(region, k)
    if channel == 'left':
        cross = s.T * np.conj(s.L)
    else:
        cross = s.R * np.conj(s.T)
    return (2.0 * region.free_flight_normalizer() + 2.0 * (cross * np.conj(interference)).real) / k


def free_flight_slope(sojourn: Callable[[FuzzyProfile], float], region: FuzzyProfile,
                      oscillation_k: Wavenumbers = None) -> float:
    """
    lim T(B_r') / f(r', rho') by a linear fit over the decade r' in [R0, 10 R0].

    rho' = r' * rho_ratio for fuzzy regions. With `oscillation_k` (one or several k) the
    fit also carries sin/cos(2 k r') columns (sharp regions at fixed energy).
    """
    start = max(region.r, 50.0)
    count = int(numeric('slope_points'))
    ratio = numeric('rho_ratio')
    radii = np.linspace(start, 10.0 * start, count)
    scaled = [region.scaled(r, None if region.is_sharp else ratio * r) for r in radii]
    normalizers = np.array([item.free_flight_normalizer() for item in scaled])
    values = np.array([sojourn(item) for item in scaled])

    def fit(index):
        columns = [np.ones(index.stop - index.start), normalizers[index]] + _wave_columns(radii[index], oscillation_k)
        solution, *_ = np.linalg.lstsq(np.column_stack(columns), values[index], rcond=None)
        return float(solution[1])

    slope = fit(slice(0, count))
    first, second = fit(slice(0, count // 2)), fit(slice(count // 2, count))
    spread = abs(first - second) / max(abs(slope), 1e-300)
    if spread > 0.01:
        raise ConvergenceError("free-flight slope fit did not settle over the decade",
                               first_half=first, second_half=second, spread=spread)
    return slope


def _free_flight_reference(system: System, energy: float, region: FuzzyProfile, channel: str) -> float:
    sharp_k = float(wavenumber(energy)) if region.is_sharp else None
    slope = free_flight_slope(lambda item: _interaction_sojourn(system, energy, item, channel), region, sharp_k)
    return region.free_flight_normalizer() * slope


def _reference_at(kind: str, system: System, energy: float, region: FuzzyProfile, channel: str) -> float:
    radial_l = system.l if isinstance(system, Potential) and system.geometry == 'radial' else None
    if kind == 'in':
        return _free_in(energy, region, radial_l)
    if kind in ('out', 'symmetric'):
        if radial_l is not None:
            # a single open channel leaves the outgoing free state with the incoming weight
            return _free_in(energy, region, radial_l)
        out = _free_out(_s_of(system, energy), region, channel)
        if kind == 'out':
            return out
        return 0.5 * (out + _free_in(energy, region, None))
    if kind == 'free-flight':
        return _free_flight_reference(system, energy, region, channel)
    raise ConfigurationError(f"unknown reference kind '{kind}'", allowed=REFERENCE_KINDS)


def free_reference_sojourn(kind: str, s: System, target: EnergyOrProfile, region: Region,
                           channel: Optional[str] = None) -> SojournOnShell:
    """
    Free reference sojourn time of the given kind.

    `s` is an SMatrix1D at fixed energy or a Potential (then S is solved at
    every profile energy). With only an S-matrix the free-flight limit is taken
    on the exterior plane waves, which carry the whole linear growth.
    """
    region = as_region(region)
    if kind not in REFERENCE_KINDS:
        raise ConfigurationError(f"unknown reference kind '{kind}'", allowed=REFERENCE_KINDS)
    channel = _channel(target, channel)
    values = [_reference_at(kind, s, float(energy), region, channel) for energy in _energies(target)]
    value = float(_average(target, values))
    energy = float(target) if not isinstance(target, EnergyProfile) else target.mean_energy
    name = 'free-flight' if kind == 'free-flight' else f'free-{kind}'
    return SojournOnShell(energy=energy, r=region.r, value=value, kind=name, region=region,
                          channel={'left': '+', 'right': '-'}.get(channel, channel))


# --- limits -------------------------------------------------------------------------

def _wave_columns(r: np.ndarray, ks: Wavenumbers) -> list:
    if ks is None:
        return []
    columns = []
    for k in np.atleast_1d(ks):
        columns += [np.sin(2.0 * k * r), np.cos(2.0 * k * r)]
    return columns


def oscillation_fit(r: np.ndarray, tau: np.ndarray, k: Wavenumbers, linear: bool = False) -> Tuple[float, float, float]:
    """
    Least squares tau(r) = a + sum_k (b sin 2kr + c cos 2kr), plus a slope term when `linear`.

    Returns (a, oscillation amplitude, rms residual); with `linear` the slope
    replaces the amplitude.
    """
    columns = [np.ones_like(r)] + ([r] if linear else []) + _wave_columns(r, k)
    design = np.column_stack(columns)
    solution, *_ = np.linalg.lstsq(design, tau, rcond=None)
    rms = float(np.sqrt(np.mean((design @ solution - tau) ** 2)))
    if linear:
        return float(solution[0]), float(solution[1]), rms
    return float(solution[0]), float(np.sqrt(np.sum(solution[1:] ** 2))), rms


def tail_fit(r: np.ndarray, tau: np.ndarray) -> Tuple[float, float]:
    """Extrapolate tau(r) = a + b / r from the second half of the table; returns (a, |tau_last - a|)."""
    half = slice(r.size // 2, r.size) if r.size >= 4 else slice(0, r.size)
    if r[half].size < 2:
        return float(tau[-1]), 0.0
    design = np.column_stack([np.ones(r[half].size), 1.0 / r[half]])
    solution, *_ = np.linalg.lstsq(design, tau[half], rcond=None)
    return float(solution[0]), float(abs(tau[-1] - solution[0]))


def _region_schedule(region: FuzzyProfile, r_grid: np.ndarray, rho_ratio: Optional[float]):
    if rho_ratio is None or region.is_sharp:
        return [region.scaled(r) for r in r_grid]
    return [region.scaled(r, rho_ratio * r) for r in r_grid]


def _support_radius(system: System) -> float:
    return system.support_radius if isinstance(system, Potential) else 0.0


def local_time_delay(p: System, target: EnergyOrProfile, region: Region, reference: str = 'in',
                     r_grid: Optional[Sequence[float]] = None, rho_ratio: Optional[float] = None,
                     channel: Optional[str] = None) -> DelayResult:
    """
    tau(r) = T(B_r) - T_ref(B_r) over r_grid and its r -> infinity limit.

    Sharp regions at fixed energy keep an oscillation in 2kr; the limit is the
    mean of a + b sin 2kr + c cos 2kr. Everything else is extrapolated in 1/r.
    """
    region = as_region(region)
    channel = _channel(target, channel)
    if r_grid is None:
        r_grid = np.linspace(max(region.r, 1.0), 10.0 * max(region.r, 1.0), 40)
    r_grid = np.asarray(r_grid, dtype=float)
    regions = _region_schedule(region, r_grid, rho_ratio)
    energies = _energies(target)
    interaction = np.empty((energies.size, r_grid.size))
    references = np.empty((energies.size, r_grid.size))
    for i, energy in enumerate(energies):
        for j, item in enumerate(regions):
            interaction[i, j] = _interaction_sojourn(p, float(energy), item, channel)
        if reference == 'free-flight':
            # one slope per energy, shared by every r
            sharp_k = float(wavenumber(energy)) if region.is_sharp else None
            slope = free_flight_slope(lambda item: _interaction_sojourn(p, float(energy), item, channel),
                                      regions[-1], sharp_k)
            references[i] = [item.free_flight_normalizer() * slope for item in regions]
        else:
            references[i] = [_reference_at(reference, p, float(energy), item, channel) for item in regions]
    t_int = _average(target, interaction)
    t_ref = _average(target, references)
    tau = t_int - t_ref
    beyond = r_grid > _support_radius(p)
    extras = {}
    fixed_sharp = not isinstance(target, EnergyProfile) and region.is_sharp
    if fixed_sharp and np.count_nonzero(beyond) >= 3:
        k = float(wavenumber(float(target)))
        value, amplitude, rms = oscillation_fit(r_grid[beyond], tau[beyond], k)
        extras = {'oscillation_amplitude': amplitude, 'fit_rms': rms}
        residual = float(abs(tau[-1] - value))
    elif np.count_nonzero(beyond) >= 2:
        value, residual = tail_fit(r_grid[beyond], tau[beyond])
    else:
        value, residual = float(tau[-1]), 0.0
    logger.debug(f"Local delay [{reference}] limit {value:.10g} (last residual {residual:.2e})")
    return DelayResult(value=value, convention=reference, origin=region.center,
                       rho=regions[-1].rho, shape=region.shape,
                       table={'r': r_grid, 'T_int': t_int, 'T_ref': t_ref, 'tau_local': tau},
                       residual=residual, extras=extras)


def fuzzy_sweep(p: System, energy: float, r: float, rhos: Sequence[float], shape: str = 'cos2',
                reference: str = 'in', channel: str = 'left', center: float = 0.0) -> DelayResult:
    """
    Fixed-energy fuzzy delay against rho at fixed r.

    The residual |tau - tau_EW| at each rho is the envelope over one oscillation
    period in r; `extras['slope']` is its log-log slope against rho.

    The residual falls like 1/rho for shapes with g'(0) != 0 ('quadratic').
    'cos2' starts flat at the inner edge: its residual falls faster and is
    not monotone at small rho. Either way it stays under `table['bound']`.
    """
    rhos = np.asarray(rhos, dtype=float)
    k = float(wavenumber(energy))
    period = np.pi / k
    tau_ew = eisenbud_wigner_delay(p, energy, channel=channel).value
    values, residuals, bounds = [], [], []
    for rho in rhos:
        shifts = r + period * np.arange(16) / 16.0
        taus = []
        for radius in shifts:
            item = FuzzyProfile(r=float(radius), rho=float(rho), shape=shape, center=center)
            taus.append(_interaction_sojourn(p, energy, item, channel)
                        - _reference_at(reference, p, energy, item, channel))
        taus = np.array(taus)
        values.append(float(taus[0]))
        residuals.append(float(np.max(np.abs(taus - tau_ew))))
        bounds.append(FuzzyProfile(r=r, rho=float(rho), shape=shape).interference_bound(energy))
    residuals = np.array(residuals)
    positive = residuals > 0
    slope = float(np.polyfit(np.log(rhos[positive]), np.log(residuals[positive]), 1)[0]) if np.sum(positive) >= 2 else 0.0
    return DelayResult(value=values[-1], convention=reference, rho=float(rhos[-1]), shape=shape, origin=center,
                       table={'rho': rhos, 'tau': np.array(values), 'residual': residuals,
                              'bound': np.array(bounds)},
                       residual=float(residuals[-1]), extras={'slope': slope, 'tau_ew': tau_ew})


# --- phase-derivative delays ----------------------------------------------------------

def _ew_at(p: Potential, energy: float, channel: str) -> Tuple[float, float]:
    if p.geometry == 'radial':
        derivative = radial_phase_derivative(p, energy)
        return derivative.value, derivative.error
    table = phase_table(p, energy)
    s = table.s
    reflected = table.d_alpha_L if channel == 'left' else table.d_alpha_R
    reflection = abs(s.L) ** 2 if channel == 'left' else abs(s.R) ** 2
    value = s.transmission * table.d_alpha_T.value + reflection * reflected.value
    error = s.transmission * table.d_alpha_T.error + reflection * reflected.error
    return value, error


def eisenbud_wigner_delay(p: Potential, target: EnergyOrProfile, channel: Optional[str] = None) -> DelayResult:
    """|T|^2 alpha_T' + |L|^2 alpha_L' (left), |T|^2 alpha_T' + |R|^2 alpha_R' (right), 2 delta' (radial)."""
    channel = _channel(target, channel)
    pairs = np.array([_ew_at(p, float(energy), channel) for energy in _energies(target)])
    value = float(_average(target, pairs[:, 0]))
    error = float(_average(target, pairs[:, 1]))
    return DelayResult(value=value, convention='eisenbud-wigner', error=error)


def eisenbud_wigner_matrix(p: Potential, energy: float, step: Optional[float] = None) -> np.ndarray:
    """-i S^dagger dS/dE with dS/dE from Richardson-extrapolated central differences."""
    step = numeric('phase_step') if step is None else step

    def difference(h):
        return (s_matrix(p, energy + h).matrix - s_matrix(p, energy - h).matrix) / (2.0 * h)

    derivative = (4.0 * difference(0.5 * step) - difference(step)) / 3.0
    s = s_matrix(p, energy).matrix
    return -1j * s.conj().T @ derivative


def _condition_at(p: Potential, energy: float, condition: str) -> Tuple[float, PhaseDerivative]:
    table = phase_table(p, energy)
    if condition == 'transmit':
        return table.s.transmission, table.d_alpha_T
    if condition == 'reflect-left':
        return abs(table.s.L) ** 2, table.d_alpha_L
    if condition == 'reflect-right':
        return abs(table.s.R) ** 2, table.d_alpha_R
    raise ConfigurationError(f"unknown condition '{condition}'", allowed=CONDITIONS)


def conditional_time_delay(p: Potential, target: EnergyOrProfile, condition: str) -> DelayResult:
    """Phase-derivative delay of one outgoing channel, averaged with weight |S|^2 |phi|^2."""
    threshold = numeric('condition_threshold')
    rows = []
    for energy in _energies(target):
        probability, derivative = _condition_at(p, float(energy), condition)
        rows.append((probability, probability * derivative.value, probability * derivative.error))
    rows = np.array(rows)
    probability = float(_average(target, rows[:, 0]))
    if probability < threshold:
        raise ConditionProbabilityError("condition almost never satisfied", condition=condition,
                                        probability=probability, threshold=threshold)
    value = float(_average(target, rows[:, 1])) / probability
    error = float(_average(target, rows[:, 2])) / probability
    return DelayResult(value=value, convention='eisenbud-wigner', condition=condition,
                       error=error, probability=probability)


def translated_quantum_delay(p: Potential, target: EnergyOrProfile, c: float,
                             channel: Optional[str] = None) -> DelayResult:
    """tau(c) = tau + c < (1/v)(<p>_out - <p>_in) >."""
    channel = _channel(target, channel)
    base = eisenbud_wigner_delay(p, target, channel)
    incoming = 1.0 if channel == 'left' else -1.0
    momenta = []
    for energy in _energies(target):
        s = s_matrix(p, float(energy))
        reflection = abs(s.L) ** 2 if channel == 'left' else abs(s.R) ** 2
        outgoing = incoming * (s.transmission - reflection)
        momenta.append((outgoing - incoming) / float(speed(energy)))
    shift = c * float(_average(target, momenta))
    return DelayResult(value=base.value + shift, convention='eisenbud-wigner', origin=c,
                       error=base.error, extras={'shift': shift, 'tau_origin': base.value})


# --- resonances ---------------------------------------------------------------------------

def _lorentzian(energy, amplitude, center, width, offset):
    return amplitude * width ** 2 / ((energy - center) ** 2 + width ** 2) + offset


def resonance_analysis(p: Potential, window: Tuple[float, float], samples: int = 2001) -> ResonanceFit:
    """Breit-Wigner fit of the single |T|^2 peak inside the window."""
    low, high = window
    energies = np.linspace(low, high, samples)
    transmission = np.array([s_matrix(p, float(e)).transmission for e in energies])
    peaks, _ = find_peaks(transmission, prominence=1e-3)
    if peaks.size == 0:
        raise ResonanceFitError("no peak in |T|^2 inside the window", window=window)
    if peaks.size > 1:
        raise ResonanceFitError("more than one |T|^2 peak inside the window",
                                window=window, peaks=[round(float(energies[i]), 6) for i in peaks])
    index = int(peaks[0])
    widths, *_ = peak_widths(transmission, [index], rel_height=0.5)
    spacing = energies[1] - energies[0]
    half_width = max(0.5 * float(widths[0]) * spacing, spacing)
    center = float(energies[index])
    refit = np.linspace(max(low, center - 8.0 * half_width), min(high, center + 8.0 * half_width), 401)
    values = np.array([s_matrix(p, float(e)).transmission for e in refit])
    guess = (float(values.max() - values.min()), center, half_width, float(values.min()))
    try:
        params, _ = curve_fit(_lorentzian, refit, values, p0=guess, maxfev=20000)
    except RuntimeError as exc:
        raise ResonanceFitError(f"Lorentzian fit failed: {exc}", window=window) from exc
    amplitude, e_r, width, offset = (float(x) for x in params)
    width = abs(width)
    if not low <= e_r <= high:
        raise ResonanceFitError("fitted resonance lies outside the window", E_r=e_r, window=window)
    rms = float(np.sqrt(np.mean((_lorentzian(refit, *params) - values) ** 2)))
    peak_delay = eisenbud_wigner_delay(p, e_r).value
    background = float(np.angle(np.exp(1j * (s_matrix(p, e_r).alpha_T - 0.5 * np.pi))))
    fit = ResonanceFit(E_r=e_r, Delta_E=width, background_phase=background, peak_delay=peak_delay,
                       quality=rms / max(abs(amplitude), 1e-300), amplitude=amplitude, offset=offset)
    logger.debug(f"Resonance E_r={e_r:.8g} Delta_E={width:.4g} tau={peak_delay:.6g} ratio={fit.ratio:.4f}")
    return fit


# --- general conditional fuzzy delay ------------------------------------------------------

def _pseudo_parts(system: System, energy: float, region: FuzzyProfile, projector: Tuple[float, float]):
    """Re sum_rho (S^dagger F S)_{+rho} <rho|T|+> and (S^dagger F S)_{++} for incidence from the left."""
    s = _s_of(system, energy).matrix
    weighted = s.conj().T @ np.diag(projector) @ s
    matrix = onshell_sojourn_matrix(system, energy, region)
    numerator = float((weighted[0, :] @ matrix[:, 0]).real)
    return numerator, float(weighted[0, 0].real)


def pseudo_conditional_sojourn(system: System, target: EnergyOrProfile, region: Region,
                               condition: str = 'identity') -> Tuple[float, float]:
    """(Re <S^dagger F S T(B)> / ||F S phi||^2, ||F S phi||^2)."""
    region = as_region(region)
    projector = PROJECTORS[condition]
    parts = np.array([_pseudo_parts(system, float(e), region, projector) for e in _energies(target)])
    probability = float(_average(target, parts[:, 1]))
    threshold = numeric('condition_threshold')
    if probability < threshold:
        raise ConditionProbabilityError("condition almost never satisfied", condition=condition,
                                        probability=probability, threshold=threshold)
    return float(_average(target, parts[:, 0])) / probability, probability


def general_conditional_fuzzy_delay(p: System, target: EnergyOrProfile, condition: str, region: Region,
                                    r_grid: Optional[Sequence[float]] = None,
                                    rho_ratio: Optional[float] = None) -> DelayResult:
    """
    Pseudo conditional fuzzy sojourn minus f(r, rho) times its own free-flight slope.

    `condition` is 'identity', 'transmit' or 'reflect' on the outgoing channels
    of a particle incident from the left. The table runs over r_grid with
    rho = rho_ratio * r (the diagonal schedule) when rho_ratio is given.
    """
    if condition not in PROJECTORS:
        raise ConfigurationError(f"unknown condition '{condition}'", allowed=sorted(PROJECTORS))
    region = as_region(region)
    if r_grid is None:
        r_grid = np.linspace(max(region.r, 1.0), 10.0 * max(region.r, 1.0), 24)
    r_grid = np.asarray(r_grid, dtype=float)
    regions = _region_schedule(region, r_grid, rho_ratio)
    fixed_sharp = not isinstance(target, EnergyProfile) and region.is_sharp
    sharp_k = float(wavenumber(float(target))) if fixed_sharp else None
    slope = free_flight_slope(lambda item: pseudo_conditional_sojourn(p, target, item, condition)[0],
                              regions[-1], sharp_k)
    pseudo = np.empty(r_grid.size)
    probability = 0.0
    for j, item in enumerate(regions):
        pseudo[j], probability = pseudo_conditional_sojourn(p, target, item, condition)
    normalizers = np.array([item.free_flight_normalizer() for item in regions])
    tau = pseudo - normalizers * slope
    beyond = r_grid > _support_radius(p)
    if fixed_sharp and np.count_nonzero(beyond) >= 3:
        value, _, _ = oscillation_fit(r_grid[beyond], tau[beyond], sharp_k)
        residual = float(abs(tau[-1] - value))
    elif np.count_nonzero(beyond) >= 2:
        value, residual = tail_fit(r_grid[beyond], tau[beyond])
    else:
        value, residual = float(tau[-1]), 0.0
    return DelayResult(value=value, convention='free-flight', condition=condition, rho=regions[-1].rho,
                       shape=region.shape, table={'r': r_grid, 'pseudo': pseudo, 'tau_local': tau},
                       residual=residual, probability=probability, extras={'slope': slope})


def limit_order_check(p: Potential, energy: float, width: float, condition: str, region: Region,
                      rho_ratio: float = 0.1, r_grid: Optional[Sequence[float]] = None,
                      samples: int = 201) -> Dict[str, float]:
    """
    Compare fixed-energy-then-space with space-then-fixed-energy limits.

    The first route is the fuzzy fixed-E limit along rho = rho_ratio * r. The
    second takes sharp packet limits for widths w, w/2, w/4 and extrapolates
    them linearly in w^2 to zero width.
    """
    region = as_region(region)
    fixed = general_conditional_fuzzy_delay(p, energy, condition, region, r_grid=r_grid, rho_ratio=rho_ratio)
    sharp = FuzzyProfile.sharp(region.r, region.center)
    widths = np.array([width, 0.5 * width, 0.25 * width])
    packet_values = []
    for sigma in widths:
        profile = EnergyProfile.gaussian(energy, float(sigma), samples=samples)
        packet_values.append(general_conditional_fuzzy_delay(p, profile, condition, sharp, r_grid=r_grid).value)
    intercept = float(np.polyfit(widths ** 2, np.array(packet_values), 1)[1])
    return {
        'fixed_energy_first': fixed.value,
        'packet_first': intercept,
        'difference': abs(fixed.value - intercept),
    }


def onshell_packet_sojourn(p: System, target: EnergyOrProfile, region: Region,
                           channel: Optional[str] = None) -> float:
    """int dE <T_E(B)> |phi(E)|^2, the on-shell side of a packet sojourn time."""
    region = as_region(region)
    channel = _channel(target, channel)
    values = [_interaction_sojourn(p, float(energy), region, channel) for energy in _energies(target)]
    return float(_average(target, values))
