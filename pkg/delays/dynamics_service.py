"""
Wave-packet dynamics: split-operator propagation, direct sojourn times and clocks.

Packets live on a periodic grid with absorbing layers of width
`absorber_width` at both ends; every region must sit inside the physics
window between the layers.
"""
import logging
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft
from scipy.integrate import trapezoid

from .conf import numeric
from .exceptions import (ConfigurationError, GridError, NormDriftError, PrecessionError,
                         ProfileError, WindowTooShortError)
from .potentials import Potential, SpatialGrid, free
from .profiles import EnergyProfile, FuzzyProfile, Region, as_region
from .stationary_service import s_matrix, solve_radial

logger = logging.getLogger(__name__)

CLOCKS = ('larmor', 'dissipative', 'energy')
DEFAULT_COUPLINGS = {
    'larmor': 0.005,
    'dissipative': 2.5e-4,
    'energy': 1e-5,
}
_COUPLING_LADDER = (1.0, 2.0, 5.0, 10.0)
_MAX_STEPS = 400000

Perturbation = Union[None, np.ndarray, Callable[[float], np.ndarray]]


@dataclass(frozen=True, eq=False)
class WavePacket:
    """
    Samples of psi on a periodic grid; `values` has shape (n,) or (2, n) for a spinor.

    `profile` is the incoming energy profile the packet was built from, when known.
    """

    grid: SpatialGrid
    values: np.ndarray
    time: float = 0.0
    profile: Optional[EnergyProfile] = None

    @classmethod
    def from_profile(cls, grid: SpatialGrid, profile: EnergyProfile, x0: float,
                     k_samples: int = 2048) -> 'WavePacket':
        """psi(x) = int a(k) e^{ik(x - x0)} dk / sqrt(2 pi) with a(k) from the profile."""
        k_low, k_high = np.sqrt(2.0 * profile.energies[0]), np.sqrt(2.0 * profile.energies[-1])
        k = np.linspace(k_low, k_high, k_samples)
        amplitude = profile.momentum_amplitude(k)
        if profile.direction == 'right':
            k = -k
        x = grid.points
        phases = np.exp(1j * np.outer(x - x0, k))
        values = trapezoid(phases * amplitude, x=np.abs(k), axis=1) / np.sqrt(2.0 * np.pi)
        packet = cls(grid, values, profile=profile)
        return packet.normalized()

    @classmethod
    def gaussian(cls, grid: SpatialGrid, x0: float, k0: float, sigma_k: float,
                 e_min: Optional[float] = None) -> 'WavePacket':
        """Minimum-uncertainty packet, momentum spread sigma_k, position spread 1 / (2 sigma_k)."""
        if sigma_k <= 0:
            raise ProfileError("momentum spread must be positive", sigma_k=sigma_k)
        profile = EnergyProfile.gaussian_momentum(abs(k0), sigma_k, e_min=e_min,
                                                  direction='left' if k0 > 0 else 'right')
        x = grid.points
        values = ((2.0 * sigma_k ** 2 / np.pi) ** 0.25
                  * np.exp(-sigma_k ** 2 * (x - x0) ** 2 + 1j * k0 * (x - x0)))
        return cls(grid, values.astype(complex), profile=profile).normalized()

    @property
    def x(self) -> np.ndarray:
        return self.grid.points

    @property
    def is_spinor(self) -> bool:
        return self.values.ndim == 2

    @property
    def density(self) -> np.ndarray:
        density = np.abs(self.values) ** 2
        return density.sum(axis=0) if self.is_spinor else density

    @property
    def norm(self) -> float:
        return float(np.sum(self.density) * self.grid.dx)

    def normalized(self) -> 'WavePacket':
        return replace(self, values=self.values / np.sqrt(self.norm))

    def spinor(self) -> 'WavePacket':
        """Spin along x: (psi, psi) / sqrt(2)."""
        return replace(self, values=np.stack([self.values, self.values]) / np.sqrt(2.0))

    def probability_in(self, region: Region) -> float:
        return float(np.sum(as_region(region).membership(self.x) * self.density) * self.grid.dx)

    def probability_beyond(self, x: float, side: str = 'right') -> float:
        mask = self.x > x if side == 'right' else self.x < x
        return float(np.sum(self.density[mask]) * self.grid.dx)

    @property
    def mean_position(self) -> float:
        return float(np.sum(self.x * self.density) * self.grid.dx) / self.norm

    def mean_energy(self, potential: Optional[Potential] = None) -> float:
        """<p^2/2 + V> / <psi|psi>."""
        k = 2.0 * np.pi * fft.fftfreq(self.grid.n_points, d=self.grid.dx)
        spectrum = np.abs(fft.fft(self.values, axis=-1)) ** 2
        if self.is_spinor:
            spectrum = spectrum.sum(axis=0)
        kinetic = float(np.sum(0.5 * k ** 2 * spectrum) / np.sum(spectrum))
        if potential is None:
            return kinetic
        return kinetic + float(np.sum(potential(self.x) * self.density) / np.sum(self.density))


class SplitOperator:
    """exp(-i K dt/2) exp(-i V dt) exp(-i K dt/2) with an absorbing mask in the position step."""

    def __init__(self, grid: SpatialGrid, dt: float, absorber_width: Optional[float] = None,
                 absorber_strength: float = 1.0):
        if dt <= 0:
            raise ConfigurationError("time step must be positive", dt=dt)
        if dt > grid.dx ** 2 / np.pi:
            raise ConfigurationError("time step too large for the grid, need dt <= dx^2/pi",
                                     dt=dt, limit=grid.dx ** 2 / np.pi)
        self.grid = grid
        self.dt = dt
        self.absorber_width = numeric('absorber_width') if absorber_width is None else absorber_width
        if 2.0 * self.absorber_width >= grid.length:
            raise GridError("absorbing layers leave no physics window",
                            absorber_width=self.absorber_width, length=grid.length)
        k = 2.0 * np.pi * fft.fftfreq(grid.n_points, d=grid.dx)
        self.kinetic_half = np.exp(-0.25j * k ** 2 * dt)
        x = grid.points
        depth = np.maximum(grid.x_min + self.absorber_width - x, 0.0) + np.maximum(x - grid.x_max + self.absorber_width, 0.0)
        ramp = absorber_strength * np.sin(0.5 * np.pi * np.minimum(depth / self.absorber_width, 1.0)) ** 2
        self.mask = np.exp(-ramp * dt)

    @property
    def window(self) -> Tuple[float, float]:
        return self.grid.x_min + self.absorber_width, self.grid.x_max - self.absorber_width

    def check_region(self, region: FuzzyProfile):
        lower, upper = self.window
        if region.center - region.outer_radius < lower or region.center + region.outer_radius > upper:
            raise GridError("region reaches into the absorbing layers", window=self.window,
                            region=(region.center - region.outer_radius, region.center + region.outer_radius))

    def kinetic(self, psi: np.ndarray) -> np.ndarray:
        return fft.ifft(self.kinetic_half * fft.fft(psi, axis=-1), axis=-1)

    def step(self, psi: np.ndarray, phase: np.ndarray) -> Tuple[np.ndarray, float]:
        """One step; returns the new psi and the probability taken by the absorbing layers."""
        psi = self.kinetic(psi) * phase
        before = np.sum(np.abs(psi) ** 2)
        psi = psi * self.mask
        absorbed = float(before - np.sum(np.abs(psi) ** 2)) * self.grid.dx
        return self.kinetic(psi), absorbed


@dataclass(frozen=True, eq=False)
class Evolution:
    """
    Time series of one propagation run.

    `probabilities[i]` is the probability in `regions[i]` at every time;
    `absorbed` is the cumulative probability taken by the absorbing layers;
    `past` holds int_{-inf}^0 P_t dt per region from free backward evolution.
    """

    times: np.ndarray
    regions: Tuple[FuzzyProfile, ...]
    probabilities: np.ndarray
    norms: np.ndarray
    absorbed: np.ndarray
    positions: np.ndarray
    initial: WavePacket
    final: WavePacket
    snapshots: Tuple[WavePacket, ...] = ()
    past: Tuple[float, ...] = ()

    def index(self, region: Region) -> int:
        region = as_region(region)
        for i, tracked in enumerate(self.regions):
            if tracked == region:
                return i
        raise ConfigurationError("region was not tracked during propagation", region=region)

    def probability(self, region: Region) -> np.ndarray:
        return self.probabilities[self.index(region)]

    def shifted(self, t0: float) -> 'Evolution':
        """Same run with the time origin moved by t0."""
        return replace(self, times=self.times + t0)


def _potential_phase(values: np.ndarray, dt: float) -> np.ndarray:
    return np.exp(-1j * values * dt)


def propagate(p: Potential, packet: WavePacket, dt: float, n_steps: Optional[int] = None,
              regions: Sequence[Region] = (), perturbation: Perturbation = None,
              record_every: int = 0, include_past: bool = True, require_entry: bool = True,
              observer: Optional[Callable[[float, np.ndarray], None]] = None,
              absorber_width: Optional[float] = None, max_steps: int = _MAX_STEPS) -> Evolution:
    """
    Propagate `packet` under V (+ perturbation) with the split-operator scheme.

    `perturbation` is an array added to V (shape (n,) or (2, n) for spinors)
    or a callable t -> array evaluated at the midpoint of each step. With
    n_steps None the run stops once every tracked region has held less than
    `region_probability_floor` for `quiet_steps` consecutive steps.
    """
    if p.geometry != 'full-line':
        raise ConfigurationError("wave-packet dynamics runs on the full line", geometry=p.geometry)
    regions = tuple(as_region(region) for region in regions)
    if n_steps is None and not regions:
        raise ConfigurationError("adaptive stopping needs at least one tracked region")
    solver = SplitOperator(packet.grid, dt, absorber_width)
    for region in regions:
        solver.check_region(region)
    if not p.is_free and not packet.grid.covers(*p.support):
        raise GridError("grid does not cover the potential support", support=p.support)
    floor = numeric('region_probability_floor')
    quiet_needed = int(numeric('quiet_steps'))
    tolerance = numeric('norm_drift_tolerance')
    x = packet.grid.points
    dx = packet.grid.dx
    base = p(x)
    memberships = [region.membership(x) for region in regions]
    static_phase = None
    time_dependent = callable(perturbation)
    if not time_dependent:
        static = base if perturbation is None else base + perturbation
        static_phase = _potential_phase(static, dt)
    real_dynamics = (perturbation is None or time_dependent
                     or not np.iscomplexobj(perturbation) or not np.any(np.imag(perturbation)))

    psi = np.array(packet.values, dtype=complex)
    t = packet.time

    def density_of(values):
        density = np.abs(values) ** 2
        return density.sum(axis=0) if values.ndim == 2 else density

    def sample(values):
        density = density_of(values)
        return ([float(np.sum(m * density) * dx) for m in memberships],
                float(np.sum(density) * dx), float(np.sum(x * density) * dx))

    probabilities, norm, position = sample(psi)
    norm0 = norm
    times, probs, norms, absorbed, positions = [t], [probabilities], [norm], [0.0], [position]
    snapshots = [packet] if record_every else []
    lost = 0.0
    entered = not require_entry
    quiet = 0
    step = 0
    limit = max_steps if n_steps is None else n_steps
    while step < limit:
        if time_dependent:
            phase = _potential_phase(base + perturbation(t + 0.5 * dt), dt)
        else:
            phase = static_phase
        psi, taken = solver.step(psi, phase)
        lost += taken
        t += dt
        step += 1
        probabilities, norm, position = sample(psi)
        times.append(t)
        probs.append(probabilities)
        norms.append(norm)
        absorbed.append(lost)
        positions.append(position)
        if observer is not None:
            observer(t, psi)
        if real_dynamics and abs(norm + lost - norm0) > tolerance:
            raise NormDriftError("wave-packet norm drifted", drift=norm + lost - norm0, step=step, time=t)
        if record_every and step % record_every == 0:
            snapshots.append(replace(packet, values=psi.copy(), time=t))
        if n_steps is None:
            highest = max(probabilities)
            entered = entered or highest > floor
            quiet = quiet + 1 if entered and highest < floor else 0
            if quiet >= quiet_needed:
                break
    else:
        if n_steps is None:
            raise WindowTooShortError("propagation hit the step limit before the packet left the regions",
                                      steps=step, residual=max(probs[-1], default=0.0))
    final = replace(packet, values=psi, time=t)
    past = ()
    if include_past and regions:
        past = tuple(_free_past(packet, regions, dt, absorber_width))
    logger.debug(f"Propagated {step} steps to t={t:.4g} (norm {norm:.10g}, absorbed {lost:.3e})")
    return Evolution(times=np.array(times), regions=regions, probabilities=np.array(probs, dtype=float).reshape(len(times), len(regions)).T,
                     norms=np.array(norms), absorbed=np.array(absorbed), positions=np.array(positions),
                     initial=packet, final=final, snapshots=tuple(snapshots), past=past)


def _free_past(packet: WavePacket, regions: Tuple[FuzzyProfile, ...], dt: float,
               absorber_width: Optional[float]) -> Sequence[float]:
    """int_{-inf}^0 P_t dt: conj(psi) evolved forward under H0 is psi evolved backward."""
    backward = replace(packet, values=np.conj(packet.values), time=0.0)
    run = propagate(free(), backward, dt, regions=regions, include_past=False, require_entry=False,
                    absorber_width=absorber_width)
    values = []
    for row in run.probabilities:
        # t = 0 belongs to the forward run
        values.append(float(trapezoid(row, x=run.times)))
    return values


@dataclass(frozen=True)
class DirectSojourn:
    """Time integral of the region probability; `past` and `tail` are already included in `value`."""

    value: float
    window: Tuple[float, float]
    past: float
    tail: float
    residual_start: float
    residual_end: float


def direct_sojourn(series: Evolution, region: Region, window: Optional[Tuple[float, float]] = None) -> DirectSojourn:
    """
    int dt P_t(region) over the run.

    With an explicit window only that window is integrated. Otherwise the run
    must start and end with the region probability below the floor; the free
    past and an exponential tail estimate are added.
    """
    region = as_region(region)
    probabilities = series.probability(region)
    times = series.times
    if window is not None:
        start, end = window
        inside = (times >= start - 1e-12) & (times <= end + 1e-12)
        if np.count_nonzero(inside) < 2:
            raise ConfigurationError("time window holds fewer than two samples", window=window)
        value = float(trapezoid(probabilities[inside], x=times[inside]))
        return DirectSojourn(value=value, window=(float(times[inside][0]), float(times[inside][-1])),
                             past=0.0, tail=0.0, residual_start=float(probabilities[inside][0]),
                             residual_end=float(probabilities[inside][-1]))
    floor = numeric('region_probability_floor')
    first, last = float(probabilities[0]), float(probabilities[-1])
    if first > floor or last > floor:
        raise WindowTooShortError("region still occupied at the ends of the run",
                                  residual_start=first, residual_end=last, floor=floor)
    value = float(trapezoid(probabilities, x=times))
    past = series.past[series.index(region)] if series.past else 0.0
    slope = (probabilities[-1] - probabilities[-2]) / (times[-1] - times[-2])
    tail = float(last * last / -slope) if slope < 0 else 0.0
    return DirectSojourn(value=value + past + tail, window=(float(times[0]), float(times[-1])),
                         past=past, tail=tail, residual_start=first, residual_end=last)


def scattering_split(series: Evolution, p: Potential) -> Tuple[float, float]:
    """(transmitted, reflected) probabilities of the final packet, absorbed parts excluded."""
    a, b = p.support
    final = series.final
    return final.probability_beyond(b, 'right'), final.probability_beyond(a, 'left')


# --- clocks -----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ClockRun:
    kind: str
    couplings: np.ndarray
    readings: np.ndarray
    value: float
    error: float
    flagged: bool = False
    diagnostics: Dict[str, float] = field(default_factory=dict)


def _ladder(kind: str, couplings: Optional[Sequence[float]]) -> np.ndarray:
    if couplings is None:
        couplings = [DEFAULT_COUPLINGS[kind] * factor for factor in _COUPLING_LADDER]
    couplings = np.asarray(couplings, dtype=float)
    if couplings.size < 3:
        raise ConfigurationError("zero-coupling extrapolation needs at least 3 couplings", couplings=list(couplings))
    if np.any(couplings <= 0):
        raise ConfigurationError("couplings must be positive", couplings=list(couplings))
    return couplings


def _extrapolate(couplings: np.ndarray, readings: np.ndarray) -> Tuple[float, float]:
    """Quadratic fit in the coupling; (intercept, rms residual)."""
    coefficients = np.polyfit(couplings, readings, 2)
    residual = readings - np.polyval(coefficients, couplings)
    return float(coefficients[-1]), float(np.sqrt(np.mean(residual ** 2)))


def _clock_run(kind, couplings, readings, flagged=False, **diagnostics) -> ClockRun:
    value, error = _extrapolate(couplings, readings)
    logger.debug(f"{kind} clock readings {np.array2string(readings, precision=6)} -> {value:.8g} +- {error:.2e}")
    return ClockRun(kind=kind, couplings=couplings, readings=readings, value=value, error=error,
                    flagged=flagged, diagnostics=diagnostics)


def larmor_clock(p: Potential, packet: WavePacket, region: Region, couplings: Optional[Sequence[float]] = None,
                 dt: float = 0.01) -> ClockRun:
    """Spin along x precessing in a field omega confined to the region; reading = phase / omega."""
    region = as_region(region)
    couplings = _ladder('larmor', couplings)
    chi = region.membership(packet.grid.points)
    spinor = packet.spinor()
    readings, depolarization = [], 0.0
    for omega in couplings:
        tracker = {'phase': 0.0, 'last': 1.0 + 0j}

        def observe(t, psi):
            overlap = np.vdot(psi[0], psi[1])
            if abs(overlap) == 0.0:
                return
            tracker['phase'] += float(np.angle(overlap / tracker['last']))
            tracker['last'] = overlap
            if abs(tracker['phase']) > np.pi:
                raise PrecessionError("Larmor precession exceeds pi, use a smaller field",
                                      omega=float(omega), time=t)

        run = propagate(p, spinor, dt, regions=[region], include_past=False, observer=observe,
                        perturbation=np.stack([0.5 * omega * chi, -0.5 * omega * chi]))
        readings.append(tracker['phase'] / omega)
        final = run.final.values
        depolarization = max(depolarization, 1.0 - 2.0 * abs(np.vdot(final[0], final[1])) * packet.grid.dx / run.final.norm)
    if depolarization > 1e-3:
        logger.warning(f"Larmor clock spin-flip probability {depolarization:.2e} exceeds 1e-3")
    return _clock_run('larmor', couplings, np.array(readings), depolarization=depolarization)


def dissipative_clock(p: Potential, packet: WavePacket, region: Region,
                      couplings: Optional[Sequence[float]] = None, dt: float = 0.01) -> ClockRun:
    """Absorption -i lambda chi in the region; reading = -ln(survival) / (2 lambda)."""
    region = as_region(region)
    couplings = _ladder('dissipative', couplings)
    chi = region.membership(packet.grid.points)
    readings, worst = [], 0.0
    for strength in couplings:
        run = propagate(p, packet, dt, regions=[region], include_past=False, perturbation=-1j * strength * chi)
        survival = run.final.norm + run.absorbed[-1]
        worst = max(worst, 1.0 - survival)
        readings.append(-np.log(survival) / (2.0 * strength))
    flagged = worst > 0.5
    if flagged:
        logger.warning(f"Dissipative clock absorbed {worst:.1%} of the packet, leading order breaks down")
    return _clock_run('dissipative', couplings, np.array(readings), flagged=flagged, absorbed_fraction=worst)


def energy_clock(p: Potential, packet: WavePacket, region: Region, couplings: Optional[Sequence[float]] = None,
                 dt: float = 0.01) -> ClockRun:
    """
    Potential lambda t chi in the region; reading = (<H0>_end(lambda) - <H0>_end(0)) / lambda.

    The lambda = 0 run is the control: its drift is the splitting error.
    """
    region = as_region(region)
    couplings = _ladder('energy', couplings)
    chi = region.membership(packet.grid.points)
    start = packet.mean_energy(p)
    control = propagate(p, packet, dt, regions=[region], include_past=False)
    reference = control.final.mean_energy(p)
    readings = []
    for strength in couplings:
        run = propagate(p, packet, dt, regions=[region], include_past=False,
                        perturbation=lambda t, strength=strength: strength * t * chi)
        readings.append((run.final.mean_energy(p) - reference) / strength)
    return _clock_run('energy', couplings, np.array(readings), control_drift=reference - start)


def run_clock(kind: str, p: Potential, packet: WavePacket, region: Region,
              couplings: Optional[Sequence[float]] = None, dt: float = 0.01) -> ClockRun:
    clocks = {'larmor': larmor_clock, 'dissipative': dissipative_clock, 'energy': energy_clock}
    if kind not in clocks:
        raise ConfigurationError(f"unknown clock '{kind}'", allowed=CLOCKS)
    return clocks[kind](p, packet, region, couplings, dt)


# --- linear response --------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearResponse:
    value: float
    couplings: np.ndarray
    estimates: np.ndarray


def _response_at(p: Potential, energy: float, region: FuzzyProfile, coupling: float, channel: str) -> float:
    up, down = p.perturbed(region, coupling), p.perturbed(region, -coupling)
    if p.geometry == 'radial':
        derivative = (np.exp(2j * solve_radial(up, energy).phase_shift)
                      - np.exp(2j * solve_radial(down, energy).phase_shift)) / (2.0 * coupling)
        amplitude = np.exp(2j * solve_radial(p, energy).phase_shift)
        return float((1j * np.conj(amplitude) * derivative).real)
    column = 0 if channel == 'left' else 1
    derivative = (s_matrix(up, energy).matrix[:, column] - s_matrix(down, energy).matrix[:, column]) / (2.0 * coupling)
    column_values = s_matrix(p, energy).matrix[:, column]
    return float((1j * np.vdot(column_values, derivative)).real)


def linear_response_check(p: Potential, target: Union[float, EnergyProfile], region: Region,
                          couplings: Sequence[float] = (4e-3, 2e-3, 1e-3),
                          channel: Optional[str] = None) -> LinearResponse:
    """
    Re i <S^dagger dS/dlambda> at lambda -> 0 for V + lambda chi_region.

    Central differences at each coupling are extrapolated to zero in lambda^2.
    """
    region = as_region(region)
    couplings = np.asarray(couplings, dtype=float)
    if couplings.size < 2:
        raise ConfigurationError("linear response needs at least 2 couplings")
    if isinstance(target, EnergyProfile):
        channel = channel or target.direction
        energies = target.energies
    else:
        channel = channel or 'left'
        energies = np.array([float(target)])
    estimates = []
    for coupling in couplings:
        values = [_response_at(p, float(energy), region, float(coupling), channel) for energy in energies]
        estimates.append(target.average(values) if isinstance(target, EnergyProfile) else values[0])
    estimates = np.array(estimates, dtype=float)
    value = float(np.polyfit(couplings ** 2, estimates, 1)[1])
    return LinearResponse(value=value, couplings=couplings, estimates=estimates)


# --- positive-time sojourn ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PositiveTimeSojourn:
    """Positive-time and full-time free sojourn times over r with their linear fits."""

    r: np.ndarray
    positive: np.ndarray
    full: np.ndarray
    slope: float
    intercept: float
    full_slope: float
    full_intercept: float
    mean_inverse_speed: float


def positive_time_sojourn(packet: WavePacket, r_grid: Sequence[float], dt: float = 0.01) -> PositiveTimeSojourn:
    """
    int_0^inf dt P_t(B_r) for free evolution, fitted to intercept + slope * r.

    The full-time version adds the t < 0 half from the free backward run.
    """
    r_grid = np.asarray(r_grid, dtype=float)
    regions = [FuzzyProfile.sharp(float(r)) for r in r_grid]
    run = propagate(free(), packet, dt, regions=regions, require_entry=False)
    positive = np.array([trapezoid(row, x=run.times) for row in run.probabilities])
    full = positive + np.array(run.past)
    slope, intercept = np.polyfit(r_grid, positive, 1)
    full_slope, full_intercept = np.polyfit(r_grid, full, 1)
    if packet.profile is not None:
        inverse = packet.profile.mean_inverse_speed
    else:
        inverse = float('nan')
    return PositiveTimeSojourn(r=r_grid, positive=positive, full=full, slope=float(slope),
                               intercept=float(intercept), full_slope=float(full_slope),
                               full_intercept=float(full_intercept), mean_inverse_speed=float(inverse))
