"""
Service layer for the `lab` subcommands.

Each service validates the sections it needs, runs the numerical modules and
returns a Report for the output writers.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from contextvars import copy_context
from typing import Callable, Dict, Sequence

import numpy as np

from .classical_service import classical_probabilistic_sojourn, classical_time_delay, integrate_trajectory
from .conf import overridden
from .config import RunConfig
from .dynamics_service import (WavePacket, direct_sojourn, linear_response_check, propagate, run_clock,
                               scattering_split)
from .exceptions import ConditionProbabilityError, ConfigurationError
from .floquet_service import (floquet_conditional_delay, floquet_eisenbud_wigner, floquet_s_matrix,
                              floquet_time_delay, solve_floquet, split_energy, truncation_study)
from .output import Report
from .potentials import (PeriodicPotential, Potential, SpatialGrid, double_barrier, driven, free, gaussian_bump,
                         load_tabulated, piecewise, radial_hard_core, radial_square_well, square, wavenumber)
from .profiles import EnergyProfile, FuzzyProfile
from .serializers import PotentialSerializer, validate_section
from .sojourn_service import (conditional_time_delay, eisenbud_wigner_delay, fuzzy_sweep,
                              general_conditional_fuzzy_delay, limit_order_check, local_time_delay,
                              onshell_packet_sojourn, resonance_analysis, translated_quantum_delay)
from .stationary_service import phase_table, radial_phase_derivative, solve_radial

logger = logging.getLogger(__name__)


class RunContext:
    """Validated sections of one run; everything validated ends up in `resolved`."""

    def __init__(self, config: RunConfig):
        self.config = config
        self.resolved: Dict[str, object] = {}

    def section(self, name: str) -> dict:
        data = validate_section(self.config, name)
        self.resolved.update({f"{name}.{key}": value for key, value in data.items()})
        return data

    def map(self, fn: Callable, items: Sequence) -> list:
        """fn over items, on `scan.workers` threads; results keep the order of items."""
        workers = self.section('scan')['workers']
        if workers <= 1 or len(items) < 2:
            return [fn(item) for item in items]
        # numerics overrides live in context variables, which threads do not inherit
        contexts = [copy_context() for _ in items]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(lambda pair: pair[0].run(fn, pair[1]), zip(contexts, items)))


# --- builders ---------------------------------------------------------------------------

def build_potential(data: dict) -> Potential:
    kind, geometry, l = data['kind'], data['geometry'], data['l']
    if kind == 'free':
        return free(geometry, l)
    if kind == 'square':
        return square(data['height'], data['width'])
    if kind == 'double-barrier':
        return double_barrier(data['height'], data['width'], data['gap'])
    if kind == 'gaussian':
        return gaussian_bump(data['height'], data['sigma'], data['cutoff'])
    if kind == 'piecewise':
        return piecewise(PotentialSerializer.parse_segments(data['segments']), geometry=geometry, l=l)
    if kind == 'tabulated':
        return load_tabulated(data['file'], geometry=geometry, l=l)
    if kind == 'radial-well':
        return radial_square_well(data['depth'], data['radius'], l=l)
    return radial_hard_core(data['radius'], l=l)


def _potential(ctx: RunContext) -> Potential:
    return build_potential(ctx.section('potential'))


def _full_line(ctx: RunContext) -> Potential:
    p = _potential(ctx)
    if p.geometry != 'full-line':
        raise ConfigurationError(f"this command needs a full-line potential, got '{p.geometry}'")
    return p


def _periodic(ctx: RunContext) -> PeriodicPotential:
    base = _potential(ctx)
    if base.geometry != 'radial':
        raise ConfigurationError("driven potentials live on the radial half line; set potential.geometry = radial")
    if not ctx.config.has_section('drive'):
        raise ConfigurationError("this command needs a drive section (drive.omega, drive.amplitude)")
    drive = ctx.section('drive')
    shape = None
    if 'radius' in drive:
        shape = piecewise([(0.0, drive['radius'], 1.0)], name='drive shape', geometry='radial')
    return driven(base, drive['omega'], drive['amplitude'], shape)


def _target(ctx: RunContext):
    """A fixed energy (float) or an EnergyProfile."""
    data = ctx.section('profile')
    if data['kind'] == 'fixed':
        return float(data['energy'])
    if data['kind'] == 'gaussian':
        return EnergyProfile.gaussian(data['energy'], data['width'], samples=data['samples'],
                                      direction=data['direction'])
    return EnergyProfile.gaussian_momentum(data['k0'], data['sigma_k'], samples=data['samples'],
                                           direction=data['direction'])


def _energy(ctx: RunContext) -> float:
    target = _target(ctx)
    if isinstance(target, EnergyProfile):
        raise ConfigurationError("this command works at a fixed energy; set profile.kind = fixed")
    return target


def _region(ctx: RunContext, default_r: float = 0.0) -> FuzzyProfile:
    data = ctx.section('region')
    r = data['r'] or default_r
    if data['rho'] == 0.0:
        return FuzzyProfile.sharp(r, data['center'])
    return FuzzyProfile(r=r, rho=data['rho'], shape=data['shape'], center=data['center'])


def _r_grid(ctx: RunContext, floor: float) -> np.ndarray:
    scan = ctx.section('scan')
    rmin = scan.get('rmin') or max(2.0 * floor, 1.0)
    rmax = scan.get('rmax') or 10.0 * rmin
    if rmax <= rmin:
        raise ConfigurationError("scan.rmax must exceed scan.rmin", rmin=rmin, rmax=rmax)
    return np.linspace(rmin, rmax, scan['steps'])


def _channel(ctx: RunContext, target) -> str:
    channel = ctx.section('delay').get('channel')
    if channel:
        return channel
    return target.direction if isinstance(target, EnergyProfile) else 'left'


def _packet(ctx: RunContext, p: Potential) -> WavePacket:
    data = ctx.section('packet')
    k0 = data.get('k0')
    if k0 is None:
        k0 = float(wavenumber(_energy(ctx)))
    grid = SpatialGrid.periodic(data['half_width'], data['points'])
    x0 = data.get('x0', -0.45 * data['half_width'])
    if not grid.x_min < x0 < p.support[0]:
        raise ConfigurationError("packet.x0 must lie inside the grid, left of the potential", x0=x0,
                                 grid=(grid.x_min, grid.x_max), support=p.support)
    return WavePacket.gaussian(grid, x0, k0, data['sigma_k'])


def _banner(title: str, inputs: Dict[str, object]):
    logger.info("=" * 60)
    logger.info(f"{title} - STARTED")
    logger.info("=" * 60)
    logger.info("Resolved Inputs:")
    for key, value in inputs.items():
        logger.info(f"  - {key}: {value}")


def _finish(title: str, result: Dict[str, object]):
    logger.info("Results:")
    for key, value in result.items():
        if isinstance(value, (int, float, str, bool)):
            logger.info(f"  - {key}: {value}")
    logger.info(f"{title} - COMPLETED")
    logger.info("=" * 60)


def _table(report_columns: Dict[str, np.ndarray]) -> tuple:
    columns = list(report_columns)
    return columns, np.column_stack([np.asarray(report_columns[name], dtype=float) for name in columns])


# --- services ---------------------------------------------------------------------------

class ClassicalService:
    """Classical trajectory delays for every convention over an r grid."""

    COMMAND = "classical"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        p = _full_line(ctx)
        energy = _energy(ctx)
        convention = ctx.section('delay')['convention']
        region = _region(ctx)
        r_grid = _r_grid(ctx, p.support_radius + abs(region.center))
        _banner("CLASSICAL TIME DELAY", {'Potential': p.name, 'Energy': energy, 'Convention': convention})
        q_start = min(p.support[0], region.center - r_grid[-1]) - 1.0
        tr = integrate_trajectory(p, energy, q_start)
        report = classical_time_delay(tr, convention, r_grid, center=region.center)
        result = {'tau_closed_form': report.tau_closed_form, 'value': report.value, 'outcome': tr.outcome,
                  'captured': report.captured, 'energy_drift': tr.energy_drift}
        if not report.captured:
            result['worst_residual'] = report.residual
            result['free_flight_slope'] = report.free_flight_slope
            if region.r > 0:
                result['probabilistic_sojourn'] = classical_probabilistic_sojourn(tr, region)
        _finish("CLASSICAL TIME DELAY", result)
        columns, rows = _table({'r': r_grid, **{name: report.tables[name] for name in sorted(report.tables)}})
        return Report(ClassicalService.COMMAND, ctx.resolved, result, columns, rows)


class SMatrixService:
    """On-shell S-matrix (or phase shift) with its phase derivatives."""

    COMMAND = "smatrix"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        p = _potential(ctx)
        energy = _energy(ctx)
        _banner("S-MATRIX", {'Potential': p.name, 'Geometry': p.geometry, 'Energy': energy})
        if p.geometry == 'radial':
            state = solve_radial(p, energy)
            derivative = radial_phase_derivative(p, energy)
            result = {'phase_shift': state.phase_shift, 'S': complex(np.exp(2j * state.phase_shift)),
                      'tau_ew': derivative.value, 'tau_ew_error': derivative.error, 'l': p.l}
        else:
            table = phase_table(p, energy)
            s = table.s
            result = {
                'T': s.T, 'L': s.L, 'R': s.R, 'matrix': s.matrix,
                'transmission': s.transmission, 'reflection': s.reflection,
                'unitarity_defect': s.unitarity_defect, 'reciprocity_defect': s.reciprocity_defect,
                'alpha_T': s.alpha_T, 'alpha_L': s.alpha_L, 'alpha_R': s.alpha_R,
                'd_alpha_T': table.d_alpha_T.value, 'd_alpha_L': table.d_alpha_L.value,
                'd_alpha_R': table.d_alpha_R.value,
                'tau_ew': eisenbud_wigner_delay(p, energy).value,
            }
            origin = ctx.section('delay')['origin']
            if origin:
                translated = translated_quantum_delay(p, energy, origin)
                result['translated_delay'] = translated.value
                result['translation_shift'] = translated.extras['shift']
        result['energy'] = energy
        _finish("S-MATRIX", result)
        return Report(SMatrixService.COMMAND, ctx.resolved, result)


class DelayScanService:
    """tau_EW, transmission and reflection delays and |T|^2 over an energy grid."""

    COMMAND = "delay"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        p = _full_line(ctx)
        scan = ctx.section('scan')
        if 'emin' not in scan or 'emax' not in scan:
            raise ConfigurationError("delay scans need scan.emin and scan.emax")
        channel = ctx.section('delay').get('channel') or 'left'
        reflect = 'reflect-left' if channel == 'left' else 'reflect-right'
        energies = np.linspace(scan['emin'], scan['emax'], scan['n'])
        _banner("DELAY SCAN", {'Potential': p.name, 'Energies': f"{scan['emin']} .. {scan['emax']} ({scan['n']})",
                               'Channel': channel})

        def conditional(energy, condition):
            try:
                return conditional_time_delay(p, energy, condition).value
            except ConditionProbabilityError:
                return math.nan

        def row(energy):
            energy = float(energy)
            ew = eisenbud_wigner_delay(p, energy, channel=channel).value
            table = phase_table(p, energy)
            return (energy, ew, conditional(energy, 'transmit'), conditional(energy, reflect),
                    table.s.transmission)

        rows = np.array(ctx.map(row, list(energies)), dtype=float)
        skipped = int(np.count_nonzero(np.isnan(rows[:, 2:4])))
        if skipped:
            logger.warning(f"{skipped} conditional delays skipped: condition probability below threshold")
        result = {'points': int(rows.shape[0]), 'max_tau_ew': float(np.max(rows[:, 1])),
                  'energy_at_max_tau_ew': float(rows[np.argmax(rows[:, 1]), 0])}
        _finish("DELAY SCAN", result)
        return Report(DelayScanService.COMMAND, ctx.resolved, result,
                      ['E', 'tau_ew', 'tau_tr', 'tau_refl', 'absT2'], rows)


class SojournScanService:
    """Local time delay tau(r) = T_int - T_ref over an r grid and its limit."""

    COMMAND = "sojourn-scan"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        p = _potential(ctx)
        target = _target(ctx)
        reference = ctx.section('delay')['reference']
        channel = _channel(ctx, target) if p.geometry == 'full-line' else None
        r_grid = _r_grid(ctx, p.support_radius)
        region = _region(ctx, default_r=float(r_grid[-1]))
        rho_ratio = ctx.section('region').get('rho_ratio')
        _banner("SOJOURN SCAN", {'Potential': p.name, 'Reference': reference, 'Region': region,
                                 'Radii': f"{r_grid[0]} .. {r_grid[-1]} ({r_grid.size})"})
        delay = local_time_delay(p, target, region, reference=reference, r_grid=r_grid,
                                 rho_ratio=rho_ratio, channel=channel)
        result = {'value': delay.value, 'residual': delay.residual,
                  'tau_ew': eisenbud_wigner_delay(p, target, channel=channel).value, **delay.extras}
        _finish("SOJOURN SCAN", result)
        columns, rows = _table(delay.table)
        return Report(SojournScanService.COMMAND, ctx.resolved, result, columns, rows)


class FuzzySweepService:
    """Fixed-energy fuzzy delay against rho at fixed r."""

    COMMAND = "fuzzy-sweep"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        p = _potential(ctx)
        energy = _energy(ctx)
        region = ctx.section('region')
        rhos = ctx.section('scan').get('rhos')
        if not rhos:
            raise ConfigurationError("fuzzy sweeps need scan.rhos")
        if region['r'] <= p.support_radius:
            raise ConfigurationError("region.r must lie beyond the potential support",
                                     r=region['r'], support_radius=p.support_radius)
        delay_section = ctx.section('delay')
        channel = delay_section.get('channel') or 'left'
        _banner("FUZZY SWEEP", {'Potential': p.name, 'Energy': energy, 'r': region['r'], 'Shape': region['shape']})
        delay = fuzzy_sweep(p, energy, region['r'], rhos, shape=region['shape'],
                            reference=delay_section['reference'], channel=channel, center=region['center'])
        result = {'value': delay.value, 'residual': delay.residual, **delay.extras}
        _finish("FUZZY SWEEP", result)
        columns, rows = _table(delay.table)
        return Report(FuzzySweepService.COMMAND, ctx.resolved, result, columns, rows)


class PacketSojournService:
    """Direct sojourn time of a propagated packet next to its on-shell average."""

    COMMAND = "packet-sojourn"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        p = _full_line(ctx)
        packet = _packet(ctx, p)
        region = _region(ctx, default_r=max(p.support_radius, 1.0))
        dt = ctx.section('packet')['dt']
        _banner("PACKET SOJOURN", {'Potential': p.name, 'Region': region, 'Grid points': packet.grid.n_points})
        series = propagate(p, packet, dt, regions=[region])
        direct = direct_sojourn(series, region)
        transmitted, reflected = scattering_split(series, p)
        onshell = onshell_packet_sojourn(p, packet.profile, region)
        result = {'direct': direct.value, 'past': direct.past, 'tail': direct.tail, 'onshell': onshell,
                  'difference': direct.value - onshell, 'transmitted': transmitted, 'reflected': reflected,
                  'final_time': float(series.times[-1])}
        _finish("PACKET SOJOURN", result)
        return Report(PacketSojournService.COMMAND, ctx.resolved, result)


class ClocksService:
    """Larmor, dissipative and energy clocks extrapolated to zero coupling."""

    COMMAND = "clocks"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        p = _full_line(ctx)
        packet = _packet(ctx, p)
        region = _region(ctx, default_r=max(p.support_radius, 1.0))
        dt = ctx.section('packet')['dt']
        clock = ctx.section('clock')
        _banner("CLOCKS", {'Potential': p.name, 'Region': region, 'Clocks': ", ".join(clock['kinds'])})
        series = propagate(p, packet, dt, regions=[region])
        result = {'direct': direct_sojourn(series, region).value}
        for kind in clock['kinds']:
            run = run_clock(kind, p, packet, region, clock.get('couplings'), dt)
            result[kind] = {'value': run.value, 'error': run.error, 'flagged': run.flagged,
                            'couplings': run.couplings, 'readings': run.readings, 'diagnostics': run.diagnostics}
            result[f"{kind}_relative_difference"] = abs(run.value - result['direct']) / abs(result['direct'])
        _finish("CLOCKS", result)
        return Report(ClocksService.COMMAND, ctx.resolved, result)


class LinearResponseService:
    """Linear response of S to V + lambda chi_region against the on-shell sojourn."""

    COMMAND = "linear-response"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        p = _potential(ctx)
        target = _target(ctx)
        region = _region(ctx, default_r=max(p.support_radius, 1.0))
        channel = _channel(ctx, target) if p.geometry == 'full-line' else None
        _banner("LINEAR RESPONSE", {'Potential': p.name, 'Region': region})
        response = linear_response_check(p, target, region, channel=channel)
        onshell = onshell_packet_sojourn(p, target, region, channel=channel)
        result = {'value': response.value, 'onshell': onshell, 'difference': response.value - onshell,
                  'couplings': response.couplings, 'estimates': response.estimates}
        _finish("LINEAR RESPONSE", result)
        return Report(LinearResponseService.COMMAND, ctx.resolved, result)


class FloquetService:
    """Sideband S-matrix, its unitarity and the quasi-energy Eisenbud-Wigner matrix."""

    COMMAND = "floquet"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        pp = _periodic(ctx)
        energy = _energy(ctx)
        drive = ctx.section('drive')
        incoming, epsilon = split_energy(pp, energy)
        _banner("FLOQUET S-MATRIX", {'Omega': pp.omega, 'Quasi-energy': epsilon, 'Incoming sideband': incoming})
        solution = solve_floquet(pp, epsilon, n_max=drive.get('n_max'))
        s = floquet_s_matrix(solution)
        n = solution.channel(incoming)
        ew = floquet_eisenbud_wigner(pp, epsilon, n_max=solution.n_max)
        result = {'epsilon': epsilon, 'incoming': incoming, 'n_max': solution.n_max, 'orders': s.orders,
                  'matrix': s.matrix, 'unitarity_defect': s.unitarity_defect, 'row_sums': s.row_sums,
                  'column_sums': s.column_sums, 'closed_decay': solution.closed_decay,
                  'eisenbud_wigner': ew, 'tau_ew': float(ew[n, n].real)}
        if drive.get('truncations'):
            rows = truncation_study(pp, epsilon, drive['truncations'])
            result['truncation'] = [{'n_max': row.n_max, 'unitarity_defect': row.unitarity_defect,
                                     'change': row.change, 'closed_decay': row.closed_decay} for row in rows]
        _finish("FLOQUET S-MATRIX", result)
        return Report(FloquetService.COMMAND, ctx.resolved, result)


class FloquetDelayService:
    """Local multichannel delay of one incoming sideband and, on request, a sideband-conditional delay."""

    COMMAND = "floquet-delay"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        pp = _periodic(ctx)
        energy = _energy(ctx)
        drive = ctx.section('drive')
        reference = ctx.section('delay')['reference']
        incoming, epsilon = split_energy(pp, energy)
        scan = ctx.section('scan')
        r_grid = _r_grid(ctx, pp.support_radius) if 'rmin' in scan or 'rmax' in scan else None
        _banner("FLOQUET DELAY", {'Omega': pp.omega, 'Quasi-energy': epsilon, 'Incoming sideband': incoming,
                                  'Reference': reference})
        delay = floquet_time_delay(pp, epsilon, reference=reference, channel=incoming,
                                   n_max=drive.get('n_max'), r_grid=r_grid)
        result = {'value': delay.value, 'residual': delay.residual, **delay.extras}
        if 'drive.sideband' in ctx.config.values:
            conditional = floquet_conditional_delay(pp, energy, drive['sideband'], n_max=drive.get('n_max'))
            result['conditional_delay'] = conditional.value
            result['conditional_probability'] = conditional.probability
        _finish("FLOQUET DELAY", result)
        columns, rows = _table(delay.table)
        return Report(FloquetDelayService.COMMAND, ctx.resolved, result, columns, rows)


class ResonanceService:
    """Breit-Wigner fit of an isolated transmission peak."""

    COMMAND = "resonance"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        p = _full_line(ctx)
        delay = ctx.section('delay')
        if 'window_low' not in delay:
            raise ConfigurationError("resonance fits need delay.window_low and delay.window_high")
        window = (delay['window_low'], delay['window_high'])
        _banner("RESONANCE", {'Potential': p.name, 'Window': window})
        fit = resonance_analysis(p, window, samples=delay['samples'])
        result = {'E_r': fit.E_r, 'Delta_E': fit.Delta_E, 'background_phase': fit.background_phase,
                  'peak_delay': fit.peak_delay, 'ratio': fit.ratio, 'quality': fit.quality,
                  'amplitude': fit.amplitude, 'offset': fit.offset}
        _finish("RESONANCE", result)
        return Report(ResonanceService.COMMAND, ctx.resolved, result)


class GeneralDelayService:
    """Conditional fuzzy delay from pseudo joint probabilities with its own free-flight slope."""

    COMMAND = "general-delay"

    @staticmethod
    def run(ctx: RunContext) -> Report:
        p = _full_line(ctx)
        target = _target(ctx)
        condition = ctx.section('delay')['condition']
        r_grid = _r_grid(ctx, p.support_radius)
        region = _region(ctx, default_r=float(r_grid[-1]))
        rho_ratio = ctx.section('region').get('rho_ratio')
        _banner("GENERAL CONDITIONAL DELAY", {'Potential': p.name, 'Condition': condition, 'Region': region})
        delay = general_conditional_fuzzy_delay(p, target, condition, region, r_grid=r_grid, rho_ratio=rho_ratio)
        result = {'value': delay.value, 'residual': delay.residual, 'probability': delay.probability, **delay.extras}
        width = ctx.section('delay').get('limit_width')
        if width:
            if isinstance(target, EnergyProfile):
                raise ConfigurationError("delay.limit_width needs a fixed energy; set profile.kind = fixed")
            check = limit_order_check(p, target, width, condition, region, rho_ratio=rho_ratio or 0.1,
                                      r_grid=r_grid)
            result.update({f"limit_order_{key}": value for key, value in check.items()})
        _finish("GENERAL CONDITIONAL DELAY", result)
        columns, rows = _table(delay.table)
        return Report(GeneralDelayService.COMMAND, ctx.resolved, result, columns, rows)


SERVICES = {service.COMMAND: service for service in (
    ClassicalService, SMatrixService, DelayScanService, SojournScanService, FuzzySweepService,
    PacketSojournService, ClocksService, LinearResponseService, FloquetService, FloquetDelayService,
    ResonanceService, GeneralDelayService,
)}


def run_command(command: str, config: RunConfig) -> Report:
    if command not in SERVICES:
        raise ConfigurationError(f"unknown subcommand '{command}'", allowed=sorted(SERVICES))
    ctx = RunContext(config)
    numerics = ctx.section('numerics')
    with overridden(**numerics):
        return SERVICES[command].run(ctx)
