"""
Classical scattering trajectories and the classical time-delay conventions.

Trajectories are built from exact free legs outside the support. Inside it,
piecewise-constant potentials are crossed segment by segment, smooth ones
with velocity-Verlet. Every delay is measured against the free asymptotes
q(t) = q_-/+ + p_-/+ t fitted at the two ends of the trajectory.
"""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid

from .exceptions import ArrivalError, ConfigurationError
from .potentials import Potential, speed
from .profiles import Region, as_region

logger = logging.getLogger(__name__)

CONVENTIONS = ('in+', 'out-', 'sojourn-in', 'sojourn-out', 'symmetric', 'free-flight')

_FREE_LEG_SAMPLES = 2001
_MAX_EVENTS = 100000


@dataclass(frozen=True)
class Asymptote:
    """Free motion q(t) = q + p t."""

    q: float
    p: float

    @property
    def direction(self) -> float:
        return math.copysign(1.0, self.p)

    def position(self, t):
        return self.q + self.p * np.asarray(t, dtype=float)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Sampled classical trajectory with its fitted asymptotes (outgoing is None when captured)."""

    t: np.ndarray
    q: np.ndarray
    p: np.ndarray
    energy: float
    incoming: Asymptote
    outgoing: Optional[Asymptote]
    dt: float
    fit_residual: float = 0.0
    energy_drift: float = 0.0

    @property
    def captured(self) -> bool:
        return self.outgoing is None

    @property
    def v(self) -> float:
        return float(speed(self.energy))

    @property
    def outcome(self) -> str:
        if self.captured:
            return 'captured'
        return 'transmitted' if self.incoming.direction == self.outgoing.direction else 'reflected'

    def shifted(self, t0: float) -> 'Trajectory':
        """Same motion on the clock t' = t - t0."""
        def move(asymptote):
            if asymptote is None:
                return None
            return Asymptote(asymptote.q + asymptote.p * t0, asymptote.p)

        return replace(self, t=self.t - t0, incoming=move(self.incoming), outgoing=move(self.outgoing))


@dataclass(frozen=True, eq=False)
class ClassicalDelayReport:
    """
    Local delays over an r grid for every convention, plus the closed-form limit.

    `tables` keys: 'in-', 'in+', 'out-', 'out+' (arrival-time delays),
    'sojourn-in', 'sojourn-out', 'symmetric', 'free-flight' (sojourn-time delays)
    and 'sojourn' (T(B_r) itself).
    """

    convention: str
    r_grid: np.ndarray
    tau_closed_form: float
    tables: Dict[str, np.ndarray]
    value: float
    center: float = 0.0
    captured: bool = False
    free_flight_slope: float = float('nan')

    @property
    def residuals(self) -> Dict[str, np.ndarray]:
        return {name: np.abs(table - self.tau_closed_form)
                for name, table in self.tables.items()
                if name not in ('in-', 'out+', 'sojourn')}

    @property
    def residual(self) -> float:
        return float(max(np.max(values) for values in self.residuals.values()))


@dataclass(frozen=True)
class MixedOriginLimits:
    """Arrival-time delay limits with interacting ball at c and free reference ball at c0."""

    in_minus: float
    out_plus: float
    in_plus: float
    out_minus: float
    tables: Dict[str, np.ndarray] = field(default_factory=dict)


# --- integration -------------------------------------------------------------

def _free_leg(t0: float, t1: float, q0: float, p0: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    t = np.linspace(t0, t1, _FREE_LEG_SAMPLES)
    return t, q0 + p0 * (t - t0), np.full(t.size, p0)


class _Path:
    """Concatenates the legs of a trajectory."""

    def __init__(self):
        self.legs: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = []

    def add(self, t, q, p, skip_first: bool = False, skip_last: bool = False):
        window = slice(1 if skip_first else 0, -1 if skip_last else None)
        self.legs.append((np.asarray(t)[window], np.asarray(q)[window], np.asarray(p)[window]))

    def arrays(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(np.concatenate([leg[index] for leg in self.legs]) for index in range(3))


def _cells(p: Potential) -> Tuple[np.ndarray, np.ndarray]:
    """Edges of the constant cells and V on each cell (outer cells included)."""
    edges = sorted({edge for segment in p.segments for edge in (segment.left, segment.right)})
    edges = np.array(edges, dtype=float)
    middles = np.concatenate([[edges[0] - 1.0], 0.5 * (edges[:-1] + edges[1:]), [edges[-1] + 1.0]])
    return edges, p(middles)


def _piecewise_events(p: Potential, energy: float, q_start: float, p_start: float, t_start: float):
    """Exact crossing/turning events until the particle leaves the support for good."""
    edges, values = _cells(p)
    sign = 1 if p_start > 0 else -1
    # start in the outer cell on the incoming side, at the support edge
    cell = 0 if sign > 0 else len(values) - 1
    t, q = t_start, q_start
    events = [(t, q, sign * math.sqrt(2.0 * (energy - values[cell])))]
    for _ in range(_MAX_EVENTS):
        leaving = (cell == 0 and sign < 0) or (cell == len(values) - 1 and sign > 0)
        if leaving:
            return events, sign
        local = math.sqrt(2.0 * (energy - values[cell]))
        edge = edges[cell] if sign > 0 else edges[cell - 1]
        t += abs(edge - q) / local
        q = float(edge)
        neighbour = cell + sign
        if energy > values[neighbour]:
            cell = neighbour
        else:
            sign = -sign
        events.append((t, q, sign * math.sqrt(2.0 * (energy - values[cell]))))
    raise ConfigurationError("too many turning points in a piecewise potential", events=_MAX_EVENTS)


def _force(p: Potential, q: float, eps: float) -> float:
    return -float(p(q + eps) - p(q - eps)) / (2.0 * eps)


def integrate_trajectory(p: Potential, energy: float, q_start: float,
                         t_span: Optional[Tuple[float, float]] = None,
                         dt: Optional[float] = None) -> Trajectory:
    """
    Trajectory launched at q_start towards the potential with kinetic energy E.

    The particle is followed until it has left the support and travelled as far
    out again as it started (or until t_span ends). A particle still inside the
    support at the end of t_span is captured.
    """
    if p.geometry != 'full-line':
        raise ConfigurationError("classical trajectories are one-dimensional", geometry=p.geometry)
    if not energy > 0:
        raise ConfigurationError("energy must be positive", energy=energy)
    a, b = p.support
    if a < q_start < b or (a == q_start and b > a):
        raise ConfigurationError("q_start must lie outside the potential support", q_start=q_start, support=p.support)
    v = float(speed(energy))
    width = max(b - a, 1.0)
    dt = 1e-3 * width / v if dt is None else dt
    if dt <= 0:
        raise ConfigurationError("time step must be positive", dt=dt)
    t0 = 0.0 if t_span is None else float(t_span[0])
    p0 = v if q_start <= a else -v
    reach = abs(q_start) + max(abs(a), abs(b))
    t_end = None if t_span is None else float(t_span[1])

    path = _Path()
    drift = 0.0

    if p.is_free or b <= a:
        t1 = t0 + 2.0 * reach / v if t_end is None else t_end
        path.add(*_free_leg(t0, t1, q_start, p0))
    else:
        edge = a if p0 > 0 else b
        t_entry = t0 + abs(edge - q_start) / v
        path.add(*_free_leg(t0, t_entry, q_start, p0), skip_last=True)
        limit = t_entry + 1000.0 * width / v if t_end is None else t_end
        if p.is_piecewise:
            events, sign = _piecewise_events(p, energy, edge, p0, t_entry)
            event_t = np.array([e[0] for e in events])
            event_q = np.array([e[1] for e in events])
            event_p = np.array([e[2] for e in events])
            if event_t[-1] > limit:
                raise ConfigurationError("t_span ends before the particle leaves the support", t_end=limit)
            n = max(2, int(math.ceil((event_t[-1] - event_t[0]) / dt)) + 1)
            inner_t = np.linspace(event_t[0], event_t[-1], n)
            leg = np.clip(np.searchsorted(event_t, inner_t, side='right') - 1, 0, len(events) - 1)
            path.add(inner_t, np.interp(inner_t, event_t, event_q), event_p[leg])
            exit_state = (event_t[-1], event_q[-1], sign * v)
        else:
            eps = 1e-6 * width
            q_now, p_now, t_now = edge, p0, t_entry
            force = _force(p, q_now, eps)
            inner_t, inner_q, inner_p = [t_now], [q_now], [p_now]
            exit_state = None
            while t_now < limit:
                p_half = p_now + 0.5 * dt * force
                q_next = q_now + dt * p_half
                force = _force(p, q_next, eps)
                p_next = p_half + 0.5 * dt * force
                if q_next < a or q_next > b:
                    boundary = a if q_next < a else b
                    fraction = (boundary - q_now) / (q_next - q_now)
                    t_exit = t_now + fraction * dt
                    # back on the energy shell for the free leg
                    exit_state = (t_exit, boundary, math.copysign(v, p_next))
                    break
                q_now, p_now, t_now = q_next, p_next, t_now + dt
                inner_t.append(t_now)
                inner_q.append(q_now)
                inner_p.append(p_now)
            inner_q_arr, inner_p_arr = np.array(inner_q), np.array(inner_p)
            drift = float(np.max(np.abs(0.5 * inner_p_arr ** 2 + p(inner_q_arr) - energy)))
            path.add(np.array(inner_t), inner_q_arr, inner_p_arr)
            if exit_state is None:
                logger.warning(f"Particle captured by {p.name} at E={energy:g} (t_span exhausted)")
                t_all, q_all, p_all = path.arrays()
                incoming, residual = _fit_asymptote(t_all[:_FREE_LEG_SAMPLES - 1], q_all[:_FREE_LEG_SAMPLES - 1])
                return Trajectory(t_all, q_all, p_all, energy, incoming, None, dt, residual, drift)
        t_exit, q_exit, p_exit = exit_state
        t1 = t_exit + reach / v if t_end is None else max(t_end, t_exit + dt)
        path.add(*_free_leg(t_exit, t1, q_exit, p_exit), skip_first=True)

    t_all, q_all, p_all = path.arrays()
    outside = (q_all <= a) | (q_all >= b) if b > a else np.ones(t_all.size, dtype=bool)
    first_inside = int(np.argmin(outside)) if not np.all(outside) else t_all.size // 2
    last_inside = t_all.size - 1 - int(np.argmin(outside[::-1])) if not np.all(outside) else t_all.size // 2
    tenth = max(2, t_all.size // 10)
    head = slice(0, min(tenth, max(first_inside, 2)))
    tail = slice(max(t_all.size - tenth, last_inside + 1, 0), t_all.size)
    incoming, residual_in = _fit_asymptote(t_all[head], q_all[head])
    outgoing, residual_out = _fit_asymptote(t_all[tail], q_all[tail])
    trajectory = Trajectory(t_all, q_all, p_all, energy, incoming, outgoing, dt,
                            max(residual_in, residual_out), drift)
    logger.debug(f"Trajectory {p.name} E={energy:g}: {trajectory.outcome}, "
                 f"fit residual {trajectory.fit_residual:.2e}, energy drift {drift:.2e}")
    return trajectory


def _fit_asymptote(t: np.ndarray, q: np.ndarray) -> Tuple[Asymptote, float]:
    slope, intercept = np.polyfit(t, q, 1)
    residual = float(np.max(np.abs(q - (intercept + slope * t))))
    return Asymptote(float(intercept), float(slope)), residual


# --- arrival times and delays ------------------------------------------------------

def arrival_times(tr: Trajectory, r: float, center: float = 0.0) -> Tuple[float, float]:
    """(t-, t+): first entry into and last exit from |q - center| <= r."""
    if tr.captured:
        raise ArrivalError("captured trajectory never leaves the region", r=r)
    inside = np.abs(tr.q - center) <= r
    if not np.any(inside) or inside[0] or inside[-1]:
        raise ArrivalError("trajectory does not cross |q - c| = r twice", r=r, center=center)
    first = int(np.argmax(inside))
    last = tr.t.size - 1 - int(np.argmax(inside[::-1]))
    return (_crossing(tr, first - 1, first, r, center), _crossing(tr, last, last + 1, r, center))


def _crossing(tr: Trajectory, i: int, j: int, r: float, center: float) -> float:
    q_i, q_j = tr.q[i] - center, tr.q[j] - center
    boundary = r if (q_i + q_j) > 0 else -r
    if q_j == q_i:
        return float(tr.t[i])
    fraction = (boundary - q_i) / (q_j - q_i)
    return float(tr.t[i] + fraction * (tr.t[j] - tr.t[i]))


def _free_arrivals(asymptote: Asymptote, r: float, v: float, center: float) -> Tuple[float, float]:
    """Times at which the free motion reaches the near and far side of B_r(center)."""
    projected = asymptote.direction * (asymptote.q - center)
    return (-r - projected) / v, (r - projected) / v


def closed_form_delay(tr: Trajectory, center: float = 0.0) -> float:
    """tau = -(1/v) [p+^ (q+ - c) - p-^ (q- - c)]."""
    if tr.captured:
        return math.inf
    inc, out = tr.incoming, tr.outgoing
    return -(out.direction * (out.q - center) - inc.direction * (inc.q - center)) / tr.v


def classical_time_delay(tr: Trajectory, convention: str, r_grid: Sequence[float],
                         center: float = 0.0) -> ClassicalDelayReport:
    """Local delay tables for every convention; `value` is the selected convention at the largest r."""
    if convention not in CONVENTIONS:
        raise ConfigurationError(f"unknown classical convention '{convention}'", allowed=CONVENTIONS)
    r_grid = np.asarray(r_grid, dtype=float)
    if tr.captured:
        infinite = np.full(r_grid.size, np.inf)
        names = ('in-', 'in+', 'out-', 'out+', 'sojourn', 'sojourn-in', 'sojourn-out', 'symmetric', 'free-flight')
        return ClassicalDelayReport(convention, r_grid, math.inf, {name: infinite for name in names},
                                    math.inf, center=center, captured=True)
    v = tr.v
    tables = {name: np.empty(r_grid.size) for name in ('in-', 'in+', 'out-', 'out+', 'sojourn')}
    reference_in = np.empty(r_grid.size)
    reference_out = np.empty(r_grid.size)
    for index, r in enumerate(r_grid):
        t_minus, t_plus = arrival_times(tr, r, center)
        in_minus, in_plus = _free_arrivals(tr.incoming, r, v, center)
        out_minus, out_plus = _free_arrivals(tr.outgoing, r, v, center)
        tables['in-'][index] = t_minus - in_minus
        tables['in+'][index] = t_plus - in_plus
        tables['out-'][index] = out_minus - t_minus
        tables['out+'][index] = out_plus - t_plus
        tables['sojourn'][index] = t_plus - t_minus
        reference_in[index] = in_plus - in_minus
        reference_out[index] = out_plus - out_minus
    sojourn = tables['sojourn']
    tables['sojourn-in'] = sojourn - reference_in
    tables['sojourn-out'] = sojourn - reference_out
    tables['symmetric'] = sojourn - 0.5 * (reference_in + reference_out)
    slope = float(np.polyfit(r_grid, sojourn, 1)[0]) if r_grid.size > 1 else 2.0 / v
    tables['free-flight'] = sojourn - r_grid * slope
    report = ClassicalDelayReport(convention, r_grid, closed_form_delay(tr, center), tables,
                                  float(tables[convention][-1]), center=center, free_flight_slope=slope)
    logger.debug(f"Classical delay [{convention}] = {report.value:.10g}, closed form "
                 f"{report.tau_closed_form:.10g}, worst residual {report.residual:.2e}")
    return report


def translated_time_delay(tr: Trajectory, c: float) -> float:
    """tau(c) = -(1/v) [p+^ (q+ - c) - p-^ (q- - c)]."""
    return closed_form_delay(tr, c)


def mixed_origin_limits(tr: Trajectory, c: float, c0: float,
                        r_grid: Optional[Sequence[float]] = None) -> MixedOriginLimits:
    """
    Interacting arrivals at B_r(c) against free arrivals at B_r(c0).

    With `r_grid` the four arrival-time delays and the sojourn-based delay are
    also tabulated from the trajectory.
    """
    if tr.captured:
        raise ArrivalError("captured trajectory has no outgoing asymptote")
    v = tr.v
    inc, out = tr.incoming, tr.outgoing
    limits = dict(
        in_minus=-inc.direction * (c0 - c) / v,
        out_plus=-out.direction * (c - c0) / v,
        in_plus=-(out.direction * (out.q - c) - inc.direction * (inc.q - c0)) / v,
        out_minus=-(out.direction * (out.q - c0) - inc.direction * (inc.q - c)) / v,
    )
    tables = {}
    if r_grid is not None:
        r_grid = np.asarray(r_grid, dtype=float)
        rows = []
        for r in r_grid:
            t_minus, t_plus = arrival_times(tr, r, c)
            in_minus, in_plus = _free_arrivals(inc, r, v, c0)
            out_minus, out_plus = _free_arrivals(out, r, v, c0)
            rows.append((t_minus - in_minus, out_plus - t_plus, t_plus - in_plus, out_minus - t_minus,
                         (t_plus - t_minus) - (in_plus - in_minus)))
        rows = np.array(rows)
        for index, name in enumerate(('in-', 'out+', 'in+', 'out-', 'sojourn-in')):
            tables[name] = rows[:, index]
    return MixedOriginLimits(tables=tables, **limits)


def classical_probabilistic_sojourn(tr: Trajectory, region: Region) -> float:
    """Integral over t of chi(q(t)), by the trapezoid rule on a grid no coarser than tr.dt."""
    region = as_region(region)
    if tr.captured:
        return math.inf
    outer = region.outer_radius
    inside = np.abs(tr.q - region.center) <= outer
    if not np.any(inside):
        return 0.0
    first = max(int(np.argmax(inside)) - 1, 0)
    last = min(tr.t.size - 1 - int(np.argmax(inside[::-1])) + 1, tr.t.size - 1)
    t_lo, t_hi = tr.t[first], tr.t[last]
    n = max(2001, int(math.ceil((t_hi - t_lo) / tr.dt)) + 1)
    t = np.linspace(t_lo, t_hi, n)
    q = np.interp(t, tr.t, tr.q)
    return float(trapezoid(region.membership(q), t))
