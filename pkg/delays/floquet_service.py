"""
Coupled-channel scattering by time-periodic radial potentials.

Channel mu carries energy E_mu = epsilon + mu * omega for mu in
[-n_max, n_max]; mu >= 0 are open, mu < 0 closed. The regular solution
matrix is propagated with matrix Numerov from s = 0 and matched at the edge
to (A h+ - delta h-) / 2i in open channels and decaying k-hat in closed ones.
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline
from scipy.special import kve

from .conf import numeric
from .exceptions import (ConditionProbabilityError, ConfigurationError, GridError, TruncationError,
                         UnitarityError)
from .potentials import PeriodicPotential, SpatialGrid
from .profiles import EnergyProfile, FuzzyProfile, Region, as_region
from .sojourn_service import DelayResult, free_flight_slope, free_radial_sojourn, oscillation_fit
from .stationary_service import phase_derivative, riccati_c, riccati_s

logger = logging.getLogger(__name__)

REFERENCES = ('in', 'symmetric', 'free-flight')
_BUFFER = 4
# closed channels must have decayed by this factor at the matching edge
_CLOSED_DECAY = 1e-8


@dataclass(frozen=True, eq=False)
class FloquetSolution:
    """
    Regular solutions u[node, sigma, rho] for every incoming open channel rho.

    `amplitudes` are the open-row matching coefficients A_{mu rho};
    `closed_decay` is max |u_closed(s_edge)| / max |u_open(s_edge)|.
    """

    system: PeriodicPotential
    epsilon: float
    l: int
    n_max: int
    orders: np.ndarray
    energies: np.ndarray
    kappa: np.ndarray
    s: np.ndarray
    u: np.ndarray
    amplitudes: np.ndarray
    closed_decay: float
    match: Tuple[float, float]

    @property
    def open(self) -> np.ndarray:
        return self.energies > 0

    @property
    def open_orders(self) -> np.ndarray:
        return self.orders[self.open]

    @property
    def open_kappa(self) -> np.ndarray:
        return self.kappa[self.open]

    def channel(self, order: int) -> int:
        """Index of sideband `order` among the open channels."""
        matches = np.flatnonzero(self.open_orders == order)
        if matches.size == 0:
            raise TruncationError("sideband is not an open channel of this truncation",
                                  order=order, n_max=self.n_max)
        return int(matches[0])


@dataclass(frozen=True, eq=False)
class FloquetSMatrix:
    epsilon: float
    l: int
    orders: np.ndarray
    matrix: np.ndarray
    amplitudes: np.ndarray
    unitarity_defect: float
    row_sums: np.ndarray
    column_sums: np.ndarray

    def element(self, out_order: int, in_order: int) -> complex:
        index = {int(order): i for i, order in enumerate(self.orders)}
        if out_order not in index or in_order not in index:
            raise TruncationError("sideband outside the truncation", out_order=out_order,
                                  in_order=in_order, open_orders=[int(o) for o in self.orders])
        return complex(self.matrix[index[out_order], index[in_order]])


def default_n_max(pp: PeriodicPotential) -> int:
    return pp.max_order + _BUFFER


def _hankel(l: int, z: np.ndarray, sign: int) -> np.ndarray:
    """h^{+-}_l(z) = c_l(z) +- i s_l(z), ~ exp(+-i(z - l pi/2))."""
    return riccati_c(l, z) + sign * 1j * riccati_s(l, z)


def _decaying_ratio(l: int, z: np.ndarray, z_edge: float) -> np.ndarray:
    """z k_l(z) / (z_edge k_l(z_edge)) from exponentially scaled Bessel K."""
    z = np.asarray(z, dtype=float)
    scaled = np.sqrt(z / z_edge) * kve(l + 0.5, z) / kve(l + 0.5, z_edge)
    return scaled * np.exp(z_edge - z)


def _coupling(pp: PeriodicPotential, orders: np.ndarray, s: np.ndarray, energies: np.ndarray, l: int) -> np.ndarray:
    """W[node] with u'' = W u: diag(l(l+1)/s^2 - 2 E_mu) + 2 V_{mu - sigma}(s)."""
    size = orders.size
    w = np.zeros((s.size, size, size), dtype=complex)
    components = {}
    for i, mu in enumerate(orders):
        for j, sigma in enumerate(orders):
            n = int(mu - sigma)
            if n not in components:
                components[n] = pp.component(n, s)
            w[:, i, j] = 2.0 * components[n]
    centrifugal = np.divide(float(l * (l + 1)), s ** 2, out=np.zeros_like(s), where=s > 0)
    for i in range(size):
        w[:, i, i] += centrifugal - 2.0 * energies[i]
    return w


def _edge(pp: PeriodicPotential, kappa: np.ndarray, open_mask: np.ndarray, grid: Optional[SpatialGrid]) -> float:
    support = pp.support_radius
    closed = kappa[~open_mask]
    closed_reach = -math.log(_CLOSED_DECAY) / float(np.min(closed)) if closed.size else 0.0
    open_reach = 6.0 / float(np.min(kappa[open_mask]))
    edge = support + max(closed_reach, open_reach, 1.0)
    if grid is None:
        return edge
    quarter = 0.5 * np.pi / float(np.min(kappa[open_mask]))
    if grid.x_max < support + quarter:
        raise GridError("radial grid edge lies inside the drive support", edge=grid.x_max, support_radius=support)
    if grid.x_max < edge:
        logger.warning(f"Grid edge {grid.x_max:g} closer than the closed-channel decay length ({edge:g})")
    return float(grid.x_max)


def _check_quasi_energy(pp: PeriodicPotential, epsilon: float):
    if not 0.0 < epsilon < pp.omega:
        raise ConfigurationError("quasi-energy must lie in (0, omega)", epsilon=epsilon, omega=pp.omega)


@lru_cache(maxsize=256)
def _solve(pp: PeriodicPotential, epsilon: float, l: int, n_max: int, edge_override: Optional[float],
           ppw: float, qr_interval: int):
    orders = np.arange(-n_max, n_max + 1)
    energies = epsilon + orders * pp.omega
    if np.any(np.abs(energies) < 1e-10):
        raise ConfigurationError("a sideband sits exactly at threshold", epsilon=epsilon)
    kappa = np.sqrt(2.0 * np.abs(energies))
    open_mask = energies > 0
    edge = edge_override if edge_override is not None else _edge(pp, kappa, open_mask, None)
    strength = max(float(np.max(np.abs(pp.component(n, np.linspace(0.0, pp.support_radius or 1.0, 2001)))))
                   for n in range(-pp.max_order, pp.max_order + 1))
    # bound over the whole zone 0 < epsilon < omega: one step for every quasi-energy
    k_fast = math.sqrt(2.0 * ((n_max + 1) * pp.omega + (2 * pp.max_order + 1) * strength))
    h = 2.0 * np.pi / (ppw * k_fast)
    if edge_override is not None:
        steps = max(16, int(math.ceil(edge / h)))
        h = edge / steps
    else:
        # nodes land on the support edge
        support = pp.support_radius
        if support > 0:
            h = support / math.ceil(support / h)
        steps = max(16, int(math.ceil(edge / h)))
    s = h * np.arange(steps + 1)
    size = orders.size
    w = _coupling(pp, orders, s, energies, l)
    identity = np.eye(size)
    a = identity - (h * h / 12.0) * w
    a[0] = identity
    inverse = np.linalg.inv(a[1:])

    first = max(1, l)
    u = np.zeros((steps + 1, size, size), dtype=complex)
    for j in range(1, first + 1):
        u[j] = s[j] ** (l + 1) * identity
    f_previous = np.zeros((size, size), dtype=complex) if first == 1 else a[first - 1] @ u[first - 1]
    f_current = a[first] @ u[first]
    # u[j] for j in segment k is in the basis of segment k; transforms[k] maps it to the next one
    segment_of = np.zeros(steps + 1, dtype=int)
    transforms: List[np.ndarray] = []
    segment = 0
    for j in range(first, steps):
        f_next = (12.0 * inverse[j - 1] - 10.0 * identity) @ f_current - f_previous
        f_previous, f_current = f_current, f_next
        u[j + 1] = inverse[j] @ f_current
        segment_of[j + 1] = segment
        if (j + 1 - first) % qr_interval == 0 and j + 1 < steps:
            q, r = np.linalg.qr(f_current)
            r_inverse = np.linalg.inv(r)
            f_current = q
            f_previous = f_previous @ r_inverse
            transforms.append(r_inverse)
            segment += 1
            u[j + 1] = u[j + 1] @ r_inverse
            segment_of[j + 1] = segment
    # bring every segment to the final basis
    cumulative = [identity.astype(complex)] * (segment + 1)
    for k in range(segment - 1, -1, -1):
        cumulative[k] = transforms[k] @ cumulative[k + 1]
    for k in range(segment):
        nodes = segment_of == k
        u[nodes] = u[nodes] @ cumulative[k]

    open_index = np.flatnonzero(open_mask)
    k_max = float(np.max(kappa[open_mask]))
    offset = max(1, int(round(0.5 * np.pi / k_max / h)))
    node_a, node_b = steps - offset, steps
    if s[node_a] <= pp.support_radius:
        raise GridError("matching points fall inside the drive support", edge=edge,
                        support_radius=pp.support_radius)

    def outer(node, sign):
        z = kappa * s[node]
        values = np.zeros(size, dtype=complex)
        values[open_mask] = _hankel(l, z[open_mask], sign)
        if sign > 0:
            values[~open_mask] = _decaying_ratio(l, z[~open_mask], kappa[~open_mask] * s[node_b])
        return values

    system = np.zeros((2 * size, 2 * size), dtype=complex)
    rhs = np.zeros((2 * size, open_index.size), dtype=complex)
    for block, node in enumerate((node_a, node_b)):
        rows = slice(block * size, (block + 1) * size)
        system[rows, :size] = u[node]
        system[rows, size:] = -np.diag(outer(node, +1)) / 2j
        incoming = outer(node, -1)
        for column, channel in enumerate(open_index):
            rhs[block * size + channel, column] = -incoming[channel] / 2j
    solution = np.linalg.solve(system, rhs)
    coefficients, matched = solution[:size], solution[size:]
    u = u @ coefficients
    amplitudes = matched[open_index]
    edge_values = np.abs(u[node_b])
    closed_decay = float(np.max(edge_values[~open_mask], initial=0.0) / np.max(edge_values[open_mask]))
    return orders, energies, kappa, s, u, amplitudes, closed_decay, (float(s[node_a]), float(s[node_b]))


def solve_floquet(pp: PeriodicPotential, epsilon: float, l: Optional[int] = None, n_max: Optional[int] = None,
                  grid: Optional[SpatialGrid] = None) -> FloquetSolution:
    """Regular coupled-channel solutions at quasi-energy epsilon, truncated to |mu| <= n_max."""
    l = pp.l if l is None else l
    if l < 0:
        raise ConfigurationError("angular momentum must be >= 0", l=l)
    _check_quasi_energy(pp, epsilon)
    n_max = default_n_max(pp) if n_max is None else int(n_max)
    if n_max < pp.max_order:
        raise TruncationError("truncation drops drive harmonics", n_max=n_max, max_order=pp.max_order)
    edge = None
    if grid is not None:
        orders = np.arange(-n_max, n_max + 1)
        energies = epsilon + orders * pp.omega
        edge = _edge(pp, np.sqrt(2.0 * np.abs(energies)), energies > 0, grid)
    orders, energies, kappa, s, u, amplitudes, decay, match = _solve(
        pp, float(epsilon), int(l), n_max, edge,
        float(numeric('radial_points_per_wavelength')), int(numeric('qr_interval')))
    if decay > _CLOSED_DECAY:
        logger.warning(f"Closed channels not decayed at the edge: {decay:.2e}")
    logger.debug(f"Floquet eps={epsilon:g} l={l} n_max={n_max}: {s.size} nodes, closed decay {decay:.2e}")
    return FloquetSolution(system=pp, epsilon=float(epsilon), l=int(l), n_max=n_max, orders=orders,
                           energies=energies, kappa=kappa, s=s, u=u, amplitudes=amplitudes,
                           closed_decay=decay, match=match)


def floquet_s_matrix(sol: FloquetSolution, tolerance: Optional[float] = None) -> FloquetSMatrix:
    """S_{mu rho} = sqrt(kappa_mu / kappa_rho) A_{mu rho} over the open sidebands."""
    tolerance = numeric('floquet_unitarity_tolerance') if tolerance is None else tolerance
    kappa = sol.open_kappa
    matrix = sol.amplitudes * np.sqrt(np.outer(kappa, 1.0 / kappa))
    weights = np.abs(matrix) ** 2
    defect = float(np.max(np.abs(matrix.conj().T @ matrix - np.eye(kappa.size))))
    result = FloquetSMatrix(epsilon=sol.epsilon, l=sol.l, orders=sol.open_orders, matrix=matrix,
                            amplitudes=sol.amplitudes, unitarity_defect=defect,
                            row_sums=weights.sum(axis=1), column_sums=weights.sum(axis=0))
    logger.debug(f"Floquet S eps={sol.epsilon:g}: unitarity defect {defect:.2e}")
    if defect > tolerance:
        raise UnitarityError("Floquet S-matrix not unitary, raise n_max or refine the grid",
                             defect=defect, tolerance=tolerance, n_max=sol.n_max, epsilon=sol.epsilon)
    return result


def _s_at(pp: PeriodicPotential, epsilon: float, l: int, n_max: int) -> np.ndarray:
    return floquet_s_matrix(solve_floquet(pp, epsilon, l, n_max)).matrix


def _dense(length: float, k: float) -> int:
    n = max(257, int(math.ceil(64.0 * length * k / np.pi)))
    return n + 1 - (n % 2)


def floquet_onshell_sojourn(sol: FloquetSolution, region: Region) -> np.ndarray:
    """<mu|T(B_r)|rho> = 4 / sqrt(kappa_mu kappa_rho) sum_sigma int chi conj(u_{sigma mu}) u_{sigma rho}."""
    region = as_region(region)
    if region.center != 0.0:
        raise ConfigurationError("radial regions are centred on the origin", center=region.center)
    outer_radius = region.outer_radius
    s = sol.s
    match_end = sol.match[1]
    open_index = np.flatnonzero(sol.open)
    kappa = sol.open_kappa
    total = np.zeros((open_index.size, open_index.size), dtype=complex)
    if outer_radius > 0:
        products = np.einsum('nsm,nsr->nmr', sol.u.conj(), sol.u)
        if region.is_sharp:
            total += CubicSpline(s, products, axis=0).integrate(0.0, min(outer_radius, match_end))
        else:
            total += simpson(products * region.membership(s)[:, None, None], x=s, axis=0)
    if outer_radius > match_end:
        # beyond the edge only the open channels survive, each as a free Riccati pair
        k_fast = float(np.max(kappa))
        x = np.linspace(match_end, outer_radius, _dense(outer_radius - match_end, k_fast))
        chi = region.membership(x)
        exterior = np.zeros((x.size, open_index.size, open_index.size), dtype=complex)
        for sigma, k in enumerate(kappa):
            z = k * x
            plus, minus = _hankel(sol.l, z, +1), _hankel(sol.l, z, -1)
            exterior[:, sigma, :] = (np.outer(plus, sol.amplitudes[sigma]) - np.outer(minus, np.eye(kappa.size)[sigma])) / 2j
        products = np.einsum('nsm,nsr->nmr', exterior.conj(), exterior) * chi[:, None, None]
        total += simpson(products, x=x, axis=0)
    return 4.0 * total / np.sqrt(np.outer(kappa, kappa))


def floquet_eisenbud_wigner(pp: PeriodicPotential, epsilon: float, l: Optional[int] = None,
                            n_max: Optional[int] = None) -> np.ndarray:
    """-i S^dagger dS/d epsilon, step min(1e-4, omega/1000) with Richardson extrapolation."""
    l = pp.l if l is None else l
    n_max = default_n_max(pp) if n_max is None else n_max
    step = min(1e-4, pp.omega / 1000.0)
    _check_quasi_energy(pp, epsilon - step)
    _check_quasi_energy(pp, epsilon + step)

    def difference(h):
        return (_s_at(pp, epsilon + h, l, n_max) - _s_at(pp, epsilon - h, l, n_max)) / (2.0 * h)

    derivative = (4.0 * difference(0.5 * step) - difference(step)) / 3.0
    s = _s_at(pp, epsilon, l, n_max)
    return -1j * s.conj().T @ derivative


def _free_channel_sojourn(sol: FloquetSolution, region: FuzzyProfile) -> np.ndarray:
    return np.array([free_radial_sojourn(sol.l, float(energy), region) for energy in sol.energies[sol.open]])


def floquet_time_delay(pp: PeriodicPotential, epsilon: float, l: Optional[int] = None,
                       reference: str = 'symmetric', channel: int = 0, n_max: Optional[int] = None,
                       r_grid: Optional[Sequence[float]] = None) -> DelayResult:
    """
    Local delay <n|T(B_r)|n> - T_ref(r) over r_grid for incoming sideband n.

    'symmetric' and 'free-flight' converge to the diagonal of -i S^dagger dS/d epsilon;
    'in' grows linearly with slope sum_sigma (1/v_sigma - 1/v_n)|S_{sigma n}|^2,
    reported in extras next to the fitted slope.
    """
    if reference not in REFERENCES:
        raise ConfigurationError(f"unknown reference kind '{reference}'", allowed=REFERENCES)
    l = pp.l if l is None else l
    sol = solve_floquet(pp, epsilon, l, n_max)
    s = floquet_s_matrix(sol)
    n = sol.channel(channel)
    kappa = sol.open_kappa
    weights = np.abs(s.matrix[:, n]) ** 2
    ew = floquet_eisenbud_wigner(pp, epsilon, l, sol.n_max)
    support = pp.support_radius
    if r_grid is None:
        start = max(2.0 * support, sol.match[1] + 1.0)
        r_grid = np.linspace(start, 10.0 * start, 40)
    r_grid = np.asarray(r_grid, dtype=float)
    regions = [FuzzyProfile.sharp(float(r)) for r in r_grid]
    interaction = np.array([floquet_onshell_sojourn(sol, region)[n, n].real for region in regions])
    if reference == 'free-flight':
        slope = free_flight_slope(lambda region: floquet_onshell_sojourn(sol, region)[n, n].real,
                                  regions[0], oscillation_k=kappa)
        references = r_grid * slope
    else:
        free_tables = np.array([_free_channel_sojourn(sol, region) for region in regions])
        references = free_tables[:, n]
        if reference == 'symmetric':
            references = 0.5 * (references + free_tables @ weights)
    tau = interaction - references
    speeds = kappa
    predicted = float(np.sum(weights * (1.0 / speeds - 1.0 / speeds[n])))
    extras = {'tau_ew': float(ew[n, n].real), 'predicted_slope': predicted}
    if reference == 'in':
        value, slope_fit, _ = oscillation_fit(r_grid, tau, kappa, linear=True)
        extras['slope'] = slope_fit
    else:
        value, amplitude, _ = oscillation_fit(r_grid, tau, kappa)
        extras['oscillation_amplitude'] = amplitude
    residual = float(abs(tau[-1] - value))
    return DelayResult(value=value, convention=reference, condition='none',
                       table={'r': r_grid, 'T_int': interaction, 'T_ref': references, 'tau_local': tau},
                       residual=residual, extras=extras)


def split_energy(pp: PeriodicPotential, energy: float) -> Tuple[int, float]:
    """Incoming sideband m and quasi-energy epsilon with E = m omega + epsilon."""
    m = int(math.floor(energy / pp.omega))
    return m, float(energy - m * pp.omega)


def floquet_conditional_delay(pp: PeriodicPotential, target: Union[float, EnergyProfile], sideband: int,
                              l: Optional[int] = None, n_max: Optional[int] = None) -> DelayResult:
    """
    d arg S_{m+n, m} / d epsilon for the incoming energy E = m omega + epsilon.

    A profile must stay inside one interval [m omega, (m+1) omega); its
    average is weighted with |S_{m+n, m}|^2 |phi|^2.
    """
    l = pp.l if l is None else l
    n_max = default_n_max(pp) if n_max is None else n_max
    if isinstance(target, EnergyProfile):
        energies = target.energies
    else:
        energies = np.array([float(target)])
    splits = [split_energy(pp, float(energy)) for energy in energies]
    incoming = {m for m, _ in splits}
    if len(incoming) != 1:
        raise ConfigurationError("profile spans several sideband intervals", omega=pp.omega)
    m = incoming.pop()
    out = m + sideband
    if abs(out) > n_max or abs(m) > n_max:
        raise TruncationError("sideband outside the truncation", sideband=sideband, incoming=m, n_max=n_max)
    if out < 0:
        raise TruncationError("sideband is a closed channel", sideband=sideband, incoming=m)
    rows = []
    step = min(1e-4, pp.omega / 1000.0)
    for _, epsilon in splits:
        s = _s_at(pp, epsilon, l, n_max)
        index = {int(order): i for i, order in enumerate(range(0, n_max + 1))}
        element = s[index[out], index[m]]
        derivative = phase_derivative(lambda e: _s_at(pp, e, l, n_max)[index[out], index[m]], epsilon, step)
        probability = abs(element) ** 2
        rows.append((probability, probability * derivative.value, probability * derivative.error))
    rows = np.array(rows)
    if isinstance(target, EnergyProfile):
        probability = float(target.average(rows[:, 0]))
        numerator, error = float(target.average(rows[:, 1])), float(target.average(rows[:, 2]))
    else:
        probability, numerator, error = (float(x) for x in rows[0])
    threshold = numeric('condition_threshold')
    if probability < threshold:
        raise ConditionProbabilityError("condition almost never satisfied", sideband=sideband,
                                        probability=probability, threshold=threshold)
    return DelayResult(value=numerator / probability, convention='eisenbud-wigner', condition=f'sideband {sideband:+d}',
                       error=error / probability, probability=probability)


@dataclass(frozen=True, eq=False)
class TruncationRow:
    n_max: int
    unitarity_defect: float
    change: float
    closed_decay: float
    diagonal: Dict[int, complex] = field(default_factory=dict)


def truncation_study(pp: PeriodicPotential, epsilon: float, n_values: Sequence[int],
                     l: Optional[int] = None, watch: int = 1) -> List[TruncationRow]:
    """
    Unitarity defect and element drift of the watched block |mu|, |rho| <= watch over truncations.

    `change` compares each truncation with the largest one.
    """
    n_values = sorted(int(n) for n in n_values)
    solutions = [solve_floquet(pp, epsilon, l, n) for n in n_values]
    matrices = [floquet_s_matrix(sol, tolerance=np.inf) for sol in solutions]
    watch = min(watch, n_values[0])
    reference = matrices[-1].matrix[:watch + 1, :watch + 1]
    rows = []
    for n, sol, s in zip(n_values, solutions, matrices):
        block = s.matrix[:watch + 1, :watch + 1]
        rows.append(TruncationRow(n_max=n, unitarity_defect=s.unitarity_defect,
                                  change=float(np.max(np.abs(block - reference))),
                                  closed_decay=sol.closed_decay,
                                  diagonal={int(o): complex(s.matrix[i, i]) for i, o in enumerate(s.orders)}))
        logger.debug(f"n_max={n}: defect {s.unitarity_defect:.2e}, change {rows[-1].change:.2e}")
    return rows
