import math
import warnings

import numpy as np
from django.test import SimpleTestCase

from delays.conf import overridden
from delays.exceptions import ConfigurationError, GridError, PhaseJumpError, UnitarityError
from delays.potentials import (Potential, SpatialGrid, double_barrier, free, gaussian_bump, radial_hard_core,
                               radial_square_well, square)
from delays.stationary_service import (PhaseShiftTable, phase_derivative, phase_sweep, phase_table,
                                       radial_phase_derivative, s_matrix, solve_full_line, solve_radial)

from . import oracles


def smooth_radial_well(depth=2.0, radius=3.0, l=0):
    """-depth (1 - (s/R)^2)^2 inside R: continuous with its first derivative."""
    def profile(s):
        return -depth * (1.0 - (np.asarray(s) / radius) ** 2) ** 2

    return Potential(name='smooth well', geometry='radial', profile=profile, support=(0.0, radius), l=l,
                     key=('smooth-well', depth, radius, l))


class SMatrixTests(SimpleTestCase):

    def test_square_barrier_against_closed_form(self):
        for energy in np.linspace(0.1, 3.0, 200):
            s = s_matrix(square(1.0, 1.0), float(energy))
            expected = oracles.square_transmission(1.0, 1.0, float(energy))
            self.assertLess(abs(s.T - expected), 1e-6, msg=f"E={energy}")
            self.assertLess(s.unitarity_defect, 1e-8)

    def test_square_well_against_closed_form(self):
        for energy in np.linspace(0.1, 3.0, 200):
            s = s_matrix(square(-1.0, 1.0), float(energy))
            expected = oracles.square_transmission(-1.0, 1.0, float(energy))
            self.assertLess(abs(s.T - expected), 1e-6, msg=f"E={energy}")

    def test_transmission_probabilities(self):
        self.assertAlmostEqual(s_matrix(square(1.0, 1.0), 0.5).transmission,
                               oracles.square_transmission_probability(1.0, 1.0, 0.5), places=10)
        self.assertAlmostEqual(s_matrix(square(1.0, 1.0), 0.5).transmission, 0.420, places=3)
        self.assertAlmostEqual(s_matrix(square(-1.0, 1.0), 0.5).transmission, 0.755, places=3)

    def test_unitarity_and_reciprocity(self):
        for p in (square(1.0, 1.0), double_barrier(5.0, 0.6, 1.5), square(2.0, 0.7, left=0.3)):
            s = s_matrix(p, 0.9)
            self.assertAlmostEqual(abs(s.L), abs(s.R), places=8)
            self.assertAlmostEqual(s.transmission + s.reflection, 1.0, places=8)
            self.assertLess(abs(np.conj(s.T) * s.L + np.conj(s.R) * s.T), 1e-8)
            self.assertLess(s.reciprocity_defect, 1e-9)

    def test_numerov_route_for_smooth_potentials(self):
        s = s_matrix(gaussian_bump(0.5, 1.0), 0.8)
        self.assertLess(s.unitarity_defect, 1e-6)
        self.assertLess(s.reciprocity_defect, 1e-6)
        self.assertEqual(solve_full_line(gaussian_bump(0.5, 1.0), 0.8).method, 'numerov')

    def test_free_potential_is_transparent(self):
        s = s_matrix(free(), 1.0)
        self.assertEqual(s.T, 1.0)
        self.assertEqual(s.L, 0.0)

    def test_tight_tolerance_raises(self):
        with self.assertRaises(UnitarityError):
            s_matrix(gaussian_bump(0.5, 1.0), 0.8, tolerance=0.0)

    def test_energy_and_geometry_checks(self):
        with self.assertRaises(ConfigurationError):
            s_matrix(square(1.0, 1.0), 0.0)
        with self.assertRaises(ConfigurationError):
            s_matrix(radial_square_well(1.0, 1.0), 1.0)

    def test_phase_sweep_is_unwrapped(self):
        sweep = phase_sweep(double_barrier(5.0, 0.6, 1.5), np.linspace(0.5, 2.0, 301))
        self.assertLess(np.max(np.abs(np.diff(sweep['alpha_T']))), np.pi)
        self.assertLess(np.max(sweep['defect']), 1e-8)


class StationaryStateTests(SimpleTestCase):

    def test_exterior_amplitudes(self):
        p = square(1.0, 1.0)
        state = solve_full_line(p, 0.7)
        s = s_matrix(p, 0.7)
        np.testing.assert_allclose(state.left, (1.0, s.L), atol=1e-12)
        np.testing.assert_allclose(state.right, (s.T, 0.0), atol=1e-12)
        x = np.array([-3.0, 3.0])
        k = math.sqrt(1.4)
        expected = [np.exp(-3j * k) + s.L * np.exp(3j * k), s.T * np.exp(3j * k)]
        np.testing.assert_allclose(state(x), expected, atol=1e-12)

    def test_state_solves_the_equation_inside(self):
        p = square(1.0, 1.0)
        state = solve_full_line(p, 0.7)
        self.assertLess(state.residual(p), 1e-2)

    def test_continuity_at_support_edges(self):
        p = square(2.0, 1.0)
        state = solve_full_line(p, 0.5, direction='right')
        for edge in p.support:
            inside = state(np.array([edge]))[0]
            outside = state.exterior(np.array([edge]))[0]
            self.assertAlmostEqual(abs(inside - outside), 0.0, places=8)

    def test_grid_must_cover_support(self):
        with self.assertRaises(GridError):
            solve_full_line(square(1.0, 4.0), 0.5, grid=SpatialGrid(-1.0, 1.0, 11))

    def test_unknown_direction(self):
        with self.assertRaises(ConfigurationError):
            solve_full_line(square(1.0, 1.0), 0.5, direction='up')


class RadialTests(SimpleTestCase):

    def test_hard_core_s_wave(self):
        state = solve_radial(radial_hard_core(1.0), 0.5)
        self.assertAlmostEqual(state.phase_shift, -1.0, places=10)

    def test_hard_core_p_wave(self):
        delta = solve_radial(radial_hard_core(1.0, l=1), 0.5).phase_shift
        self.assertLess(oracles.phase_difference(delta, oracles.hard_core_phase_shift(1.0, 0.5, l=1)), 1e-6)

    def test_square_well_s_wave(self):
        for energy in (0.2, 0.5, 1.3, 4.0):
            delta = solve_radial(radial_square_well(1.0, 2.0), energy).phase_shift
            expected = oracles.radial_well_phase_shift(1.0, 2.0, energy)
            self.assertLess(oracles.phase_difference(delta, expected), 1e-9)

    def test_square_well_higher_partial_waves(self):
        for l in (1, 2):
            delta = solve_radial(radial_square_well(1.0, 2.0, l=l), 0.8).phase_shift
            expected = oracles.radial_well_phase_shift_l(1.0, 2.0, 0.8, l)
            # Numerov steps across the well edge
            self.assertLess(oracles.phase_difference(delta, expected), 2e-3)

    def test_free_radial_state(self):
        state = solve_radial(free('radial', 2), 1.0)
        self.assertEqual(state.phase_shift, 0.0)

    def test_phase_shift_is_folded(self):
        delta = solve_radial(radial_square_well(5.0, 2.0), 0.3).phase_shift
        self.assertGreater(delta, -0.5 * np.pi)
        self.assertLessEqual(delta, 0.5 * np.pi)

    def test_phase_shift_table_continuity(self):
        energies = np.linspace(0.1, 20.0, 400)
        table = PhaseShiftTable.sweep(radial_square_well(3.0, 2.0), energies)
        self.assertLess(np.max(np.abs(np.diff(table.deltas))), 0.5 * np.pi)
        self.assertLess(abs(table.deltas[-1]), 0.5 * np.pi)

    def test_radial_grid_edge_inside_support(self):
        with self.assertRaises(GridError):
            solve_radial(radial_square_well(1.0, 2.0), 0.5, grid=SpatialGrid(0.0, 1.5, 100))

    def test_smooth_well_converges_with_resolution(self):
        coarse = solve_radial(smooth_radial_well(), 1.0).phase_shift
        with overridden(radial_points_per_wavelength=1600):
            fine = solve_radial(smooth_radial_well(), 1.0).phase_shift
        self.assertLess(oracles.phase_difference(coarse, fine), 1e-7)

    def test_numerov_start_at_the_origin_is_warning_free(self):
        with warnings.catch_warnings():
            warnings.simplefilter('error', RuntimeWarning)
            for l in (0, 1):
                state = solve_radial(smooth_radial_well(depth=1.7, l=l), 0.61)
                self.assertEqual(state.method, 'numerov')
                self.assertTrue(np.all(np.isfinite(state.pieces[0].values)))


class PhaseDerivativeTests(SimpleTestCase):

    def test_hard_core_wigner_delay(self):
        derivative = radial_phase_derivative(radial_hard_core(1.0), 0.5)
        self.assertAlmostEqual(derivative.value, -2.0, places=6)
        self.assertLess(derivative.error, 1e-6)

    def test_square_barrier_transmission_phase(self):
        table = phase_table(square(1.0, 1.0), 0.5)
        expected = oracles.square_transmission_phase_derivative(1.0, 1.0, 0.5)
        self.assertAlmostEqual(table.d_alpha_T.value, expected, delta=1e-6)

    def test_symmetric_potential_reflection_phases_agree(self):
        table = phase_table(square(1.0, 1.0), 0.8)
        self.assertAlmostEqual(table.d_alpha_L.value, table.d_alpha_R.value, places=6)

    def test_analytic_amplitude(self):
        derivative = phase_derivative(lambda e: np.exp(1j * e ** 2), 1.5)
        self.assertAlmostEqual(derivative.value, 3.0, places=8)

    def test_phase_jump_detected(self):
        with self.assertRaises(PhaseJumpError):
            phase_derivative(lambda e: np.exp(1j * 1e5 * e), 1.0, step=1e-4)

    def test_stencil_must_stay_at_positive_energy(self):
        with self.assertRaises(ConfigurationError):
            phase_derivative(lambda e: 1.0, 1e-5, step=1e-4)

    def test_numerics_override_changes_step(self):
        with overridden(phase_step=1e-3) as numerics:
            self.assertEqual(numerics['phase_step'], 1e-3)
            derivative = radial_phase_derivative(radial_hard_core(1.0), 0.5)
        self.assertEqual(derivative.step, 1e-3)
        self.assertAlmostEqual(derivative.value, -2.0, places=5)
