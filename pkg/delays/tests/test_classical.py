import math

import numpy as np
from django.test import SimpleTestCase

from delays.classical_service import (CONVENTIONS, arrival_times, classical_probabilistic_sojourn,
                                      classical_time_delay, closed_form_delay, integrate_trajectory,
                                      mixed_origin_limits, translated_time_delay)
from delays.exceptions import ArrivalError, ConfigurationError
from delays.potentials import double_barrier, free, gaussian_bump, radial_square_well, square
from delays.profiles import FuzzyProfile

from . import oracles

R_GRID = np.linspace(7.0, 19.0, 13)


class TrajectoryTests(SimpleTestCase):

    def test_free_particle_moves_uniformly(self):
        tr = integrate_trajectory(free(), 0.5, -20.0)
        self.assertEqual(tr.outcome, 'transmitted')
        self.assertAlmostEqual(tr.incoming.p, 1.0, places=10)
        self.assertAlmostEqual(tr.incoming.q, -20.0, places=8)
        self.assertAlmostEqual(closed_form_delay(tr), 0.0, places=8)

    def test_barrier_above_and_below_the_top(self):
        self.assertEqual(integrate_trajectory(square(1.5, 1.0), 2.0, -20.0).outcome, 'transmitted')
        reflected = integrate_trajectory(square(1.5, 1.0), 1.0, -20.0)
        self.assertEqual(reflected.outcome, 'reflected')
        self.assertAlmostEqual(abs(reflected.outgoing.p), abs(reflected.incoming.p), places=8)

    def test_start_inside_support_rejected(self):
        with self.assertRaises(ConfigurationError):
            integrate_trajectory(square(1.0, 2.0), 1.0, 0.0)

    def test_radial_potential_rejected(self):
        with self.assertRaises(ConfigurationError):
            integrate_trajectory(radial_square_well(1.0, 1.0), 1.0, 5.0)

    def test_short_time_span_means_capture(self):
        tr = integrate_trajectory(gaussian_bump(0.5, 1.0), 2.0, -20.0, t_span=(0.0, 8.0))
        self.assertTrue(tr.captured)
        self.assertEqual(tr.outcome, 'captured')
        self.assertTrue(math.isinf(closed_form_delay(tr)))
        report = classical_time_delay(tr, 'symmetric', R_GRID)
        self.assertTrue(report.captured)
        self.assertTrue(np.all(np.isinf(report.tables['sojourn'])))
        with self.assertRaises(ArrivalError):
            arrival_times(tr, 5.0)

    def test_smooth_barrier_conserves_energy(self):
        tr = integrate_trajectory(gaussian_bump(0.5, 1.0), 2.0, -20.0)
        self.assertLess(tr.energy_drift, 1e-4)
        self.assertAlmostEqual(tr.outgoing.p, tr.incoming.p, places=10)


class ClosedFormDelayTests(SimpleTestCase):

    def test_square_well(self):
        tr = integrate_trajectory(square(-1.5, 1.0), 0.5, -20.0)
        self.assertAlmostEqual(closed_form_delay(tr), -0.5, places=8)

    def test_square_barrier_transmitted(self):
        tr = integrate_trajectory(square(1.5, 1.0), 2.0, -20.0)
        self.assertAlmostEqual(closed_form_delay(tr), 0.5, places=8)

    def test_square_barrier_reflected(self):
        tr = integrate_trajectory(square(2.0, 2.0), 1.0, -20.0)
        self.assertAlmostEqual(closed_form_delay(tr), oracles.classical_square_delay(2.0, 2.0, 1.0), places=8)

    def test_gaussian_bump_against_quadrature(self):
        p = gaussian_bump(0.5, 1.0)
        tr = integrate_trajectory(p, 2.0, -20.0)
        expected = oracles.classical_smooth_delay(p, -6.0, 6.0, 2.0)
        self.assertAlmostEqual(closed_form_delay(tr), expected, delta=1e-3 * abs(expected))


class ConventionTests(SimpleTestCase):

    CASES = (
        (square(-1.5, 1.0), (0.5, 1.0, 2.0)),
        (square(1.5, 1.0), (1.0, 2.0, 3.0)),
        (double_barrier(1.0, 0.5, 1.0), (0.5, 1.5, 2.5)),
        (gaussian_bump(0.5, 1.0), (0.3, 1.0, 2.0)),
        (free(), (0.5, 1.0, 2.0)),
    )

    def test_every_convention_reaches_the_closed_form(self):
        for p, energies in self.CASES:
            for energy in energies:
                with self.subTest(potential=p.name, energy=energy):
                    tr = integrate_trajectory(p, energy, -20.0)
                    report = classical_time_delay(tr, 'symmetric', R_GRID)
                    self.assertLess(report.residual, 1e-4)
                    for convention in CONVENTIONS:
                        value = classical_time_delay(tr, convention, R_GRID).value
                        self.assertAlmostEqual(value, report.tau_closed_form, delta=1e-4)

    def test_sojourn_grows_like_free_flight(self):
        tr = integrate_trajectory(square(-1.5, 1.0), 0.5, -20.0)
        report = classical_time_delay(tr, 'free-flight', R_GRID)
        self.assertAlmostEqual(report.free_flight_slope, 2.0 / tr.v, places=8)
        np.testing.assert_allclose(report.tables['sojourn'], 2.0 * R_GRID / tr.v - 0.5, atol=1e-8)

    def test_well_sojourn_at_r_10(self):
        tr = integrate_trajectory(square(-1.5, 1.0), 0.5, -20.0)
        t_minus, t_plus = arrival_times(tr, 10.0)
        self.assertAlmostEqual(t_plus - t_minus, 19.5, places=8)
        self.assertAlmostEqual(classical_probabilistic_sojourn(tr, 10.0), 19.5, delta=2.0 * tr.dt)

    def test_unknown_convention(self):
        tr = integrate_trajectory(free(), 0.5, -20.0)
        with self.assertRaises(ConfigurationError):
            classical_time_delay(tr, 'sideways', R_GRID)

    def test_probabilistic_sojourn_in_fuzzy_region(self):
        tr = integrate_trajectory(free(), 0.5, -20.0)
        region = FuzzyProfile(r=3.0, rho=2.0, shape='cos2')
        # free flight: 2 f(r, rho) / v
        self.assertAlmostEqual(classical_probabilistic_sojourn(tr, region), 2.0 * region.free_flight_normalizer(),
                               delta=1e-3)


class OriginTests(SimpleTestCase):

    def test_translation_leaves_transmission_alone(self):
        tr = integrate_trajectory(square(1.5, 1.0), 2.0, -20.0)
        for c in (-10.0, 10.0):
            self.assertAlmostEqual(translated_time_delay(tr, c), closed_form_delay(tr), places=8)

    def test_translation_shifts_reflection(self):
        tr = integrate_trajectory(square(2.0, 2.0), 1.0, -20.0)
        c = 3.0
        self.assertAlmostEqual(translated_time_delay(tr, c) - closed_form_delay(tr), -2.0 * c / tr.v, places=8)

    def test_mixed_origin_limits(self):
        tr = integrate_trajectory(square(1.5, 1.0), 2.0, -20.0)
        limits = mixed_origin_limits(tr, c=0.5, c0=0.0, r_grid=R_GRID)
        self.assertAlmostEqual(limits.in_minus, 0.5 / tr.v, places=10)
        self.assertAlmostEqual(limits.out_plus, -0.5 / tr.v, places=10)
        self.assertAlmostEqual(limits.in_plus, closed_form_delay(tr, 0.5) + 0.5 / tr.v, places=8)
        np.testing.assert_allclose(limits.tables['in-'], limits.in_minus, atol=1e-8)
        np.testing.assert_allclose(limits.tables['out+'], limits.out_plus, atol=1e-8)

    def test_same_origin_recovers_the_delay(self):
        tr = integrate_trajectory(square(-1.5, 1.0), 0.5, -20.0)
        limits = mixed_origin_limits(tr, c=0.0, c0=0.0)
        for value in (limits.in_plus, limits.out_minus):
            self.assertAlmostEqual(value, closed_form_delay(tr), places=10)
        self.assertAlmostEqual(limits.in_minus, 0.0)
        self.assertAlmostEqual(limits.out_plus, 0.0)
