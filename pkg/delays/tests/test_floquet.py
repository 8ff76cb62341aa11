import numpy as np
from django.test import SimpleTestCase

from delays.conf import overridden
from delays.exceptions import ConditionProbabilityError, ConfigurationError, TruncationError
from delays.floquet_service import (default_n_max, floquet_conditional_delay, floquet_eisenbud_wigner,
                                    floquet_onshell_sojourn, floquet_s_matrix, floquet_time_delay, solve_floquet,
                                    split_energy, truncation_study)
from delays.potentials import PeriodicPotential, Potential, driven
from delays.profiles import EnergyProfile
from delays.stationary_service import radial_phase_derivative, solve_radial


def bump(name, height, radius=3.0):
    """height * (1 - (s/R)^2)^2 inside R, smooth enough for Numerov."""
    def profile(s):
        return height * (1.0 - (np.asarray(s) / radius) ** 2) ** 2

    return Potential(name=name, geometry='radial', profile=profile, support=(0.0, radius),
                     key=(name, height, radius))


BASE = bump('smooth well', -2.0)
SHAPE = bump('drive shape', 1.0)
STATIC = PeriodicPotential(BASE, 1.0)
DRIVEN = driven(BASE, omega=1.0, amplitude=0.3, shape=SHAPE)


class StaticLimitTests(SimpleTestCase):

    def test_diagonal_phases_are_the_static_shifts(self):
        s = floquet_s_matrix(solve_floquet(STATIC, 0.5))
        np.testing.assert_array_equal(s.orders, np.arange(0, default_n_max(STATIC) + 1))
        for i, order in enumerate(s.orders):
            delta = solve_radial(BASE, 0.5 + order).phase_shift
            self.assertLess(abs(s.matrix[i, i] - np.exp(2j * delta)), 1e-8, msg=f"sideband {order}")
        off_diagonal = s.matrix - np.diag(np.diag(s.matrix))
        self.assertLess(np.max(np.abs(off_diagonal)), 1e-10)

    def test_eisenbud_wigner_diagonal(self):
        ew = floquet_eisenbud_wigner(STATIC, 0.5)
        expected = radial_phase_derivative(BASE, 0.5).value
        self.assertAlmostEqual(ew[0, 0].real, expected, delta=1e-6)

    def test_step_is_shared_across_the_zone(self):
        low, high = solve_floquet(STATIC, 0.3), solve_floquet(STATIC, 0.7)
        self.assertEqual(low.s[1], high.s[1])

    def test_conditional_delay_of_the_elastic_sideband(self):
        result = floquet_conditional_delay(STATIC, 0.5, 0)
        self.assertAlmostEqual(result.value, radial_phase_derivative(BASE, 0.5).value, delta=1e-4)
        self.assertAlmostEqual(result.probability, 1.0, places=6)

    def test_inelastic_probability_is_the_sideband_weight(self):
        result = floquet_conditional_delay(DRIVEN, 0.5, 1)
        s = floquet_s_matrix(solve_floquet(DRIVEN, 0.5))
        self.assertAlmostEqual(result.probability, abs(s.element(1, 0)) ** 2, places=10)
        with overridden(condition_threshold=2.0):
            with self.assertRaises(ConditionProbabilityError):
                floquet_conditional_delay(DRIVEN, 0.5, 1)


class DrivenTests(SimpleTestCase):

    def test_unitarity(self):
        s = floquet_s_matrix(solve_floquet(DRIVEN, 0.5))
        self.assertLess(s.unitarity_defect, 1e-6)
        np.testing.assert_allclose(s.row_sums, 1.0, atol=1e-6)
        np.testing.assert_allclose(s.column_sums, 1.0, atol=1e-6)
        self.assertGreater(abs(s.element(1, 0)), 1e-3)

    def test_symmetric_reference_reaches_eisenbud_wigner(self):
        result = floquet_time_delay(DRIVEN, 0.5, reference='symmetric')
        self.assertAlmostEqual(result.value, result.extras['tau_ew'], delta=1e-3)

    def test_incoming_reference_grows_linearly(self):
        result = floquet_time_delay(DRIVEN, 0.5, reference='in')
        predicted = result.extras['predicted_slope']
        self.assertAlmostEqual(result.extras['slope'], predicted, delta=max(0.02 * abs(predicted), 1e-6))

    def test_onshell_sojourn_is_hermitian(self):
        matrix = floquet_onshell_sojourn(solve_floquet(DRIVEN, 0.5), 30.0)
        np.testing.assert_allclose(matrix, matrix.conj().T, atol=1e-8)

    def test_truncation_converges(self):
        rows = truncation_study(DRIVEN, 0.5, [2, 3, 4, 5, 6])
        self.assertEqual(rows[-1].change, 0.0)
        self.assertLess(rows[-2].change, rows[0].change)
        for row in rows:
            self.assertLess(row.unitarity_defect, 1e-4)


class FloquetInputTests(SimpleTestCase):

    def test_quasi_energy_inside_the_zone(self):
        with self.assertRaises(ConfigurationError):
            solve_floquet(DRIVEN, 1.2)
        with self.assertRaises(ConfigurationError):
            solve_floquet(DRIVEN, 0.0)

    def test_truncation_keeps_drive_harmonics(self):
        with self.assertRaises(TruncationError):
            solve_floquet(DRIVEN, 0.5, n_max=0)

    def test_split_energy(self):
        m, epsilon = split_energy(DRIVEN, 2.3)
        self.assertEqual(m, 2)
        self.assertAlmostEqual(epsilon, 0.3)

    def test_closed_outgoing_sideband(self):
        with self.assertRaises(TruncationError):
            floquet_conditional_delay(DRIVEN, 0.5, -1)

    def test_profile_inside_one_interval(self):
        with self.assertRaises(ConfigurationError):
            floquet_conditional_delay(DRIVEN, EnergyProfile.gaussian(1.0, 0.05), 0)

    def test_unknown_reference(self):
        with self.assertRaises(ConfigurationError):
            floquet_time_delay(DRIVEN, 0.5, reference='out')
