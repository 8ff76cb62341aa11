import math

import numpy as np
from django.test import SimpleTestCase
from scipy.integrate import quad

from delays.exceptions import ConfigurationError, ProfileError
from delays.profiles import SHAPES, EnergyProfile, FuzzyProfile, as_region


class FuzzyProfileTests(SimpleTestCase):

    def test_sharp_ball(self):
        region = FuzzyProfile.sharp(2.0)
        self.assertTrue(region.is_sharp)
        np.testing.assert_array_equal(region.membership([-2.0, 0.0, 2.0, 2.01]), [1.0, 1.0, 1.0, 0.0])
        self.assertEqual(region.free_flight_normalizer(), 2.0)
        self.assertEqual(region.outer_radius, 2.0)
        self.assertTrue(math.isinf(region.interference_bound(1.0)))

    def test_bare_radius_is_a_sharp_ball(self):
        self.assertEqual(as_region(3.0), FuzzyProfile.sharp(3.0))

    def test_fuzzy_membership_edges(self):
        region = FuzzyProfile(r=1.0, rho=2.0, shape='cos2', center=1.0)
        values = region.membership([1.0, 2.0, 3.0, 4.0, 5.0])
        np.testing.assert_allclose(values, [1.0, 1.0, 0.5, 0.0, 0.0], atol=1e-15)
        self.assertEqual(region.outer_radius, 3.0)

    def test_normalizer_matches_quadrature(self):
        for shape in ('cos2', 'quadratic'):
            region = FuzzyProfile(r=2.0, rho=3.0, shape=shape)
            half, _ = quad(lambda x: float(region.membership(x)), 0.0, region.outer_radius, points=[2.0])
            self.assertAlmostEqual(region.free_flight_normalizer(), half, places=8)

    def test_shape_integrals(self):
        for shape in SHAPES.values():
            if shape.name == 'sharp':
                continue
            value, _ = quad(lambda u: float(shape(u)), 0.0, 1.0)
            self.assertAlmostEqual(shape.integral, value, places=10)
            self.assertAlmostEqual(float(shape(0.0)), 1.0)

    def test_interference_bound_shrinks_with_rho(self):
        narrow = FuzzyProfile(r=5.0, rho=1.0).interference_bound(0.5)
        wide = FuzzyProfile(r=5.0, rho=4.0).interference_bound(0.5)
        self.assertAlmostEqual(narrow / wide, 4.0)

    def test_invalid_regions(self):
        with self.assertRaises(ConfigurationError):
            FuzzyProfile(r=-1.0)
        with self.assertRaises(ConfigurationError):
            FuzzyProfile(r=1.0, rho=-0.5)
        with self.assertRaises(ConfigurationError):
            FuzzyProfile(r=1.0, rho=1.0, shape='triangle')

    def test_scaled_and_shifted(self):
        region = FuzzyProfile(r=1.0, rho=0.5, shape='quadratic')
        self.assertEqual(region.scaled(4.0), FuzzyProfile(r=4.0, rho=0.5, shape='quadratic'))
        self.assertEqual(region.scaled(4.0, 2.0).rho, 2.0)
        self.assertEqual(region.shifted(3.0).center, 3.0)


class EnergyProfileTests(SimpleTestCase):

    def test_gaussian_is_normalised(self):
        profile = EnergyProfile.gaussian(1.0, 0.05)
        self.assertAlmostEqual(profile.norm, 1.0, places=10)
        self.assertAlmostEqual(profile.mean_energy, 1.0, places=6)

    def test_momentum_gaussian(self):
        profile = EnergyProfile.gaussian_momentum(2.0, 0.05)
        self.assertAlmostEqual(profile.norm, 1.0, places=10)
        # <1/v> = <1/k> ~ (1 + sigma^2 / k0^2) / k0
        self.assertAlmostEqual(profile.mean_inverse_speed, 0.5 * (1.0 + 0.05 ** 2 / 4.0), places=5)

    def test_profile_below_e_min_rejected(self):
        with self.assertRaises(ProfileError):
            EnergyProfile.gaussian(0.1, 0.05, e_min=0.05)
        with self.assertRaises(ProfileError):
            EnergyProfile.gaussian_momentum(0.5, 0.1)
        with self.assertRaises(ProfileError):
            EnergyProfile.gaussian(1.0, 0.1, e_min=0.0)

    def test_unnormalised_samples_rejected(self):
        energies = np.linspace(1.0, 2.0, 11)
        with self.assertRaises(ProfileError):
            EnergyProfile(energies, np.full(11, 2.0))
        profile = EnergyProfile.from_samples(energies, np.ones(11))
        self.assertAlmostEqual(profile.norm, 1.0, places=12)

    def test_average_of_constant(self):
        profile = EnergyProfile.gaussian(0.8, 0.02)
        self.assertAlmostEqual(profile.average(np.full(profile.energies.size, 3.0)), 3.0, places=10)

    def test_resample_stays_normalised(self):
        profile = EnergyProfile.gaussian(1.0, 0.05)
        finer = profile.resample(np.linspace(0.8, 1.2, 801))
        self.assertAlmostEqual(finer.norm, 1.0, places=12)
        with self.assertRaises(ProfileError):
            profile.resample(np.linspace(0.5, 1.2, 11))
