import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from delays.exceptions import ConfigurationError, GridError
from delays.potentials import (PeriodicPotential, Harmonic, SpatialGrid, double_barrier, driven, eval_potential,
                               free, gaussian_bump, load_tabulated, piecewise, radial_hard_core,
                               radial_square_well, square, speed, tabulated, wavenumber)
from delays.profiles import FuzzyProfile


class UnitsTests(SimpleTestCase):

    def test_wavenumber_and_speed_in_natural_units(self):
        self.assertAlmostEqual(float(wavenumber(0.5)), 1.0)
        self.assertAlmostEqual(float(speed(2.0)), 2.0)


class SpatialGridTests(SimpleTestCase):

    def test_periodic_grid_excludes_right_end(self):
        grid = SpatialGrid.periodic(100.0, 1024)
        self.assertEqual(grid.points.size, 1024)
        self.assertAlmostEqual(grid.dx, 200.0 / 1024)
        self.assertLess(grid.points[-1], 100.0)

    def test_degenerate_grid_rejected(self):
        with self.assertRaises(GridError):
            SpatialGrid(1.0, 1.0, 10)
        with self.assertRaises(GridError):
            SpatialGrid(0.0, 1.0, 2)


class StaticPotentialTests(SimpleTestCase):

    def test_square_barrier_is_centred(self):
        p = square(1.5, 1.0)
        self.assertEqual(p.support, (-0.5, 0.5))
        np.testing.assert_allclose(eval_potential(p, np.array([-1.0, 0.0, 0.49, 0.6])), [0.0, 1.5, 1.5, 0.0])
        self.assertTrue(p.is_piecewise)
        self.assertEqual(p.name, 'square barrier')
        self.assertEqual(square(-1.0, 1.0).name, 'square well')

    def test_double_barrier_segments(self):
        p = double_barrier(5.0, 0.6, 1.5)
        self.assertEqual(len(p.segments), 2)
        self.assertAlmostEqual(p.support[0], -1.35)
        self.assertAlmostEqual(p.support[1], 1.35)
        self.assertEqual(float(p(0.0)), 0.0)
        self.assertEqual(float(p(1.0)), 5.0)

    def test_overlapping_segments_rejected(self):
        with self.assertRaises(ConfigurationError):
            piecewise([(0.0, 2.0, 1.0), (1.0, 3.0, 1.0)])

    def test_gaussian_vanishes_outside_cutoff(self):
        p = gaussian_bump(0.5, 1.0, cutoff=6.0)
        self.assertEqual(p.support, (-6.0, 6.0))
        self.assertEqual(float(p(6.5)), 0.0)
        self.assertAlmostEqual(float(p(0.0)), 0.5)
        self.assertFalse(p.is_piecewise)

    def test_free_potential(self):
        p = free()
        self.assertTrue(p.is_free)
        self.assertEqual(float(p(3.0)), 0.0)

    def test_angular_momentum_needs_radial_geometry(self):
        with self.assertRaises(ConfigurationError):
            free('full-line', l=1)

    def test_radial_potentials(self):
        well = radial_square_well(1.0, 2.0)
        self.assertEqual(well.geometry, 'radial')
        self.assertEqual(float(well(1.0)), -1.0)
        core = radial_hard_core(1.0, l=1)
        self.assertTrue(np.isinf(core(0.5)))
        self.assertEqual(core.support_radius, 1.0)
        self.assertFalse(core.is_free)
        with self.assertRaises(ConfigurationError):
            radial_hard_core(0.0)

    def test_tabulated_interpolates_and_vanishes_outside(self):
        p = tabulated([-1.0, 0.0, 1.0], [0.0, 2.0, 0.0])
        self.assertAlmostEqual(float(p(0.5)), 1.0)
        self.assertEqual(float(p(2.0)), 0.0)
        with self.assertRaises(ConfigurationError):
            tabulated([0.0, 0.0, 1.0], [1.0, 1.0, 1.0])

    def test_load_tabulated_reads_two_columns(self):
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / 'bump.dat'
            path.write_text("# x V\n-1 0\n0 1\n1 0\n", encoding='utf-8')
            p = load_tabulated(path)
            self.assertEqual(p.support, (-1.0, 1.0))
            self.assertAlmostEqual(float(p(0.0)), 1.0)
            bad = Path(folder) / 'bad.dat'
            bad.write_text("0 1 2\n1 2 3\n", encoding='utf-8')
            with self.assertRaises(ConfigurationError):
                load_tabulated(bad)

    def test_equal_potentials_hash_alike(self):
        self.assertEqual(square(1.0, 2.0), square(1.0, 2.0))
        self.assertEqual(hash(square(1.0, 2.0)), hash(square(1.0, 2.0)))
        self.assertNotEqual(square(1.0, 2.0), square(1.0, 2.5))

    def test_perturbed_piecewise_stays_piecewise(self):
        p = square(1.0, 1.0).perturbed(FuzzyProfile.sharp(2.0), 0.01)
        self.assertTrue(p.is_piecewise)
        self.assertEqual(p.support, (-2.0, 2.0))
        self.assertAlmostEqual(float(p(0.0)), 1.01)
        self.assertAlmostEqual(float(p(1.5)), 0.01)
        self.assertEqual(float(p(2.5)), 0.0)

    def test_perturbed_by_fuzzy_region_uses_profile(self):
        region = FuzzyProfile(r=1.0, rho=1.0, shape='cos2')
        p = square(1.0, 1.0).perturbed(region, 0.1)
        self.assertFalse(p.is_piecewise)
        self.assertAlmostEqual(float(p(1.5)), 0.05)

    def test_zero_coupling_returns_same_potential(self):
        p = square(1.0, 1.0)
        self.assertIs(p.perturbed(FuzzyProfile.sharp(2.0), 0.0), p)


class PeriodicPotentialTests(SimpleTestCase):

    def setUp(self):
        self.base = radial_square_well(1.0, 2.0)

    def test_driven_components(self):
        pp = driven(self.base, omega=1.0, amplitude=0.2)
        self.assertEqual(pp.max_order, 1)
        self.assertFalse(pp.is_static)
        self.assertAlmostEqual(complex(pp.component(1, 1.0)), 0.2)
        self.assertAlmostEqual(complex(pp.component(0, 1.0)), -1.0)
        self.assertEqual(complex(pp.component(2, 1.0)), 0)
        self.assertEqual(pp.support_radius, 2.0)

    def test_reconstructs_real_potential(self):
        pp = driven(self.base, omega=2.0, amplitude=0.3)
        values = pp.reconstruct(np.array([0.5, 3.0]), 0.0)
        np.testing.assert_allclose(values, [-1.0 + 0.6, 0.0])

    def test_non_hermitian_drive_rejected(self):
        shape = piecewise([(0.0, 1.0, 1.0)], geometry='radial')
        with self.assertRaises(ConfigurationError):
            PeriodicPotential(self.base, 1.0, (Harmonic(1, 0.2, shape), Harmonic(-1, 0.3, shape)))

    def test_needs_positive_frequency_and_radial_base(self):
        with self.assertRaises(ConfigurationError):
            driven(self.base, omega=0.0, amplitude=0.1)
        with self.assertRaises(ConfigurationError):
            driven(square(1.0, 1.0), omega=1.0, amplitude=0.1)

    def test_static_drive(self):
        pp = PeriodicPotential(self.base, 1.0)
        self.assertTrue(pp.is_static)
        self.assertEqual(pp.max_order, 0)
