import tempfile
from pathlib import Path

from django.conf import settings
from django.test import SimpleTestCase, override_settings
from rest_framework import serializers

from delays import conf
from delays.config import RunConfig, load_potential, parse_config, resolve
from delays.exceptions import ConfigurationError
from delays.serializers import CommaListField, NumericsSerializer, PotentialSerializer, validate_section

EXAMPLE = """
# square barrier at E = 0.5
potential.kind = square
potential.height = 1.0   # inline comment
potential.width = 1.0

profile.energy = 0.5
"""


class ParseConfigTests(SimpleTestCase):

    def test_keys_values_and_lines(self):
        config = parse_config(EXAMPLE.splitlines(), source='run.cfg')
        self.assertEqual(config.section('potential'), {'kind': 'square', 'height': '1.0', 'width': '1.0'})
        self.assertEqual(config.where('potential.height'), 'run.cfg:4')
        self.assertTrue(config.has_section('profile'))
        self.assertFalse(config.has_section('drive'))

    def test_duplicate_key(self):
        with self.assertRaisesMessage(ConfigurationError, "already set on line 1"):
            parse_config(["potential.kind = free", "potential.kind = square"])

    def test_missing_equals(self):
        with self.assertRaisesMessage(ConfigurationError, "<config>:1"):
            parse_config(["potential.kind square"])

    def test_unknown_section(self):
        with self.assertRaisesMessage(ConfigurationError, "potental.kind"):
            parse_config(["potental.kind = square"])

    def test_key_needs_a_section(self):
        with self.assertRaises(ConfigurationError):
            parse_config(["kind = square"])

    def test_command_line_wins(self):
        config = parse_config(EXAMPLE.splitlines()).with_overrides({'potential.height': 2.0, 'region.r': None})
        self.assertEqual(config.section('potential')['height'], '2.0')
        self.assertEqual(config.where('potential.height'), 'command line')
        self.assertFalse(config.has_section('region'))


class FileTests(SimpleTestCase):

    def test_potential_table_file(self):
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / 'bump.dat'
            path.write_text("-1 0\n0 1\n1 0\n", encoding='utf-8')
            config = load_potential(path)
            self.assertEqual(config.section('potential'), {'kind': 'tabulated', 'file': str(path)})

    def test_potential_file_keys_only(self):
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / 'well.cfg'
            path.write_text("potential.kind = free\nprofile.energy = 1\n", encoding='utf-8')
            with self.assertRaisesMessage(ConfigurationError, "profile.energy"):
                load_potential(path)

    def test_resolve_order(self):
        with tempfile.TemporaryDirectory() as folder:
            run = Path(folder) / 'run.cfg'
            run.write_text(EXAMPLE, encoding='utf-8')
            well = Path(folder) / 'well.cfg'
            well.write_text("potential.height = -1.5\n", encoding='utf-8')
            config = resolve(str(run), str(well), {'profile.energy': 0.25})
            self.assertEqual(config.section('potential')['height'], '-1.5')
            self.assertEqual(config.section('profile')['energy'], '0.25')

    def test_missing_file(self):
        with self.assertRaises(ConfigurationError):
            resolve('/nonexistent/run.cfg', None, {})


class SerializerTests(SimpleTestCase):

    def test_numerics_section_covers_every_default(self):
        self.assertEqual(set(NumericsSerializer().fields), set(conf.names()))

    def test_valid_potential(self):
        data = validate_section(parse_config(EXAMPLE.splitlines()), 'potential')
        self.assertEqual(data['kind'], 'square')
        self.assertEqual(data['height'], 1.0)
        self.assertEqual(data['geometry'], 'full-line')

    def test_missing_required_key_names_the_key(self):
        config = parse_config(["potential.kind = square", "potential.height = 1"], source='run.cfg')
        with self.assertRaisesMessage(ConfigurationError, "potential.width: required for kind 'square'"):
            validate_section(config, 'potential')

    def test_unknown_key_points_at_its_line(self):
        config = parse_config(["potential.kind = free", "potential.colour = red"], source='run.cfg')
        with self.assertRaisesMessage(ConfigurationError, "run.cfg:2: potential.colour: unknown key"):
            validate_section(config, 'potential')

    def test_radial_kinds_force_radial_geometry(self):
        config = parse_config(["potential.kind = hard-core", "potential.radius = 1"])
        self.assertEqual(validate_section(config, 'potential')['geometry'], 'radial')

    def test_segments(self):
        self.assertEqual(PotentialSerializer.parse_segments("-1:0:2; 0:1:-1"), [(-1.0, 0.0, 2.0), (0.0, 1.0, -1.0)])
        config = parse_config(["potential.kind = piecewise", "potential.segments = 0:1"])
        with self.assertRaisesMessage(ConfigurationError, "left:right:value"):
            validate_section(config, 'potential')

    def test_comma_lists(self):
        field = CommaListField(child=serializers.FloatField())
        self.assertEqual(field.to_internal_value("4, 8, 16"), [4.0, 8.0, 16.0])

    def test_scan_ranges(self):
        config = parse_config(["scan.emin = 2", "scan.emax = 1"])
        with self.assertRaisesMessage(ConfigurationError, "emax must exceed emin"):
            validate_section(config, 'scan')

    def test_drive_frequency_positive(self):
        config = parse_config(["drive.omega = 0"])
        with self.assertRaises(ConfigurationError):
            validate_section(config, 'drive')


class NumericsTests(SimpleTestCase):

    def test_fallbacks(self):
        self.assertEqual(conf.numeric('phase_step'), 1e-4)

    @override_settings(TIMELAB_NUMERICS={'phase_step': 1e-3})
    def test_settings_override_fallbacks(self):
        self.assertEqual(conf.numeric('phase_step'), 1e-3)

    def test_run_overrides_are_scoped(self):
        with conf.overridden(slope_points=16):
            self.assertEqual(conf.numeric('slope_points'), 16)
            with conf.overridden(rho_ratio=0.2):
                self.assertEqual(conf.numeric('slope_points'), 16)
                self.assertEqual(conf.numeric('rho_ratio'), 0.2)
        self.assertEqual(conf.numeric('slope_points'), 64)

    def test_empty_config(self):
        self.assertEqual(RunConfig().section('potential'), {})


class SettingsTests(SimpleTestCase):

    def test_no_api_layer_configured(self):
        self.assertFalse(hasattr(settings, 'REST_FRAMEWORK'))

    def test_numerics_cover_every_default(self):
        self.assertEqual(set(settings.TIMELAB_NUMERICS), set(conf.names()))
