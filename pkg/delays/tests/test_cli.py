import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase

from delays.models import RunRecord

WELL = ['potential.kind=square', 'potential.height=-1.5', 'potential.width=1', 'profile.energy=0.5']
BARRIER = ['potential.kind=square', 'potential.height=1', 'potential.width=1', 'profile.energy=0.5']


def lab(*args, **options):
    out = StringIO()
    call_command('lab', *args, stdout=out, **options)
    return out.getvalue()


class LabCommandTests(TestCase):

    def test_classical_csv(self):
        text = lab('classical', set=WELL)
        lines = text.splitlines()
        self.assertEqual(lines[0], '# command = classical')
        header = next(line for line in lines if not line.startswith('#'))
        self.assertTrue(header.startswith('r,'))
        closed = next(line for line in lines if line.startswith('# result.tau_closed_form = '))
        self.assertAlmostEqual(float(closed.split('=', 1)[1]), -0.5, delta=1e-6)

    def test_reruns_are_byte_identical(self):
        self.assertEqual(lab('classical', set=WELL), lab('classical', set=WELL))

    def test_smatrix_json(self):
        document = json.loads(lab('smatrix', set=BARRIER))
        self.assertEqual(document['command'], 'smatrix')
        self.assertAlmostEqual(document['result']['transmission'], 0.420, places=3)
        self.assertEqual(document['config']['potential.kind'], 'square')

    def test_flags_map_onto_config_keys(self):
        document = json.loads(lab('smatrix', set=BARRIER[:3], energy=0.5))
        self.assertEqual(document['result']['energy'], 0.5)

    def test_config_file(self):
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / 'barrier.cfg'
            path.write_text("\n".join(BARRIER) + "\n", encoding='utf-8')
            self.assertEqual(lab('smatrix', config=str(path)), lab('smatrix', set=BARRIER))

    def test_misspelt_key_is_a_configuration_error(self):
        with self.assertRaises(CommandError) as caught:
            lab('smatrix', set=['potental.kind=square'])
        self.assertEqual(caught.exception.returncode, 2)
        self.assertIn('potental.kind', str(caught.exception))

    def test_missing_scan_range(self):
        with self.assertRaises(CommandError) as caught:
            lab('delay', set=BARRIER)
        self.assertEqual(caught.exception.returncode, 2)

    def test_computation_error_exit_code(self):
        options = ['potential.kind=gaussian', 'potential.height=0.5', 'potential.sigma=1', 'profile.energy=0.8',
                   'numerics.unitarity_tolerance=0']
        with self.assertRaises(CommandError) as caught:
            lab('smatrix', set=options)
        self.assertEqual(caught.exception.returncode, 1)

    def test_runs_are_recorded(self):
        lab('smatrix', set=BARRIER)
        with self.assertRaises(CommandError):
            lab('smatrix', set=BARRIER[:3])
        statuses = sorted(RunRecord.objects.values_list('exit_status', flat=True))
        self.assertEqual(statuses, [0, 2])
        failed = RunRecord.objects.get(exit_status=2)
        self.assertIn('error', failed.summary)

    def test_out_writes_a_file(self):
        with tempfile.TemporaryDirectory() as folder:
            path = Path(folder) / 'well.json'
            printed = lab('classical', set=WELL, out=str(path), format='json')
            self.assertEqual(printed, '')
            document = json.loads(path.read_text(encoding='utf-8'))
            self.assertIn('table', document)
            self.assertNotIn('output.path', document['config'])
