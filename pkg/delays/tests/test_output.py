import io
import json

import numpy as np
from django.test import SimpleTestCase

from delays.output import Report, number, plain, write


def _report(columns=('r', 'tau')):
    rows = np.array([[1.0, 0.5], [2.0, 1.0 / 3.0]]) if columns else None
    return Report('classical', {'profile.energy': 0.5, 'potential.kind': 'square'},
                  {'value': -0.5, 'outcome': 'transmitted', 'tables': [1, 2]},
                  list(columns) if columns else None, rows)


class NumberTests(SimpleTestCase):

    def test_twelve_significant_digits(self):
        self.assertEqual(number(1.0 / 3.0), '0.333333333333')
        self.assertEqual(number(2), '2')

    def test_non_finite(self):
        self.assertEqual(number(float('nan')), 'nan')
        self.assertEqual(number(float('inf')), 'inf')
        self.assertEqual(number(-np.inf), '-inf')

    def test_plain(self):
        value = plain({'S': np.complex128(0.5 - 0.25j), 'tau': np.float64(np.inf), 'n': np.int64(3),
                       'ok': np.bool_(True)})
        self.assertEqual(value, {'S': {'re': 0.5, 'im': -0.25}, 'tau': 'inf', 'n': 3, 'ok': True})


class WriterTests(SimpleTestCase):

    def test_csv_header(self):
        stream = io.StringIO()
        self.assertEqual(write(_report(), stream), 'csv')
        lines = stream.getvalue().splitlines()
        self.assertEqual(lines[:3], ['# command = classical', '# potential.kind = square', '# profile.energy = 0.5'])
        self.assertIn('# result.value = -0.5', lines)
        self.assertNotIn('# result.tables = 1, 2', lines)
        self.assertEqual(lines[-3:], ['r,tau', '1,0.5', '2,0.333333333333'])

    def test_json_table(self):
        stream = io.StringIO()
        write(_report(), stream, 'json')
        document = json.loads(stream.getvalue())
        self.assertEqual(sorted(document), ['command', 'config', 'result', 'table'])
        self.assertEqual(document['table']['r'], [1.0, 2.0])

    def test_csv_falls_back_to_json_without_a_table(self):
        stream = io.StringIO()
        self.assertEqual(write(_report(columns=None), stream, 'csv'), 'json')
        document = json.loads(stream.getvalue())
        self.assertNotIn('table', document)
        self.assertEqual(document['result']['outcome'], 'transmitted')

    def test_identical_reports_give_identical_bytes(self):
        first, second = io.StringIO(), io.StringIO()
        write(_report(), first, 'json')
        write(_report(), second, 'json')
        self.assertEqual(first.getvalue(), second.getvalue())
