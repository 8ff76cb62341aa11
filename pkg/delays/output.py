"""
CSV and JSON writers for lab reports.

Numbers are written with 12 significant digits and nothing time-dependent
goes into a file, so identical inputs give byte-identical outputs.
"""
import json
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, TextIO

import numpy as np

FORMATS = ('csv', 'json')


@dataclass
class Report:
    """What a service hands back: an optional table, a result payload and the resolved config."""

    command: str
    config: Dict[str, Any]
    result: Dict[str, Any] = field(default_factory=dict)
    columns: Optional[List[str]] = None
    rows: Optional[np.ndarray] = None

    @property
    def default_format(self) -> str:
        return 'csv' if self.columns else 'json'


def number(value) -> str:
    value = float(value)
    if math.isnan(value):
        return 'nan'
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return format(value, '.12g')


def plain(value):
    """JSON-ready copy: numpy scalars and arrays unwrapped, complex as {re, im}, floats to 12 digits."""
    if isinstance(value, dict):
        return {str(key): plain(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [plain(item) for item in value]
    if isinstance(value, np.ndarray):
        return plain(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (complex, np.complexfloating)):
        return {'re': plain(value.real), 'im': plain(value.imag)}
    if isinstance(value, (float, np.floating)):
        if not math.isfinite(value):
            return number(value)
        return float(number(value))
    return value


def _scalar(value) -> str:
    if isinstance(value, (list, tuple)):
        return ', '.join(_scalar(item) for item in value)
    if isinstance(value, (float, np.floating)):
        return number(value)
    return str(value)


def write_csv(report: Report, stream: TextIO):
    stream.write(f"# command = {report.command}\n")
    for key in sorted(report.config):
        stream.write(f"# {key} = {_scalar(report.config[key])}\n")
    for key in sorted(report.result):
        value = report.result[key]
        if isinstance(value, (dict, list, np.ndarray)):
            continue
        stream.write(f"# result.{key} = {_scalar(value)}\n")
    stream.write(",".join(report.columns) + "\n")
    for row in np.atleast_2d(report.rows):
        stream.write(",".join(number(item) for item in row) + "\n")


def write_json(report: Report, stream: TextIO):
    document = {'command': report.command, 'config': plain(report.config), 'result': plain(report.result)}
    if report.columns:
        document['table'] = {name: plain(np.asarray(report.rows)[:, i]) for i, name in enumerate(report.columns)}
    stream.write(json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False))
    stream.write("\n")


def write(report: Report, stream: TextIO, fmt: Optional[str] = None):
    fmt = fmt or report.default_format
    if fmt == 'csv':
        if not report.columns:
            # matrices and fits only have a JSON form
            fmt = 'json'
        else:
            write_csv(report, stream)
            return fmt
    write_json(report, stream)
    return fmt
