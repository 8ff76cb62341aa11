"""
Run configuration files.

One `section.key = value` per line, '#' starts a comment. Values stay strings
here; the section serializers convert and validate them. Every key remembers
the line it came from so validation errors can point at it.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, Optional, Tuple

from .exceptions import ConfigurationError

logger = logging.getLogger(__name__)

SECTIONS = ('potential', 'drive', 'profile', 'region', 'scan', 'delay', 'packet', 'clock', 'numerics', 'output')
COMMAND_LINE = 'command line'


@dataclass(frozen=True)
class RunConfig:
    values: Dict[str, str] = field(default_factory=dict)
    origins: Dict[str, Tuple[str, int]] = field(default_factory=dict)

    def section(self, name: str) -> Dict[str, str]:
        prefix = f"{name}."
        return {key[len(prefix):]: value for key, value in self.values.items() if key.startswith(prefix)}

    def has_section(self, name: str) -> bool:
        return bool(self.section(name))

    def where(self, key: str) -> str:
        """'file:line' (or 'command line') for a dotted key."""
        source, line = self.origins.get(key, ('configuration', 0))
        return f"{source}:{line}" if line else source

    def merged(self, other: 'RunConfig') -> 'RunConfig':
        """Keys of `other` win."""
        return RunConfig({**self.values, **other.values}, {**self.origins, **other.origins})

    def with_overrides(self, overrides: Dict[str, object]) -> 'RunConfig':
        values = {key: str(value) for key, value in overrides.items() if value is not None}
        for key in values:
            _check_key(key, COMMAND_LINE, 0)
        return self.merged(RunConfig(values, {key: (COMMAND_LINE, 0) for key in values}))


def _check_key(key: str, source: str, line: int):
    section, _, name = key.partition('.')
    where = f"{source}:{line}" if line else source
    if not name or '.' in name:
        raise ConfigurationError(f"{where}: key '{key}' must look like 'section.name'")
    if section not in SECTIONS:
        raise ConfigurationError(f"{where}: unknown section in key '{key}'", allowed=SECTIONS)


def parse_config(lines: Iterable[str], source: str = '<config>') -> RunConfig:
    values, origins = {}, {}
    for number, raw in enumerate(lines, start=1):
        text = raw.split('#', 1)[0].strip()
        if not text:
            continue
        key, sep, value = text.partition('=')
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigurationError(f"{source}:{number}: expected 'key = value', got '{raw.strip()}'")
        _check_key(key, source, number)
        if key in values:
            first = origins[key][1]
            raise ConfigurationError(f"{source}:{number}: key '{key}' already set on line {first}")
        values[key] = value
        origins[key] = (source, number)
    logger.debug(f"Parsed {len(values)} keys from {source}")
    return RunConfig(values, origins)


def _read(path) -> list:
    try:
        return Path(path).read_text(encoding='utf-8').splitlines()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration file {path}: {exc}") from exc


def load_config(path) -> RunConfig:
    config = parse_config(_read(path), source=str(path))
    # relative data files are looked up next to the config file
    table = config.values.get('potential.file')
    if table and not Path(table).is_absolute():
        values = {**config.values, 'potential.file': str(Path(path).parent / table)}
        return RunConfig(values, config.origins)
    return config


def _is_table(lines) -> bool:
    rows = [line.split('#', 1)[0].split() for line in lines]
    rows = [row for row in rows if row]
    if not rows:
        return False
    try:
        return all(len(row) == 2 and [float(item) for item in row] for row in rows)
    except ValueError:
        return False


def load_potential(path) -> RunConfig:
    """
    A potential file is either a config holding only `potential.*`/`drive.*`
    keys or a two-column (x, V) table.
    """
    lines = _read(path)
    if _is_table(lines):
        return RunConfig({'potential.kind': 'tabulated', 'potential.file': str(path)},
                         {'potential.kind': (str(path), 0), 'potential.file': (str(path), 0)})
    config = load_config(path)
    for key in config.values:
        if key.split('.', 1)[0] not in ('potential', 'drive'):
            raise ConfigurationError(f"{config.where(key)}: potential files only hold potential.* and drive.* keys, "
                                     f"found '{key}'")
    return config


def resolve(config_path: Optional[str], potential_path: Optional[str], overrides: Dict[str, object]) -> RunConfig:
    """Config file, then potential file, then command-line flags; later sources win."""
    config = load_config(config_path) if config_path else RunConfig()
    if potential_path:
        config = config.merged(load_potential(potential_path))
    return config.with_overrides(overrides)
