"""
`python manage.py lab <subcommand> [--config FILE] [--potential FILE] [flags]`

Exit codes: 0 on success, 2 for configuration errors, 1 for computation errors.
"""
import io
import logging

from django.core.management.base import BaseCommand, CommandError
from django.db import transaction

from delays.config import RunConfig, resolve
from delays.exceptions import ConfigurationError, LabError
from delays.models import RunRecord
from delays.output import FORMATS, plain, write
from delays.serializers import validate_section
from delays.services import SERVICES, run_command

logger = logging.getLogger(__name__)

# flag dest -> dotted config key
FLAGS = {
    'emin': 'scan.emin',
    'emax': 'scan.emax',
    'n': 'scan.n',
    'rmin': 'scan.rmin',
    'rmax': 'scan.rmax',
    'steps': 'scan.steps',
    'workers': 'scan.workers',
    'energy': 'profile.energy',
    'r': 'region.r',
    'fuzzy_rho': 'region.rho',
    'reference': 'delay.reference',
    'condition': 'delay.condition',
    'omega': 'drive.omega',
    'amplitude': 'drive.amplitude',
    'out': 'output.path',
    'format': 'output.format',
}


def _record(command: str, config: dict, summary: dict, status: int):
    """Best-effort run bookkeeping; never changes the outcome of the run."""
    try:
        with transaction.atomic():
            RunRecord.objects.create(command=command, config=plain(config), summary=plain(summary),
                                     exit_status=status)
    except Exception as e:
        logger.warning(f"Failed to record run: {e}")


def _pairs(items) -> dict:
    pairs = {}
    for item in items or ():
        key, sep, value = item.partition('=')
        if not sep:
            raise ConfigurationError(f"--set expects KEY=VALUE, got '{item}'")
        pairs[key.strip()] = value.strip()
    return pairs


class Command(BaseCommand):
    help = "Sojourn-time and time-delay lab: classical, stationary, dynamical and Floquet routes"

    def add_arguments(self, parser):
        parser.add_argument('subcommand', choices=sorted(SERVICES))
        parser.add_argument('--config', help="run configuration file (section.key = value lines)")
        parser.add_argument('--potential', help="potential section file or two-column (x, V) table")
        parser.add_argument('--set', action='append', default=[], metavar='KEY=VALUE',
                            help="override any dotted config key; repeatable")
        parser.add_argument('--out', help="output file (default: stdout)")
        parser.add_argument('--format', choices=FORMATS)
        parser.add_argument('--emin', type=float)
        parser.add_argument('--emax', type=float)
        parser.add_argument('--n', type=int)
        parser.add_argument('--rmin', type=float)
        parser.add_argument('--rmax', type=float)
        parser.add_argument('--steps', type=int)
        parser.add_argument('--workers', type=int)
        parser.add_argument('--energy', type=float)
        parser.add_argument('--r', type=float)
        parser.add_argument('--fuzzy-rho', dest='fuzzy_rho', type=float)
        parser.add_argument('--reference')
        parser.add_argument('--condition')
        parser.add_argument('--omega', type=float)
        parser.add_argument('--amplitude', type=float)

    def handle(self, *args, **options):
        command = options['subcommand']
        logger.info("")
        logger.info(f">>> LAB RUN: {command}")
        config = RunConfig()
        try:
            overrides = {key: options.get(flag) for flag, key in FLAGS.items()}
            overrides.update(_pairs(options.get('set')))
            config = resolve(options.get('config'), options.get('potential'), overrides)
            output = validate_section(config, 'output')
            # output.* never reaches the report, so reruns to another path stay byte-identical
            report = run_command(command, RunConfig(
                {key: value for key, value in config.values.items() if not key.startswith('output.')},
                config.origins))
        except LabError as exc:
            kind = "Configuration error" if isinstance(exc, ConfigurationError) else "Computation failed"
            logger.error(f"{kind}: {exc}")
            _record(command, config.values, {'error': str(exc)}, exc.exit_code)
            raise CommandError(str(exc), returncode=exc.exit_code) from exc

        buffer = io.StringIO()
        fmt = write(report, buffer, output.get('format'))
        if output.get('path'):
            try:
                with open(output['path'], 'w', encoding='utf-8', newline='') as handle:
                    handle.write(buffer.getvalue())
            except OSError as exc:
                logger.error(f"Cannot write {output['path']}: {exc}")
                raise CommandError(f"cannot write {output['path']}: {exc}", returncode=2) from exc
            logger.info(f"Wrote {fmt.upper()} to {output['path']}")
        else:
            self.stdout.write(buffer.getvalue(), ending='')
        summary = {key: value for key, value in report.result.items() if isinstance(value, (int, float, str, bool))}
        _record(command, report.config, summary, 0)
        logger.info(">>> LAB RUN COMPLETE")
