"""
Serializers for the sections of a run configuration.
"""
from rest_framework import serializers

from .classical_service import CONVENTIONS
from .config import RunConfig
from .dynamics_service import CLOCKS
from .exceptions import ConfigurationError
from .profiles import SHAPES
from .sojourn_service import REFERENCE_KINDS

POTENTIAL_KINDS = ('free', 'square', 'double-barrier', 'gaussian', 'piecewise', 'tabulated',
                   'radial-well', 'hard-core')
_REQUIRED = {
    'square': ('height', 'width'),
    'double-barrier': ('height', 'width', 'gap'),
    'gaussian': ('height', 'sigma'),
    'piecewise': ('segments',),
    'tabulated': ('file',),
    'radial-well': ('depth', 'radius'),
    'hard-core': ('radius',),
}
_RADIAL_ONLY = ('radial-well', 'hard-core')
_FULL_LINE_ONLY = ('square', 'double-barrier', 'gaussian')


class CommaListField(serializers.ListField):
    """'a, b, c' on one config line."""

    def to_internal_value(self, data):
        if isinstance(data, str):
            data = [item.strip() for item in data.split(',') if item.strip()]
        return super().to_internal_value(data)


class SectionSerializer(serializers.Serializer):
    """Rejects keys the section does not declare."""

    def to_internal_value(self, data):
        unknown = sorted(set(data) - set(self.fields))
        if unknown:
            raise serializers.ValidationError({key: ["unknown key"] for key in unknown})
        return super().to_internal_value(data)


class PotentialSerializer(SectionSerializer):
    kind = serializers.ChoiceField(choices=POTENTIAL_KINDS)
    geometry = serializers.ChoiceField(choices=('full-line', 'radial'), default='full-line')
    l = serializers.IntegerField(min_value=0, default=0)
    height = serializers.FloatField(required=False)
    width = serializers.FloatField(required=False, min_value=0.0)
    gap = serializers.FloatField(required=False, min_value=0.0)
    sigma = serializers.FloatField(required=False, min_value=0.0)
    cutoff = serializers.FloatField(default=6.0, min_value=1.0)
    depth = serializers.FloatField(required=False)
    radius = serializers.FloatField(required=False, min_value=0.0)
    segments = serializers.CharField(required=False)
    file = serializers.CharField(required=False)

    def validate(self, data):
        missing = [name for name in _REQUIRED.get(data['kind'], ()) if name not in data]
        if missing:
            raise serializers.ValidationError(
                {name: [f"required for kind '{data['kind']}'"] for name in missing})
        if data['kind'] in _RADIAL_ONLY:
            data['geometry'] = 'radial'
        if data['kind'] in _FULL_LINE_ONLY and data['geometry'] != 'full-line':
            raise serializers.ValidationError({'geometry': [f"kind '{data['kind']}' lives on the full line"]})
        if data['l'] and data['geometry'] != 'radial':
            raise serializers.ValidationError({'l': ["angular momentum needs the radial geometry"]})
        if 'segments' in data:
            self.parse_segments(data['segments'])
        return data

    @staticmethod
    def parse_segments(text):
        """'left:right:value; ...'"""
        triples = []
        for item in text.split(';'):
            if not item.strip():
                continue
            parts = item.split(':')
            try:
                triple = tuple(float(part) for part in parts)
            except ValueError:
                triple = ()
            if len(triple) != 3:
                raise serializers.ValidationError({'segments': [f"expected 'left:right:value', got '{item.strip()}'"]})
            triples.append(triple)
        return triples


class DriveSerializer(SectionSerializer):
    omega = serializers.FloatField(min_value=0.0)
    amplitude = serializers.FloatField(default=0.0)
    radius = serializers.FloatField(required=False, min_value=0.0)
    n_max = serializers.IntegerField(required=False, min_value=1)
    sideband = serializers.IntegerField(default=0)
    truncations = CommaListField(child=serializers.IntegerField(min_value=1), required=False)

    def validate_omega(self, value):
        if value <= 0:
            raise serializers.ValidationError("drive frequency must be positive")
        return value


class ProfileSerializer(SectionSerializer):
    kind = serializers.ChoiceField(choices=('fixed', 'gaussian', 'gaussian-momentum'), default='fixed')
    energy = serializers.FloatField(required=False)
    width = serializers.FloatField(required=False)
    k0 = serializers.FloatField(required=False)
    sigma_k = serializers.FloatField(required=False)
    samples = serializers.IntegerField(default=401, min_value=3)
    direction = serializers.ChoiceField(choices=('left', 'right'), default='left')

    def validate(self, data):
        needed = {'fixed': ('energy',), 'gaussian': ('energy', 'width'),
                  'gaussian-momentum': ('k0', 'sigma_k')}[data['kind']]
        missing = [name for name in needed if name not in data]
        if missing:
            raise serializers.ValidationError({name: [f"required for profile '{data['kind']}'"] for name in missing})
        if 'energy' in data and data['energy'] <= 0:
            raise serializers.ValidationError({'energy': ["energy must be positive"]})
        return data


class RegionSerializer(SectionSerializer):
    r = serializers.FloatField(default=0.0, min_value=0.0)
    rho = serializers.FloatField(default=0.0, min_value=0.0)
    shape = serializers.ChoiceField(choices=sorted(SHAPES), default='cos2')
    center = serializers.FloatField(default=0.0)
    rho_ratio = serializers.FloatField(required=False, min_value=0.0)


class ScanSerializer(SectionSerializer):
    emin = serializers.FloatField(required=False)
    emax = serializers.FloatField(required=False)
    n = serializers.IntegerField(default=200, min_value=1)
    rmin = serializers.FloatField(required=False, min_value=0.0)
    rmax = serializers.FloatField(required=False, min_value=0.0)
    steps = serializers.IntegerField(default=40, min_value=2)
    rhos = CommaListField(child=serializers.FloatField(min_value=0.0), required=False)
    workers = serializers.IntegerField(default=1, min_value=1)

    def validate(self, data):
        if 'emin' in data and data['emin'] <= 0:
            raise serializers.ValidationError({'emin': ["energies must be positive"]})
        if 'emin' in data and 'emax' in data and data['emax'] <= data['emin']:
            raise serializers.ValidationError({'emax': ["emax must exceed emin"]})
        if 'rmin' in data and 'rmax' in data and data['rmax'] <= data['rmin']:
            raise serializers.ValidationError({'rmax': ["rmax must exceed rmin"]})
        return data


class DelaySerializer(SectionSerializer):
    reference = serializers.ChoiceField(choices=REFERENCE_KINDS, default='in')
    convention = serializers.ChoiceField(choices=CONVENTIONS, default='symmetric')
    condition = serializers.CharField(default='transmit')
    channel = serializers.ChoiceField(choices=('left', 'right'), required=False)
    origin = serializers.FloatField(default=0.0)
    window_low = serializers.FloatField(required=False)
    window_high = serializers.FloatField(required=False)
    samples = serializers.IntegerField(default=2001, min_value=11)
    limit_width = serializers.FloatField(required=False, min_value=0.0)

    def validate(self, data):
        if ('window_low' in data) != ('window_high' in data):
            raise serializers.ValidationError({'window_high': ["give both window_low and window_high"]})
        if 'window_low' in data and data['window_high'] <= data['window_low']:
            raise serializers.ValidationError({'window_high': ["window_high must exceed window_low"]})
        return data


class PacketSerializer(SectionSerializer):
    x0 = serializers.FloatField(required=False)
    k0 = serializers.FloatField(required=False, min_value=0.0)
    sigma_k = serializers.FloatField(default=0.1, min_value=0.0)
    points = serializers.IntegerField(default=1024, min_value=16)
    half_width = serializers.FloatField(default=100.0, min_value=0.0)
    dt = serializers.FloatField(default=0.01, min_value=0.0)

    def validate_sigma_k(self, value):
        if value <= 0:
            raise serializers.ValidationError("momentum spread must be positive")
        return value

    def validate_dt(self, value):
        if value <= 0:
            raise serializers.ValidationError("time step must be positive")
        return value


class ClockSerializer(SectionSerializer):
    kinds = CommaListField(child=serializers.ChoiceField(choices=CLOCKS), default=list(CLOCKS))
    couplings = CommaListField(child=serializers.FloatField(), required=False)


class NumericsSerializer(SectionSerializer):
    e_min = serializers.FloatField(required=False)
    phase_step = serializers.FloatField(required=False)
    points_per_wavelength = serializers.IntegerField(required=False, min_value=8)
    radial_points_per_wavelength = serializers.IntegerField(required=False, min_value=8)
    condition_threshold = serializers.FloatField(required=False, min_value=0.0)
    unitarity_tolerance = serializers.FloatField(required=False, min_value=0.0)
    floquet_unitarity_tolerance = serializers.FloatField(required=False, min_value=0.0)
    region_probability_floor = serializers.FloatField(required=False, min_value=0.0)
    quiet_steps = serializers.IntegerField(required=False, min_value=1)
    norm_drift_tolerance = serializers.FloatField(required=False, min_value=0.0)
    absorber_width = serializers.FloatField(required=False, min_value=0.0)
    qr_interval = serializers.IntegerField(required=False, min_value=1)
    rho_ratio = serializers.FloatField(required=False, min_value=0.0)
    slope_points = serializers.IntegerField(required=False, min_value=8)

    def validate(self, data):
        for name in ('e_min', 'phase_step'):
            if name in data and data[name] <= 0:
                raise serializers.ValidationError({name: ["must be positive"]})
        return data


class OutputSerializer(SectionSerializer):
    path = serializers.CharField(required=False)
    format = serializers.ChoiceField(choices=('csv', 'json'), required=False)


SECTION_SERIALIZERS = {
    'potential': PotentialSerializer,
    'drive': DriveSerializer,
    'profile': ProfileSerializer,
    'region': RegionSerializer,
    'scan': ScanSerializer,
    'delay': DelaySerializer,
    'packet': PacketSerializer,
    'clock': ClockSerializer,
    'numerics': NumericsSerializer,
    'output': OutputSerializer,
}


def _messages(detail, prefix=''):
    if isinstance(detail, dict):
        for key, value in detail.items():
            yield from _messages(value, key if key != 'non_field_errors' else prefix)
    elif isinstance(detail, list):
        for item in detail:
            if isinstance(item, (dict, list)):
                yield from _messages(item, prefix)
            else:
                yield prefix, str(item)
    else:
        yield prefix, str(detail)


def validate_section(config: RunConfig, section: str) -> dict:
    """Validated values of one section; ConfigurationError names the offending key and line."""
    serializer = SECTION_SERIALIZERS[section](data=config.section(section))
    if serializer.is_valid():
        return dict(serializer.validated_data)
    lines = []
    for name, message in _messages(serializer.errors):
        key = f"{section}.{name}" if name else section
        lines.append(f"{config.where(key)}: {key}: {message}")
    raise ConfigurationError("invalid configuration\n" + "\n".join(lines))
