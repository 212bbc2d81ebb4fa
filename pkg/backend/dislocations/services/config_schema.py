"""RunConfig: one JSON document with the sections potential, operator, layer,
corrector, particles, evolution and harness.

Each section is a DRF serializer; missing keys take the defaults declared on
the fields, unknown keys are rejected with the closest valid key suggested.
"""
import difflib
import hashlib
import json
import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass
from pathlib import Path

from rest_framework import serializers

from .exceptions import ConfigError
from .stress import StressField

logger = logging.getLogger(__name__)

SECTIONS = ('potential', 'operator', 'layer', 'corrector', 'particles', 'evolution', 'harness')


class FiniteFloatField(serializers.FloatField):
    default_error_messages = {
        'not_finite': 'A finite number is required.',
        'not_positive': 'Must be strictly positive.',
    }

    def __init__(self, *args, positive=False, **kwargs):
        self.positive = positive
        super().__init__(*args, **kwargs)

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        if not math.isfinite(value):
            self.fail('not_finite')
        if self.positive and not value > 0:
            self.fail('not_positive')
        return value


class WindowField(serializers.ListField):
    """[x_min, x_max] with x_min < x_max"""

    def __init__(self, **kwargs):
        super().__init__(child=FiniteFloatField(), min_length=2, max_length=2, **kwargs)

    def to_internal_value(self, data):
        value = super().to_internal_value(data)
        # length validators only run after this method
        if len(value) != 2:
            raise serializers.ValidationError(f"window needs exactly two entries, got {len(value)}")
        if not value[0] < value[1]:
            raise serializers.ValidationError(f"window must be ordered, got {value}")
        return value


class StrictSerializer(serializers.Serializer):
    """Serializer that refuses keys it does not declare"""

    def to_internal_value(self, data):
        if isinstance(data, Mapping):
            unknown = sorted(set(data) - set(self.fields))
            if unknown:
                errors = {}
                for key in unknown:
                    match = difflib.get_close_matches(key, list(self.fields), n=1, cutoff=0.6)
                    hint = f"; did you mean '{match[0]}'?" if match else ''
                    errors[key] = [f"unknown key{hint}"]
                raise serializers.ValidationError(errors)
        return super().to_internal_value(data)


class PotentialSerializer(StrictSerializer):
    kind = serializers.ChoiceField(choices=['builtin-cosine', 'user-polynomial-of-cosines'],
                                   default='builtin-cosine')
    coefficients = serializers.ListField(child=FiniteFloatField(), default=list)


class OperatorSerializer(StrictSerializer):
    s = FiniteFloatField(default=0.25)
    stitch_tol = FiniteFloatField(default=1e-3, positive=True)
    tail_rtol = FiniteFloatField(default=1e-8, positive=True)
    method = serializers.ChoiceField(choices=['direct', 'fft', 'auto'], default='auto')

    def validate_s(self, value):
        if not 0 < value < 0.5:
            raise serializers.ValidationError(f"s must satisfy 0 < s < 1/2, got {value}")
        return value


class LayerSerializer(StrictSerializer):
    window = WindowField(default=[-200.0, 200.0])
    dx = FiniteFloatField(default=0.05, positive=True)
    tol = FiniteFloatField(default=1e-6, positive=True)
    max_steps = serializers.IntegerField(default=1_000_000, min_value=1)
    recenter_every = serializers.IntegerField(default=50, min_value=1)
    cfl = FiniteFloatField(default=0.9, positive=True, max_value=1.0)
    accelerate = serializers.ChoiceField(choices=['none', 'newton'], default='none')
    tail_fit_fraction = FiniteFloatField(default=0.25, positive=True, max_value=0.5)

    def validate_window(self, value):
        if not value[0] < 0 < value[1]:
            raise serializers.ValidationError("layer window must contain the origin")
        return value


class CorrectorSerializer(StrictSerializer):
    tol = FiniteFloatField(default=1e-6, positive=True)
    window = WindowField(default=[-100.0, 100.0])
    stride = serializers.IntegerField(default=2, min_value=1)
    constraint_weight = FiniteFloatField(default=1.0, positive=True)


class ParticlesSerializer(StrictSerializer):
    positions = serializers.ListField(child=FiniteFloatField(), min_length=1, default=lambda: [-1.0, 1.0])
    gamma = FiniteFloatField(default=None, allow_null=True, positive=True)
    sigma = serializers.CharField(default='zero')
    delta = FiniteFloatField(default=0.0, min_value=0.0)
    t_end = FiniteFloatField(default=1.0, positive=True)
    rtol = FiniteFloatField(default=1e-8, positive=True)
    gap_floor = FiniteFloatField(default=1e-6, positive=True)
    samples = serializers.IntegerField(default=11, min_value=2)
    method = serializers.ChoiceField(choices=['RK45', 'RK23', 'DOP853'], default='RK45')

    def validate_positions(self, value):
        if any(b <= a for a, b in zip(value, value[1:])):
            raise serializers.ValidationError("positions must be strictly increasing")
        return value

    def validate_sigma(self, value):
        try:
            StressField.parse(value)
        except ConfigError as e:
            raise serializers.ValidationError(str(e)) from e
        return value


class EvolutionSerializer(StrictSerializer):
    epsilon = FiniteFloatField(default=0.1, positive=True)
    scheme = serializers.ChoiceField(choices=['explicit', 'imex-reaction'], default='imex-reaction')
    dt_safety = FiniteFloatField(default=0.9, positive=True, max_value=1.0)
    margin = FiniteFloatField(default=20.0, positive=True)
    dx = FiniteFloatField(default=None, allow_null=True, positive=True)
    c_stab = FiniteFloatField(default=1.9, positive=True)
    c_reac = FiniteFloatField(default=1.9, positive=True)
    tail = serializers.ChoiceField(choices=['layer-asymptotic', 'constant-limits'], default='layer-asymptotic')


class HarnessSerializer(StrictSerializer):
    epsilons = serializers.ListField(child=FiniteFloatField(positive=True), min_length=1,
                                     default=lambda: [0.2, 0.1, 0.05])
    kappa = FiniteFloatField(default=0.5, positive=True)
    delta = FiniteFloatField(default=0.1, min_value=0.0)
    t = FiniteFloatField(default=0.5, min_value=0.0)
    supersol_epsilons = serializers.ListField(child=FiniteFloatField(positive=True), min_length=1,
                                              default=lambda: [0.1, 0.05, 0.02, 0.01])
    max_final_error = FiniteFloatField(default=0.05, positive=True)
    mode = serializers.ChoiceField(choices=['profile', 'quadrature'], default='profile')


class RunConfigSerializer(StrictSerializer):
    potential = PotentialSerializer()
    operator = OperatorSerializer()
    layer = LayerSerializer()
    corrector = CorrectorSerializer()
    particles = ParticlesSerializer()
    evolution = EvolutionSerializer()
    harness = HarnessSerializer()

    def to_internal_value(self, data):
        if not isinstance(data, Mapping):
            raise serializers.ValidationError({'non_field_errors': ['config must be a JSON object']})
        filled = dict(data)
        for section in SECTIONS:
            if filled.get(section) is None:
                filled[section] = {}
        return super().to_internal_value(filled)


def _first_error(errors, prefix=''):
    """(key path, message) of the first leaf in a DRF error structure"""
    if isinstance(errors, Mapping):
        for key, value in errors.items():
            path = prefix if key == 'non_field_errors' else (f"{prefix}.{key}" if prefix else str(key))
            return _first_error(value, path)
    if isinstance(errors, (list, tuple)) and errors:
        first = errors[0]
        if isinstance(first, (Mapping, list, tuple)):
            return _first_error(first, prefix)
        return prefix, str(first)
    return prefix, str(errors)


@dataclass(frozen=True)
class RunConfig:
    potential: dict
    operator: dict
    layer: dict
    corrector: dict
    particles: dict
    evolution: dict
    harness: dict

    def to_dict(self):
        return {section: getattr(self, section) for section in SECTIONS}

    @property
    def hash(self):
        """First 16 hex digits of the sha256 of the canonical JSON form"""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(canonical.encode('utf-8')).hexdigest()[:16]


def apply_overrides(data, overrides):
    """Set dotted keys ('layer.tol') on a raw config mapping; None values are ignored"""
    if not isinstance(data, Mapping):
        raise ConfigError(f"config must be a JSON object, got {type(data).__name__}")
    data = {key: dict(value) if isinstance(value, Mapping) else value for key, value in data.items()}
    for dotted, value in (overrides or {}).items():
        if value is None:
            continue
        section, _, key = dotted.partition('.')
        data.setdefault(section, {})
        if not isinstance(data[section], dict):
            raise ConfigError("section must be a JSON object", key_path=section)
        data[section][key] = value
    return data


def validate_config(data, overrides=None):
    serializer = RunConfigSerializer(data=apply_overrides(data, overrides))
    if not serializer.is_valid():
        key_path, message = _first_error(serializer.errors)
        raise ConfigError(message, key_path=key_path or None)
    validated = serializer.validated_data
    return RunConfig(**{section: dict(validated[section]) for section in SECTIONS})


def parse_config(path=None, overrides=None):
    """Validated RunConfig from a JSON file (or defaults when path is None)"""
    data = {}
    if path is not None:
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding='utf-8'))
        except FileNotFoundError as e:
            raise ConfigError(f"config file {path} not found") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {path} is not valid JSON: {e}") from e
        if not isinstance(data, Mapping):
            raise ConfigError(f"config file {path} must hold a JSON object")
    config = validate_config(data, overrides)
    logger.debug(f"Config loaded from {path or 'defaults'} (hash {config.hash})")
    return config
