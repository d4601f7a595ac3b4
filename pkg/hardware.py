"""
Hardware platform description: crossbars, charge pumps, placement, voltage
levels, timing constants and NBTI material parameters
"""
import json
import logging
import os
from dataclasses import dataclass, fields, replace

import numpy as np

from exceptions import ConfigError

logger = logging.getLogger(__name__)

ENV_PREFIX = 'PUMPWEAR_'
COMPOSITIONS = ('equivalent_time', 'segments')


@dataclass(frozen=True)
class HardwareSpec:
    crossbar_count: int = 6
    pump_count: int = 2
    placement: tuple = (0, 0, 0, 1, 1, 1)
    crossbar_rows: int = 128
    crossbar_cols: int = 128
    v_idle: float = 1.8
    v_boost: float = 3.0
    v_discharge: float = 1.2
    t_pulse_ms: float = 0.1
    t_recover_ms: float = 1.5
    t_hop_ms: float = 0.01

    def __post_init__(self):
        object.__setattr__(self, 'placement', tuple(int(k) for k in self.placement))

    @property
    def levels(self):
        return (self.v_discharge, self.v_idle, self.v_boost)

    def with_placement(self, placement, pump_count=None):
        placement = tuple(int(k) for k in placement)
        if pump_count is None:
            pump_count = max(placement) + 1 if placement else self.pump_count
        return replace(self, placement=placement, crossbar_count=len(placement), pump_count=pump_count)


@dataclass(frozen=True)
class NbtiParams:
    # Placeholder constants; uncalibrated. Only ratios and orderings are meaningful.
    g0: float = 1.0
    m_exp: float = 2.0
    n_exp: float = 0.2
    beta: float = 1.0
    v_th: float = 0.45
    composition: str = 'equivalent_time'


@dataclass(frozen=True)
class DischargePolicy:
    kind: str = 'never'
    interval_ms: float = None

    def __post_init__(self):
        if self.kind not in ('never', 'perspike', 'interval'):
            raise ConfigError(f'unknown discharge policy {self.kind!r}')
        if self.kind == 'interval' and not (self.interval_ms and self.interval_ms > 0):
            raise ConfigError('FixedInterval policy needs a positive interval')

    @classmethod
    def never(cls):
        return cls('never')

    @classmethod
    def per_spike(cls):
        return cls('perspike')

    @classmethod
    def fixed_interval(cls, interval_ms):
        return cls('interval', float(interval_ms))

    @classmethod
    def parse(cls, text):
        """Parse `never`, `perspike` or `interval:<ms>`"""
        text = text.strip().lower()
        if text.startswith('interval:'):
            try:
                return cls.fixed_interval(float(text.split(':', 1)[1]))
            except ValueError as exc:
                raise ConfigError(f'bad discharge interval in {text!r}') from exc
        if text in ('never', 'perspike'):
            return cls(text)
        raise ConfigError(f'unknown discharge policy {text!r}')

    @property
    def label(self):
        if self.kind == 'interval':
            return f'interval:{self.interval_ms:g}'
        return self.kind


def contiguous_placement(crossbar_count, pump_count):
    """Split crossbars into `pump_count` contiguous groups (first groups take the remainder)"""
    if pump_count <= 0 or crossbar_count < pump_count:
        raise ConfigError(f'cannot place {crossbar_count} crossbars on {pump_count} pumps')
    sizes = [crossbar_count // pump_count + (1 if k < crossbar_count % pump_count else 0)
             for k in range(pump_count)]
    return tuple(k for k, size in enumerate(sizes) for _ in range(size))


def validate_spec(spec):
    """Raise ConfigError listing every violated HardwareSpec invariant"""
    violations = []
    for name in ('crossbar_count', 'pump_count', 'crossbar_rows', 'crossbar_cols'):
        if getattr(spec, name) <= 0:
            violations.append(f'{name} must be positive')
    if not spec.v_discharge < spec.v_idle < spec.v_boost:
        violations.append(f'voltages must satisfy v_discharge < v_idle < v_boost '
                          f'(got {spec.v_discharge}, {spec.v_idle}, {spec.v_boost})')
    if len(spec.placement) != spec.crossbar_count:
        violations.append(f'placement has {len(spec.placement)} entries for {spec.crossbar_count} crossbars')
    for crossbar, pump in enumerate(spec.placement):
        if not 0 <= pump < spec.pump_count:
            violations.append(f'crossbar {crossbar} has no valid pump (index {pump})')
    for name in ('t_recover_ms', 't_hop_ms'):
        if getattr(spec, name) < 0:
            violations.append(f'{name} must be >= 0')
    if not spec.t_pulse_ms > 0:
        violations.append('t_pulse_ms must be positive')
    if violations:
        raise ConfigError(violations)


def validate_nbti(params, spec=None):
    violations = []
    if not params.g0 > 0:
        violations.append('g0 must be positive')
    if not params.m_exp > 0:
        violations.append('m_exp must be positive')
    if not 0 < params.n_exp <= 1:
        violations.append('n_exp must lie in (0, 1]')
    if not params.beta > 0:
        violations.append('beta must be positive')
    if params.v_th < 0:
        violations.append('v_th must be >= 0')
    if params.composition not in COMPOSITIONS:
        violations.append(f'composition must be one of {COMPOSITIONS}')
    if spec is not None and not params.v_th < spec.v_discharge:
        violations.append(f'v_th {params.v_th} must be below v_discharge {spec.v_discharge}')
    if violations:
        raise ConfigError(violations)


def placement_matrix(spec):
    """Dense one-hot crossbar-to-pump matrix P (C x L)"""
    matrix = np.zeros((spec.crossbar_count, spec.pump_count), dtype=np.int8)
    matrix[np.arange(spec.crossbar_count), list(spec.placement)] = 1
    return matrix


def synapse_to_pump(mapping, spec):
    """Compose synapse-to-crossbar with crossbar-to-pump: pump index per synapse"""
    crossbars = np.asarray(mapping.crossbars, dtype=np.int64)
    if crossbars.size and crossbars.max() >= spec.crossbar_count:
        raise ConfigError(f'mapping uses crossbar {int(crossbars.max())} but hardware has {spec.crossbar_count}')
    return np.asarray(spec.placement, dtype=np.int64)[crossbars]


# Configuration loading

def _coerce(cls, name, value):
    default = next(f.default for f in fields(cls) if f.name == name)
    try:
        if name == 'placement':
            if isinstance(value, str):
                value = [v for v in value.split(',') if v.strip()]
            return tuple(int(v) for v in value)
        if isinstance(default, bool):
            return str(value).lower() in ('1', 'true', 'on')
        if isinstance(default, int):
            return int(value)
        if isinstance(default, float):
            return float(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f'{cls.__name__}.{name}: cannot use value {value!r}') from exc


def _layer(cls, file_values, overrides):
    known = {f.name for f in fields(cls)}
    unknown = set(file_values) - known
    if unknown:
        raise ConfigError([f'unknown {cls.__name__} key {key!r}' for key in sorted(unknown)])

    values = {}
    for name in known:
        if name in file_values:
            values[name] = _coerce(cls, name, file_values[name])
        env_value = os.environ.get(ENV_PREFIX + name.upper())
        if env_value is not None:
            values[name] = _coerce(cls, name, env_value)
        if overrides.get(name) is not None:
            values[name] = _coerce(cls, name, overrides[name])
    return values


def load_config(path=None, overrides=None):
    """Build (HardwareSpec, NbtiParams) from defaults < config file < environment < overrides"""
    overrides = overrides or {}
    known = {f.name for f in fields(HardwareSpec)} | {f.name for f in fields(NbtiParams)}
    if set(overrides) - known:
        raise ConfigError([f'unknown parameter {key!r}' for key in sorted(set(overrides) - known)])
    document = {}
    if path:
        try:
            with open(path, encoding='utf-8') as handle:
                document = json.load(handle)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f'cannot read config {path}: {exc}') from exc
        unknown = set(document) - {'hardware', 'nbti'}
        if unknown:
            raise ConfigError([f'unknown config section {key!r}' for key in sorted(unknown)])

    hw_values = _layer(HardwareSpec, document.get('hardware', {}), overrides)
    nbti_values = _layer(NbtiParams, document.get('nbti', {}), overrides)

    # A crossbar or pump count change without an explicit placement gets a contiguous one
    if 'placement' not in hw_values:
        count = hw_values.get('crossbar_count', HardwareSpec.crossbar_count)
        pumps = hw_values.get('pump_count', HardwareSpec.pump_count)
        hw_values['placement'] = contiguous_placement(count, pumps)

    spec = HardwareSpec(**hw_values)
    params = NbtiParams(**nbti_values)
    validate_spec(spec)
    validate_nbti(params, spec)
    logger.debug('Loaded hardware config: %s', spec)
    return spec, params


def spec_to_dict(spec):
    data = {f.name: getattr(spec, f.name) for f in fields(spec)}
    data['placement'] = list(data['placement'])
    return data
