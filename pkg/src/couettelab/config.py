"""Flat key-value configuration files.

A config file is a YAML mapping with one ``key: value`` per line, e.g.::

    nu: 1.0e-3
    gamma2: 1
    epsilon: 0.01
    n_z: 64
    n_y: 256

Unknown, duplicate and nested keys are rejected, as is any value outside
the bounds of the target type.
"""
from typing import Any, Dict, Optional, Union, get_type_hints
import dataclasses
import os.path as op
import yaml

from . import linear as lin, multipliers as mp, sim, threshold as th, utils as u

logger = u.init_logger(__name__)

class ConfigError(ValueError):
    """invalid configuration; the message names the key and the violated bound"""

class FlatLoader(yaml.SafeLoader):
    """SafeLoader that only accepts flat mappings without repeated keys"""

    def construct_mapping(self, node, deep=False):
        seen = set()
        for key_node, value_node in node.value:
            key = self.construct_object(key_node, deep=deep)
            if key in seen:
                raise ConfigError(f"duplicate key {key!r} (line {key_node.start_mark.line + 1})")
            if isinstance(value_node, (yaml.MappingNode, yaml.SequenceNode)):
                raise ConfigError(f"key {key!r} has a nested value; config files are flat")
            seen.add(key)
        return super().construct_mapping(node, deep=deep)

def get_loader():
    return FlatLoader

# kind -> target type
KINDS = {
    'sim': sim.SimConfig,
    'linear': lin.LinearParams,
    'mode': lin.ModeRunConfig,
    'toy': th.ToyConfig,
    'multipliers': mp.MultiplierParams,
}
# fields that are not settable from files
HIDDEN = {'phi'}

def documented_keys(kind: str):
    cls = _target(kind)
    return [f.name for f in dataclasses.fields(cls) if f.name not in HIDDEN]

def _target(kind):
    if kind not in KINDS:
        raise ConfigError(f"unknown config kind {kind!r}, expected one of {sorted(KINDS)}")
    return KINDS[kind]

def _coerce(key, value, typ):
    """YAML 1.1 reads 1e-3 as a string; numbers are coerced by field type"""
    typ = str(typ)
    if value is None:
        if 'Optional' in typ or 'None' in typ:
            return None
        raise ConfigError(f"key {key!r} needs a value")
    try:
        if 'bool' in typ:
            if not isinstance(value, bool):
                raise ValueError
            return value
        if 'int' in typ:
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise ValueError
            return int(float(value))
        if 'float' in typ:
            if isinstance(value, bool):
                raise ValueError
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"key {key!r} should be {typ}, got {value!r}")
    return value

def parse(source: Union[str, Dict[str, Any], None]) -> Dict[str, Any]:
    """file path, YAML string or dict -> flat dict"""
    if source is None:
        return {}
    if isinstance(source, dict):
        return dict(source)
    loader = get_loader()
    try:
        if op.isfile(source):
            with open(source, "r") as f:
                data = yaml.load(f.read(), Loader=loader)
        else:
            data = yaml.load(source, Loader=loader)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse config: {e}")
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config should be a key-value mapping, got {type(data).__name__}")
    return data

def load_config(source: Union[str, Dict[str, Any], None], kind: str = 'sim',
                overrides: Optional[Dict[str, Any]] = None, require_stable: bool = False):
    """Build a validated config of the given kind.

    Parameters
    ----------
    source : path to a config file, a YAML string, a dict, or None (all defaults)
    kind : one of 'sim', 'linear', 'mode', 'toy', 'multipliers'
    overrides : values taking precedence over the file (None values are skipped)
    require_stable : reject gamma2 <= 1/4

    Returns
    -------
    SimConfig | LinearParams | ModeRunConfig | ToyConfig | MultiplierParams

    Raises
    ------
    ConfigError
    """
    cls = _target(kind)
    data = parse(source)
    if overrides:
        data.update({key: val for key, val in overrides.items() if val is not None})

    hints = get_type_hints(cls)
    allowed = set(documented_keys(kind))
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} for {kind} config; allowed: {sorted(allowed)}")
    required = [f.name for f in dataclasses.fields(cls)
                if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING]
    missing = [key for key in required if key not in data]
    if missing:
        raise ConfigError(f"missing required key(s) {missing} for {kind} config")

    values = {key: _coerce(key, val, hints[key]) for key, val in data.items()}
    if require_stable and 'gamma2' in hints:
        gamma2 = values.get('gamma2', cls.__dataclass_fields__['gamma2'].default)
        if not gamma2 > 0.25:
            raise ConfigError(f"gamma2 = {gamma2} violates γ² > 1/4")
    try:
        config = cls(**values)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(str(e))
    logger.debug(f"loaded {kind} config: {config}")
    return config

def dump_config(config) -> str:
    """flat YAML text that load_config reads back into an equal config"""
    data = {key: val for key, val in dataclasses.asdict(config).items() if key not in HIDDEN}
    return yaml.safe_dump(data, sort_keys=False)
