"""Experiment configuration: an INI-style file with typed, validated keys.

Example::

    [experiment]
    name = se_ee
    trials = 200
    seed = 7

    [system]
    n_rf_list = 12, 16, 20

Every key has a default except ``experiment.name``; unknown sections or
keys are rejected so typos do not silently fall back to defaults.
"""

from __future__ import annotations

import configparser
import dataclasses
import hashlib
import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Tuple

from .errors import ConfigError
from .metrics import PowerModel

__all__ = [
    "EXPERIMENTS",
    "SCHEMA_VERSION",
    "SystemConfig",
    "QuantizationConfig",
    "BlindConfig",
    "ExperimentConfig",
    "parse_config",
    "load_config",
    "default_config_text",
    "config_hash",
]

SCHEMA_VERSION = 1
EXPERIMENTS = ("sigpow", "msqe", "bitalloc_hist", "se_ee", "blind_ser")


@dataclass(frozen=True)
class SystemConfig:
    n_antennas: int = 128
    n_rf_list: Tuple[int, ...] = (16,)
    n_users: int = 4
    avg_paths: float = 2.0
    snr_db: float = 10.0
    element_spacing: float = 0.5
    constellation: str = "qpsk"
    first_stage: str = "arv"
    second_stage: str = "dft"
    digital: str = "zf"
    gain_model: str = "channel"


@dataclass(frozen=True)
class QuantizationConfig:
    bits_list: Tuple[int, ...] = (1, 2, 3, 4, 5)
    quantizer: str = "lloyd_max"
    b_max: int = 12
    perfect: bool = False


@dataclass(frozen=True)
class BlindConfig:
    n_tr_list: Tuple[int, ...] = (20,)
    sigma_d: float = 0.5
    payload_trials: int = 10000
    max_joint_symbols: int = 4096


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    schema_version: int = SCHEMA_VERSION
    trials: int = 100
    seed: int = 0
    system: SystemConfig = field(default_factory=SystemConfig)
    quantization: QuantizationConfig = field(default_factory=QuantizationConfig)
    power: PowerModel = field(default_factory=PowerModel)
    blind: BlindConfig = field(default_factory=BlindConfig)

    @property
    def snr(self) -> float:
        return 10.0 ** (self.system.snr_db / 10.0)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_SECTIONS = {
    "experiment": None,
    "system": SystemConfig,
    "quantization": QuantizationConfig,
    "power": PowerModel,
    "blind": BlindConfig,
}
_EXPERIMENT_KEYS = {"name": str, "schema_version": int, "trials": int, "seed": int}

_CHOICES = {
    ("experiment", "name"): EXPERIMENTS,
    ("system", "constellation"): ("qpsk", "16qam", "64qam"),
    ("system", "first_stage"): ("arv", "svd"),
    ("system", "second_stage"): ("dft", "hadamard"),
    ("system", "digital"): ("zf", "mrc", "mmse"),
    ("system", "gain_model"): ("channel", "chain_power"),
    ("quantization", "quantizer"): ("lloyd_max", "uniform"),
}
_POSITIVE = {
    ("experiment", "trials"), ("system", "n_antennas"), ("system", "n_users"),
    ("system", "avg_paths"), ("system", "element_spacing"), ("blind", "payload_trials"),
    ("blind", "max_joint_symbols"), ("power", "sampling_rate"),
}
_POSITIVE_LISTS = {("system", "n_rf_list"), ("quantization", "bits_list"), ("blind", "n_tr_list")}
_NON_NEGATIVE = {
    ("power", k) for k in ("p_lna", "p_ps", "p_mixer", "p_lo", "p_lpf", "p_bbamp", "adc_fom")
} | {("experiment", "seed"), ("quantization", "b_max"), ("blind", "sigma_d")}


def _field_types(section: str) -> Dict[str, str]:
    if section == "experiment":
        return {k: v.__name__ for k, v in _EXPERIMENT_KEYS.items()}
    return {f.name: str(f.type) for f in dataclasses.fields(_SECTIONS[section])}


def _key_lines(text: str) -> Dict[Tuple[str, str], int]:
    lines = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        m = re.match(r"^\[([^\]]+)\]", line)
        if m:
            section = m.group(1).strip().lower()
            lines.setdefault((section, ""), lineno)
            continue
        m = re.match(r"^([^=:#;\s][^=:]*?)\s*[=:]", line)
        if m and section is not None:
            lines.setdefault((section, m.group(1).strip().lower()), lineno)
    return lines


_BOOLS = {"true": True, "yes": True, "on": True, "1": True,
          "false": False, "no": False, "off": False, "0": False}


def _convert(raw: str, type_name: str):
    raw = raw.strip()
    if type_name == "bool":
        try:
            return _BOOLS[raw.lower()]
        except KeyError:
            raise ValueError(f"expected a boolean, got {raw!r}") from None
    if type_name == "int":
        return int(raw)
    if type_name == "float":
        return float(raw)
    if type_name == "str":
        return raw.lower()
    if type_name.startswith("Tuple[int"):
        items = [s for s in re.split(r"[,\s]+", raw) if s]
        if not items:
            raise ValueError("list must not be empty")
        return tuple(int(s) for s in items)
    raise TypeError(f"unsupported config type {type_name}")


def _check(section: str, key: str, value, where: dict):
    def fail(msg):
        raise ConfigError(msg, f"{section}.{key}", where.get((section, key)))

    choices = _CHOICES.get((section, key))
    if choices is not None and value not in choices:
        fail(f"{value!r} is not one of {', '.join(choices)}")
    if (section, key) in _POSITIVE and not value > 0:
        fail(f"must be > 0, got {value}")
    if (section, key) in _NON_NEGATIVE and not value >= 0:
        fail(f"must be >= 0, got {value}")
    if (section, key) in _POSITIVE_LISTS and not all(v > 0 for v in value):
        fail(f"all entries must be > 0, got {value}")


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate configuration text; missing keys take their defaults."""
    where = _key_lines(text)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError("duplicate key", f"{exc.section}.{exc.option}", exc.lineno) from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError("duplicate section", exc.section, exc.lineno) from None
    except configparser.MissingSectionHeaderError as exc:
        raise ConfigError("keys must follow a [section] header", None, exc.lineno) from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    values: Dict[str, dict] = {s: {} for s in _SECTIONS}
    for section in parser.sections():
        if section not in _SECTIONS:
            raise ConfigError("unknown section", section, where.get((section, "")))
        types = _field_types(section)
        for key, raw in parser.items(section):
            if key not in types:
                raise ConfigError("unknown key", f"{section}.{key}", where.get((section, key)))
            try:
                value = _convert(raw, types[key])
            except ValueError as exc:
                raise ConfigError(
                    f"wrong type, expected {types[key]}: {exc}", f"{section}.{key}", where.get((section, key))
                ) from None
            _check(section, key, value, where)
            values[section][key] = value

    exp = values["experiment"]
    if "name" not in exp:
        raise ConfigError("missing required key", "experiment.name", where.get(("experiment", "")))
    if exp.get("schema_version", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigError(
            f"unsupported schema version (this build reads {SCHEMA_VERSION})",
            "experiment.schema_version", where.get(("experiment", "schema_version")),
        )
    if exp.get("seed", 0) >= 2**64:
        raise ConfigError("seed must fit in 64 bits", "experiment.seed", where.get(("experiment", "seed")))
    if values["quantization"].get("b_max", 12) > 12:
        raise ConfigError("b_max must be <= 12", "quantization.b_max", where.get(("quantization", "b_max")))
    try:
        return ExperimentConfig(
            **exp,
            system=SystemConfig(**values["system"]),
            quantization=QuantizationConfig(**values["quantization"]),
            power=PowerModel(**values["power"]),
            blind=BlindConfig(**values["blind"]),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    return parse_config(text)


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def default_config_text(name: str = "se_ee") -> str:
    """Fully spelled-out configuration with every default."""
    cfg = ExperimentConfig(name=name)
    out = ["[experiment]"]
    for key in _EXPERIMENT_KEYS:
        out.append(f"{key} = {_format_value(getattr(cfg, key))}")
    for section in ("system", "quantization", "power", "blind"):
        out.append("")
        out.append(f"[{section}]")
        obj = getattr(cfg, section)
        for f in dataclasses.fields(obj):
            out.append(f"{f.name} = {_format_value(getattr(obj, f.name))}")
    return "\n".join(out) + "\n"


def config_hash(config: ExperimentConfig) -> str:
    """Short stable digest of the fully resolved configuration."""
    blob = json.dumps(dataclasses.asdict(config), sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:12]
