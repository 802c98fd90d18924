"""
Experiment Config Loader

Reads and writes INI experiment configs. Top-level keys live in the
[experiment] section; every other section maps onto one config model.
"""
import configparser
import logging
from pathlib import Path
from typing import Any, Dict, Union

from pydantic import BaseModel, ValidationError

from app.errors import ConfigError
from app.models.config import ConsistencyError, ExperimentConfig

logger = logging.getLogger(__name__)

TOP_SECTION = "experiment"
SECTIONS = ("ablation", "stream", "corpus", "model", "purifier", "train", "buffers", "augment")


def _error_key(loc) -> str:
    """Map a pydantic error location onto "section.key" """
    parts = [str(p) for p in loc if not isinstance(p, int)]
    if not parts:
        return TOP_SECTION
    if parts[0] in SECTIONS:
        return ".".join(parts[:2])
    return f"{TOP_SECTION}.{parts[0]}"


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a nested dict into an ExperimentConfig.

    Raises:
        ConfigError: naming the first offending key
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        cause = first.get("ctx", {}).get("error")
        key = cause.key if isinstance(cause, ConsistencyError) else _error_key(first["loc"])
        raise ConfigError(key, first["msg"]) from e


def read_ini(text: str, source: str = "<string>") -> Dict[str, Any]:
    """Parse INI text into the nested dict shape ExperimentConfig expects"""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read_string(text, source=source)
    except configparser.Error as e:
        raise ConfigError(source, f"malformed config: {e}") from e

    data: Dict[str, Any] = {}
    for section in parser.sections():
        values = dict(parser.items(section))
        if section == TOP_SECTION:
            data.update(values)
        elif section in SECTIONS:
            data[section] = values
        else:
            raise ConfigError(section, f"unknown section (expected one of {[TOP_SECTION, *SECTIONS]})")
    return data


def parse_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load and validate an experiment config file.

    Args:
        path: INI file path

    Returns:
        ExperimentConfig with defaults filled in

    Raises:
        ConfigError: Missing file, malformed INI, unknown key or invalid value
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(str(path), "config file not found")
    cfg = config_from_dict(read_ini(path.read_text(encoding="utf-8"), source=str(path)))
    logger.info(f"Loaded config {path} (method={cfg.method.value}, seeds={cfg.seeds})")
    return cfg


def apply_overrides(cfg: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
    """
    Return a copy of cfg with "section.key" (or top-level "key") overrides applied.

    Raises:
        ConfigError: Unknown key or invalid value
    """
    data = cfg.model_dump(mode="json")
    for dotted, value in overrides.items():
        if "." in dotted:
            section, key = dotted.split(".", 1)
            if section not in SECTIONS:
                raise ConfigError(dotted, "unknown section")
            data[section][key] = value
        else:
            data[dotted] = value
    return config_from_dict(data)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ",".join(str(v) for v in value)
    if value is None:
        return ""
    return str(value)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Write every field as INI; parse_config on the result yields an equal config"""
    data = cfg.model_dump(mode="json")
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str

    parser.add_section(TOP_SECTION)
    for key, value in data.items():
        if key in SECTIONS:
            continue
        if key == "task_order" and value is None:
            value = "original"
        parser.set(TOP_SECTION, key, _format_value(value))

    for section in SECTIONS:
        parser.add_section(section)
        for key, value in data[section].items():
            if value is None:
                continue
            parser.set(section, key, _format_value(value))

    lines = []
    for section in parser.sections():
        lines.append(f"[{section}]")
        lines.extend(f"{key} = {value}" for key, value in parser.items(section))
        lines.append("")
    return "\n".join(lines)


def write_config(cfg: ExperimentConfig, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(serialize_config(cfg), encoding="utf-8")
    return path
