import os
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml
from dotenv import load_dotenv
from pydantic import ValidationError

from exception.custom_exception import ConfigError
from model.run_config import RunConfig

DEFAULT_CONFIG_PATH = "config/config.yaml"


def load_yaml(file_path) -> Dict[str, Any]:
    """
    Load a YAML document into a dictionary.

    Args:
        file_path (str | Path): Path to the YAML file.

    Returns:
        dict: Parsed document (empty dict for an empty file).
    """
    path = Path(file_path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as file:
            data = yaml.safe_load(file)
    except yaml.YAMLError as e:
        raise ConfigError(f"invalid YAML in {path}", e) from e
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"top level of {path} must be a mapping")
    return data


def apply_override(config: Dict[str, Any], assignment: str) -> Dict[str, Any]:
    """Apply one ``dotted.key=value`` override in place; the value is parsed as a YAML scalar."""
    if "=" not in assignment:
        raise ConfigError(f"override must look like key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    parts = [p for p in key.strip().split(".") if p]
    if not parts:
        raise ConfigError(f"empty key in override {assignment!r}")
    try:
        value = yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse value of override {assignment!r}", e) from e

    node = config
    for part in parts[:-1]:
        child = node.get(part)
        if child is None:
            child = node[part] = {}
        if not isinstance(child, dict):
            raise ConfigError(f"override {assignment!r} descends into non-mapping key {part!r}")
        node = child
    node[parts[-1]] = value
    return config


def resolve_config_path(file_path: Optional[str] = None) -> str:
    load_dotenv()
    return file_path or os.getenv("RELCP_CONFIG", DEFAULT_CONFIG_PATH)


def load_config(file_path: Optional[str] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    Load and validate a run configuration.

    Args:
        file_path (str): YAML config; falls back to ``RELCP_CONFIG`` then ``config/config.yaml``.
        overrides (Iterable[str]): ``--set`` assignments applied after loading.

    Returns:
        RunConfig: validated configuration; unknown keys raise ``ConfigError``.
    """
    data = load_yaml(resolve_config_path(file_path))
    for assignment in overrides:
        apply_override(data, assignment)
    return validate_config(data)


def validate_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}", e) from e
