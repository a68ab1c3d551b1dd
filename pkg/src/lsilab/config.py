import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional, Union, cast

import yaml
from pydantic import ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from .models import ExperimentConfig


class RuntimeSettings(BaseSettings):
    """Environment overrides. Only the output directory is read from it."""

    model_config = SettingsConfigDict(env_prefix="LSI_LAB_")

    output_dir: Optional[Path] = None


def get_config(config_path: Union[str, Path]) -> Dict[str, Any]:
    """
    Reads an experiment file and returns the raw mapping.
    """
    with open(config_path, "r") as f:
        config_data = yaml.safe_load(f)
    if not isinstance(config_data, dict):
        raise ValueError(f"{config_path} does not contain a YAML mapping")
    return cast(Dict[str, Any], config_data)


def load_experiment(config_path: Union[str, Path]) -> ExperimentConfig:
    """
    Reads and validates an experiment file. Relative paths inside it resolve
    against the file's own directory.
    """
    raw = get_config(config_path)
    return ExperimentConfig.model_validate(
        raw, context={"base_dir": Path(config_path).resolve().parent}
    )


def config_hash(cfg: ExperimentConfig) -> str:
    """SHA-256 of the model, solver and verify sections plus the seed."""
    payload = cfg.model_dump(mode="json", include={"model", "solver", "verify", "seed"})
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def dump_config(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(cfg.model_dump(mode="json"), sort_keys=False)


def format_validation_error(error: ValidationError) -> str:
    """One line per problem, prefixed with its dotted field path."""
    lines = []
    for problem in error.errors():
        location = ".".join(str(part) for part in problem["loc"]) or "<root>"
        lines.append(f"{location}: {problem['msg']}")
    return "\n".join(lines)
