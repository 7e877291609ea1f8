from pathlib import Path
from typing import Iterable

from pydantic import ValidationError

from ..schemas.config import PipelineConfig
from .error_handler import (
    ConfigurationError,
    format_validation_error_msg,
    handle_error_helper,
)
from .formats import read_key_values


def parse_overrides(items: Iterable[str]) -> dict[str, str]:
    """`key=value` strings from repeated `--set` flags."""
    overrides = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            handle_error_helper(
                ConfigurationError, f"Override `{item}` is not key=value"
            )
        overrides[key.strip()] = value.strip()
    return overrides


def load_pipeline_config(
    path: str | Path | None = None, overrides: Iterable[str] = ()
) -> PipelineConfig:
    """
    Builds the pipeline configuration from an optional key-value file and
    `--set` overrides applied on top of it.

    Raises:
        ConfigurationError: Listing every unknown or invalid key.
    """
    values: dict[str, str] = {}
    if path is not None:
        values.update(read_key_values(path))
    values.update(parse_overrides(overrides))
    try:
        return PipelineConfig(**values)
    except ValidationError as e:
        handle_error_helper(
            ConfigurationError,
            f"Invalid configuration: {format_validation_error_msg(e)}",
        )


def describe_keys() -> str:
    """One `key = default` line per configuration key."""
    lines = []
    for name, field in PipelineConfig.model_fields.items():
        default = field.default
        if isinstance(default, tuple):
            default = ",".join(str(v) for v in default)
        elif hasattr(default, "value"):
            default = default.value
        lines.append(f"  {name} = {default}")
    return "\n".join(lines)
