from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import jsonschema
import yaml
from neuroconv.utils import dict_deep_update, load_dict_from_file

from sa_reid.dataset.toy_data import ToySpec
from sa_reid.exceptions import ConfigurationError, ParseError
from sa_reid.model import ModelConfig, StageConfig, TrainingConfig
from sa_reid.utils.gradient_check import GradcheckConfig

METADATA_FOLDER_PATH = Path(__file__).parent.parent / "metadata"
DEFAULT_CONFIG_FILE_PATH = METADATA_FOLDER_PATH / "sa_reid_default_config.yaml"
CONFIG_SCHEMA_FILE_PATH = METADATA_FOLDER_PATH / "sa_reid_config_schema.yaml"


@dataclass(frozen=True)
class PathsConfig:
    data_dir: Path = Path("data")
    checkpoint: Path = Path("sa_reid_checkpoint.sapl")
    output_dir: Path = Path("outputs")


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, validated and typed."""

    model: ModelConfig
    toy: ToySpec
    training: TrainingConfig
    paths: PathsConfig = field(default_factory=PathsConfig)
    gradcheck: GradcheckConfig = field(default_factory=GradcheckConfig)
    seed: int = 0


def _load_scalar(text: str) -> Any:
    value = yaml.safe_load(text)
    if isinstance(value, str):
        # YAML 1.1 reads exponents without a dot (1e-5) as strings
        try:
            return float(value)
        except ValueError:
            return value
    return value


def _parse_value(text: str) -> Any:
    """Type a raw value with YAML scalar rules; unbracketed comma-separated values become a list."""
    text = text.strip()
    if "," in text and not text.startswith("["):
        return [_load_scalar(item.strip()) for item in text.split(",")]
    return _load_scalar(text) if text else None


def read_key_value_file(file_path: Union[str, Path]) -> Dict[str, Any]:
    """
    Read a ``key = value`` file. Blank lines and ``#`` comments are ignored.

    Parameters
    ----------
    file_path : str or Path
        The configuration file (e.g. a line 'model.m = 2' or 'epochs = 10').

    Returns
    -------
    dict
        The keys as written, with typed values, in file order.
    """
    file_path = Path(file_path)
    assert file_path.exists(), f"The configuration file '{file_path}' does not exist."
    entries = {}
    for line_number, line in enumerate(file_path.read_text().splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        key, separator, value = content.partition("=")
        key = key.strip()
        if not separator or not key:
            raise ParseError(f"Expected 'key = value' at line {line_number} of '{file_path}', got '{line.strip()}'.")
        if key in entries:
            raise ParseError(f"Duplicate key '{key}' at line {line_number} of '{file_path}'.")
        try:
            entries[key] = _parse_value(value)
        except yaml.YAMLError:
            raise ParseError(f"Cannot parse the value of '{key}' at line {line_number} of '{file_path}'.")
    return entries


def _qualify_key(key: str, defaults: dict) -> tuple:
    """Resolve 'section.name', a top-level name or a bare name unique across sections to its path."""
    if "." in key:
        section, name = key.split(".", 1)
        if section not in defaults or not isinstance(defaults[section], dict) or name not in defaults[section]:
            raise ConfigurationError(f"Unknown configuration key '{key}'.")
        return section, name
    if key in defaults and not isinstance(defaults[key], dict):
        return (key,)
    sections = [section for section, values in defaults.items() if isinstance(values, dict) and key in values]
    if not sections:
        raise ConfigurationError(f"Unknown configuration key '{key}'.")
    if len(sections) > 1:
        candidates = ", ".join(f"'{section}.{key}'" for section in sections)
        raise ConfigurationError(f"Ambiguous configuration key '{key}', use one of {candidates}.")
    return sections[0], key


def nest_overrides(entries: Dict[str, Any], defaults: dict) -> dict:
    """Turn flat ``key = value`` entries into a dictionary shaped like ``defaults``."""
    overrides = {}
    for key, value in entries.items():
        path = _qualify_key(key, defaults)
        if len(path) == 1:
            overrides[path[0]] = value
        else:
            overrides.setdefault(path[0], {})[path[1]] = value
    return overrides


def _wrap_scalar_lists(config: dict, defaults: dict) -> dict:
    """A single value written for a list setting (e.g. 'compare_seeds = 3') becomes a one-element list."""
    for section, values in defaults.items():
        if not isinstance(values, dict):
            continue
        for name, default in values.items():
            if isinstance(default, list) and not isinstance(config[section][name], list):
                config[section][name] = [config[section][name]]
    return config


def build_run_config(config: dict) -> RunConfig:
    """Convert a validated configuration dictionary into typed, frozen configuration objects."""
    seed = config["seed"]
    model = config["model"]
    toy = config["toy"]
    channels, downsample = model["stage_channels"], model["stage_downsample"]
    if len(channels) != len(downsample):
        raise ConfigurationError(
            f"'stage_channels' lists {len(channels)} stages but 'stage_downsample' lists {len(downsample)}."
        )
    stages = tuple(
        StageConfig(
            out_channels=out_channels,
            kernel=model["stage_kernel"],
            stride=model["stage_stride"],
            pad=model["stage_pad"],
            downsample=stage_downsample,
        )
        for out_channels, stage_downsample in zip(channels, downsample)
    )
    model_config = ModelConfig(
        stages=stages,
        input_shape=(3, toy["image_height"], toy["image_width"]),
        num_classes=model["num_classes"],
        m=model["m"],
        reduced_dim=model["reduced_dim"],
        lam=float(model["lam"]),
        sa_on_ds=model["sa_on_ds"],
        sa_on_backbone=model["sa_on_backbone"],
        seed=seed,
    )
    toy_spec = ToySpec(**{**toy, "seed": seed if toy["seed"] is None else toy["seed"]})
    training = config["training"]
    training_config = TrainingConfig(**{**training, "compare_seeds": tuple(training["compare_seeds"])})
    paths = PathsConfig(**{name: Path(value) for name, value in config["paths"].items()})
    gradcheck = GradcheckConfig(**config["gradcheck"], seed=seed)
    return RunConfig(
        model=model_config, toy=toy_spec, training=training_config, paths=paths, gradcheck=gradcheck, seed=seed
    )


def load_run_config(config_file_path: Optional[Union[str, Path]] = None, seed: Optional[int] = None) -> RunConfig:
    """
    Load the packaged defaults, apply a ``key = value`` configuration file and validate the result.

    Parameters
    ----------
    config_file_path : str or Path, optional
        The user configuration. Only the defaults are used when omitted.
    seed : int, optional
        Overrides the top-level 'seed' of the configuration.

    Returns
    -------
    RunConfig
    """
    defaults = load_dict_from_file(DEFAULT_CONFIG_FILE_PATH)
    config = defaults
    if config_file_path is not None:
        overrides = nest_overrides(read_key_value_file(config_file_path), defaults=defaults)
        config = dict_deep_update(config, overrides, append_list=False)
    if seed is not None:
        config = dict_deep_update(config, dict(seed=seed), append_list=False)
    config = _wrap_scalar_lists(config, defaults=defaults)

    schema = load_dict_from_file(CONFIG_SCHEMA_FILE_PATH)
    try:
        jsonschema.validate(instance=config, schema=schema)
    except jsonschema.ValidationError as error:
        location = ".".join(str(part) for part in error.absolute_path) or "<root>"
        raise ConfigurationError(f"Invalid configuration value at '{location}': {error.message}")
    return build_run_config(config)
