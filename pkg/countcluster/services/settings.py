"""
Configuration layering and validation.

Settings are a flat dict built from three layers, lowest first: the preset
class in config.py, an optional config file (JSON or YAML), and command
line flags. Each layer is checked against schemas/config.json before it is
merged and errors name the file or flag they came from.
"""

import copy
import importlib
import json
import logging
import os
from typing import Any, Optional

import jsonschema
import yaml

from countcluster.data.object_profiles import OBJECT_PROFILES, list_objects
from countcluster.services.attention_core import SmoothingConfig
from countcluster.services.benchmark import BenchmarkSpec
from countcluster.services.blobsim import SimParams
from countcluster.services.errors import ConfigError, CountClusterError
from countcluster.services.guidance import GuidanceConfig

logger = logging.getLogger(__name__)

BASE_DIR = os.path.dirname(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
SCHEMA_DIR = os.path.join(BASE_DIR, "schemas")

DEFAULT_PRESET = "toy"

# Settings forwarded to GuidanceConfig (k is supplied per run)
GUIDANCE_KEYS = (
    "tau", "alpha", "guided_timesteps", "refinement", "max_refinement_iters",
    "epsilon", "activated_only", "kl_normalization", "radius_mode", "rebuild_clusters",
)


def load_schema(name: str) -> dict:
    """Load a JSON Schema from the schemas/ directory."""
    with open(os.path.join(SCHEMA_DIR, name), encoding="utf-8") as fh:
        return json.load(fh)


def settings_from_object(obj: Any) -> dict:
    """UPPERCASE class attributes as a lowercase settings dict."""
    return {
        key.lower(): copy.deepcopy(getattr(obj, key))
        for key in dir(obj)
        if key.isupper()
    }


def preset_settings(name: str) -> dict:
    """Settings of a named preset from config.py."""
    presets = importlib.import_module("config").PRESETS
    preset_cls = presets.get(name)
    if preset_cls is None:
        raise ConfigError(f"unknown preset '{name}' (choose from {', '.join(presets)})")
    return settings_from_object(preset_cls)


def read_config_file(path: str) -> dict:
    """Read a flat config file; .yaml/.yml is parsed as YAML, anything else as JSON."""
    try:
        with open(path, encoding="utf-8") as fh:
            if path.lower().endswith((".yaml", ".yml")):
                data = yaml.safe_load(fh)
            else:
                data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror or exc}") from exc
    except (ValueError, yaml.YAMLError) as exc:
        raise ConfigError(f"config file {path} is not valid: {exc}") from exc

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a single object of settings")
    return data


def _flag_name(key: str) -> str:
    return "--" + key.replace("_", "-")


def validate_settings(data: dict, source: str = "flags") -> None:
    """
    Check one settings layer against schemas/config.json.

    Args:
        data: Layer to check
        source: "flags" or a config file path, used in the error message

    Raises:
        ConfigError naming the first offending key
    """
    validator = jsonschema.Draft7Validator(load_schema("config.json"))
    errors = sorted(validator.iter_errors(data), key=lambda e: [str(p) for p in e.path])
    if not errors:
        return

    error = errors[0]
    key = str(error.path[0]) if error.path else None
    if source == "flags" and key:
        raise ConfigError(f"invalid value for {_flag_name(key)}: {error.message}")
    if key:
        raise ConfigError(f"invalid value for '{key}' in {source}: {error.message}")
    raise ConfigError(f"invalid config in {source}: {error.message}")


# =============================================================================
# VALUE PARSING
# =============================================================================

def parse_int_list(value: Any, name: str = "value") -> list[int]:
    """
    Parse an integer list: a list, "a..b" (inclusive) or "a,b,c".

    Examples:
        >>> parse_int_list("2..5")
        [2, 3, 4, 5]
    """
    if isinstance(value, (list, tuple)):
        return [int(v) for v in value]
    if isinstance(value, int):
        return [value]

    text = str(value).strip()
    try:
        if ".." in text:
            start, end = (int(part) for part in text.split("..", 1))
        else:
            return [int(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise ConfigError(f"invalid integer list for {name}: {text}") from exc
    if start > end:
        raise ConfigError(f"invalid range for {name}: {text} (start > end)")
    return list(range(start, end + 1))


def parse_str_list(value: Any) -> list[str]:
    """Comma-separated string or list of strings; blanks are dropped."""
    if isinstance(value, (list, tuple)):
        items = value
    else:
        items = str(value).split(",")
    return [str(item).strip() for item in items if str(item).strip()]


def parse_float_list(value: Any) -> list[float]:
    """A number, a list of numbers, or "a,b,c"."""
    if isinstance(value, (int, float)):
        return [float(value)]
    if isinstance(value, (list, tuple)):
        return [float(v) for v in value]
    return [float(part) for part in str(value).split(",") if part.strip()]


def parse_refinement(value: Any) -> list[list]:
    """
    Refinement schedule from "t:threshold" pairs.

    Examples:
        >>> parse_refinement("50:0.2,40:0.15")
        [[50, 0.2], [40, 0.15]]
    """
    if isinstance(value, (list, tuple)):
        return [[int(t), float(threshold)] for t, threshold in value]

    schedule = []
    for part in str(value).split(","):
        if not part.strip():
            continue
        t, sep, threshold = part.partition(":")
        try:
            if not sep:
                raise ValueError(part)
            schedule.append([int(t), float(threshold)])
        except ValueError as exc:
            raise ConfigError(f"invalid refinement entry '{part.strip()}' (expected t:threshold)") from exc
    return schedule


def resolve_objects(value: Any) -> list[str]:
    """Object category list; "all" expands to every known category."""
    names = [name.lower() for name in parse_str_list(value)]
    if names == ["all"]:
        return list_objects()
    unknown = [name for name in names if name not in OBJECT_PROFILES]
    if unknown:
        raise ConfigError(f"unknown object(s): {', '.join(unknown)}")
    return names


def normalize_settings(settings: dict) -> dict:
    """Turn list-valued settings into plain lists of the right type."""
    out = dict(settings)
    out["counts"] = parse_int_list(out["counts"], "counts")
    out["seeds"] = parse_int_list(out["seeds"], "seeds")
    if any(seed < 0 for seed in out["seeds"]):
        raise ConfigError(f"invalid value for seeds: {out['seeds']} (seeds must be >= 0)")
    out["variants"] = parse_str_list(out["variants"])
    out["objects"] = resolve_objects(out["objects"])
    out["alpha"] = parse_float_list(out["alpha"])
    out["guided_timesteps"] = [int(t) for t in out["guided_timesteps"]]
    out["refinement"] = [[int(t), float(threshold)] for t, threshold in out["refinement"]]
    return out


# =============================================================================
# LAYERING
# =============================================================================

def resolve_settings(preset: Optional[str] = None, config_path: Optional[str] = None,
                     overrides: Optional[dict] = None) -> dict:
    """
    Merge preset < config file < flags into one validated settings dict.

    A preset named inside the config file replaces the starting preset
    unless a preset was passed explicitly as a flag.

    Args:
        preset: Preset name; defaults to $COUNTCLUSTER_CONFIG, then "toy"
        config_path: Optional JSON/YAML config file
        overrides: Flag values; None entries are ignored

    Returns:
        Flat settings dict with list-valued keys normalized
    """
    flags = {key: value for key, value in (overrides or {}).items() if value is not None}
    validate_settings(flags, "flags")

    file_settings = {}
    if config_path:
        file_settings = read_config_file(config_path)
        validate_settings(file_settings, config_path)

    name = flags.get("preset") or file_settings.get("preset") or preset \
        or os.environ.get("COUNTCLUSTER_CONFIG") or DEFAULT_PRESET
    settings = preset_settings(name)
    if os.environ.get("COUNTCLUSTER_OUT"):
        settings["out"] = os.environ["COUNTCLUSTER_OUT"]
    settings.update(file_settings)
    settings.update(flags)
    settings["preset"] = name

    settings = normalize_settings(settings)
    validate_settings(settings, config_path or "preset")
    logger.debug("Resolved settings (preset=%s, file=%s): %s", name, config_path, settings)
    return settings


# =============================================================================
# BUILDERS
# =============================================================================

def smoothing_config(settings: dict) -> SmoothingConfig:
    if settings["kernel_size"] % 2 == 0:
        raise ConfigError(f"invalid value for --kernel-size: {settings['kernel_size']} is not odd")
    return SmoothingConfig(kernel_size=settings["kernel_size"], kernel_sigma=settings["kernel_sigma"])


def guidance_fields(settings: dict) -> dict:
    """Keyword arguments shared by every GuidanceConfig of a benchmark."""
    fields = {key: settings[key] for key in GUIDANCE_KEYS}
    fields["alpha"] = tuple(fields["alpha"])
    fields["guided_timesteps"] = tuple(sorted(set(fields["guided_timesteps"]), reverse=True))
    fields["refinement"] = tuple((int(t), float(threshold)) for t, threshold in fields["refinement"])
    fields["smoothing"] = smoothing_config(settings)
    return fields


def guidance_config(settings: dict, k: Optional[int] = None, **extra) -> GuidanceConfig:
    """GuidanceConfig for one target count (defaults to settings["k"])."""
    try:
        return GuidanceConfig(k=settings["k"] if k is None else k, **{**guidance_fields(settings), **extra})
    except ConfigError:
        raise
    except CountClusterError as exc:
        raise ConfigError(str(exc)) from exc
    except ValueError as exc:
        raise ConfigError(f"invalid guidance settings: {exc}") from exc


def sim_params(settings: dict) -> SimParams:
    return SimParams(
        size=settings["size"],
        blob_slots=settings["blob_slots"],
        noise0=float(settings["noise0"]),
        min_area=settings["min_area"],
        objects=tuple(settings["objects"]),
    )


def benchmark_spec(settings: dict, variants: Optional[list[str]] = None) -> BenchmarkSpec:
    """
    BenchmarkSpec from settings; ``variants`` overrides the configured list.
    Guidance settings are checked up front, before any run starts.
    """
    guidance_config(settings, k=min(settings["counts"]) if settings["counts"] else 1)
    return BenchmarkSpec(
        counts=tuple(settings["counts"]),
        seeds=tuple(settings["seeds"]),
        variants=tuple(settings["variants"] if variants is None else variants),
        sim=sim_params(settings),
        guidance=guidance_fields(settings),
    )


def public_settings(settings: dict) -> dict:
    """Settings as embedded in result.json, without the output directory."""
    return {key: value for key, value in sorted(settings.items()) if key != "out"}
