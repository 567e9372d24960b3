"""Configuration loading, preset lookup and output-directory settings.

Configs are JSON documents. A top-level ``kind`` of ``"scenario"`` or
``"sweep"`` selects the schema; without it, a document holding ``variable``
is read as a sweep. Result files written by this package are accepted too:
their embedded manifest carries the full config.
"""

from __future__ import annotations

import copy
import json
import logging
import os
from collections.abc import Mapping, MutableMapping
from pathlib import Path
from typing import Any

from dotenv import find_dotenv, load_dotenv
from pydantic import TypeAdapter, ValidationError

from .errors import (
    ConfigSyntaxError,
    InvariantViolationError,
    MissingFileError,
    UnknownKeyError,
)
from .logging_config import diagnostics_logger
from .schemas import ConfigDocument, ScenarioConfig, SweepSpec
from .tools.results_io import config_echo, is_result_file, parse_manifest

logger = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "RINGQKD_OUTPUT_DIR"
PRESET_DIR = Path(__file__).resolve().parent / "presets"

_DOCUMENT_ADAPTER: TypeAdapter[ScenarioConfig | SweepSpec] = TypeAdapter(ConfigDocument)
_UNION_TAGS = {"scenario", "sweep", "mrr", "mzi"}
# Upper bound on strip-and-retry rounds in lenient parsing.
_MAX_LENIENT_PASSES = 32

_dotenv_loaded = False


def _ensure_dotenv() -> None:
    global _dotenv_loaded
    if not _dotenv_loaded:
        load_dotenv(find_dotenv(usecwd=True), override=False)
        _dotenv_loaded = True


def output_dir() -> Path | None:
    """Directory that relative ``--out`` paths resolve against, if set."""

    _ensure_dotenv()
    configured = os.getenv(OUTPUT_DIR_ENV, "").strip()
    return Path(configured).expanduser() if configured else None


def resolve_output_path(path: Path) -> Path:
    base = output_dir()
    if base is None or path.is_absolute():
        return path
    return base / path


def preset_names() -> list[str]:
    return sorted(path.stem for path in PRESET_DIR.glob("*.json"))


def resolve_config_path(name_or_path: str | Path) -> Path:
    """Return an existing file path or the path of a shipped preset."""

    candidate = Path(name_or_path)
    if candidate.exists():
        return candidate
    preset = PRESET_DIR / f"{candidate.stem}.json"
    bare_name = candidate.suffix in {"", ".json"} and candidate.parent == Path(".")
    if bare_name and preset.exists():
        return preset
    raise MissingFileError(
        f"config not found: {name_or_path} (presets: {', '.join(preset_names())})"
    )


def _key_path(data: Any, loc: tuple[int | str, ...]) -> str:
    """Join a pydantic error location, dropping union tags, into ``a.b.c``."""

    parts: list[str] = []
    current = data
    for item in loc:
        if isinstance(current, Mapping):
            if item in current:
                parts.append(str(item))
                current = current[item]
                continue
            if item in _UNION_TAGS:
                continue
            parts.append(str(item))
            current = None
        elif isinstance(current, list) and isinstance(item, int):
            parts.append(str(item))
            current = current[item] if item < len(current) else None
        elif item not in _UNION_TAGS:
            parts.append(str(item))
    return ".".join(parts)


def _drop_key(data: MutableMapping[str, Any], path: list[str]) -> None:
    current: Any = data
    for part in path[:-1]:
        current = current.get(part) if isinstance(current, Mapping) else None
    if isinstance(current, MutableMapping):
        current.pop(path[-1], None)


def parse_config_data(
    data: Any, *, strict: bool = False, source: str = "<config>"
) -> ScenarioConfig | SweepSpec:
    """Validate decoded JSON into a scenario or sweep.

    Unknown keys fail in strict mode; otherwise they are dropped with a
    diagnostic naming each one.
    """

    if not isinstance(data, dict):
        raise ConfigSyntaxError(f"{source}: top level must be a JSON object")
    document = copy.deepcopy(data)

    for _ in range(_MAX_LENIENT_PASSES):
        try:
            return _DOCUMENT_ADAPTER.validate_python(document)
        except ValidationError as exc:
            errors = exc.errors()
            unknown = [error for error in errors if error["type"] == "extra_forbidden"]
            if unknown and strict:
                key_path = _key_path(document, unknown[0]["loc"])
                raise UnknownKeyError(
                    f"{source}: unknown key {key_path!r}", key_path=key_path
                ) from exc
            if not unknown:
                first = errors[0]
                key_path = _key_path(document, first["loc"])
                raise InvariantViolationError(
                    f"{source}: {key_path or '<root>'}: {first['msg']}",
                    key_path=key_path,
                ) from exc
            for error in unknown:
                key_path = _key_path(document, error["loc"])
                diagnostics_logger().warning(
                    "%s: ignoring unknown key %r", source, key_path
                )
                _drop_key(document, key_path.split("."))
    raise ConfigSyntaxError(f"{source}: too many unknown keys")


def parse_config_text(
    text: str, *, strict: bool = False, source: str = "<config>"
) -> ScenarioConfig | SweepSpec:
    if is_result_file(text):
        manifest = parse_manifest(text.splitlines())
        return parse_config_data(manifest.config, strict=strict, source=source)
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigSyntaxError(
            f"{source}: invalid JSON at line {exc.lineno} "
            f"column {exc.colno}: {exc.msg}",
            key_path=f"line {exc.lineno}",
        ) from exc
    return parse_config_data(data, strict=strict, source=source)


def parse_config(
    name_or_path: str | Path, *, strict: bool = False
) -> ScenarioConfig | SweepSpec:
    """Load a config file, preset name or result file."""

    path = resolve_config_path(name_or_path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise MissingFileError(f"cannot read config {path}: {exc.strerror}") from exc
    config = parse_config_text(text, strict=strict, source=str(path))
    logger.debug("Loaded %s config from %s", config.kind, path)
    return config


def serialize_config(config: ScenarioConfig | SweepSpec) -> str:
    """Resolved config as indented JSON that parses back to an equal config."""

    return json.dumps(config_echo(config), indent=2) + "\n"


def with_overrides(
    config: ScenarioConfig | SweepSpec,
    *,
    seed: int | None = None,
    mode: str | None = None,
) -> ScenarioConfig | SweepSpec:
    """Apply command-line overrides and re-run validation."""

    if seed is None and mode is None:
        return config
    data = config_echo(config)
    target = data["base"] if isinstance(config, SweepSpec) else data
    if seed is not None:
        target["seed"] = seed
    if mode is not None:
        target["mode"] = mode
    return parse_config_data(data, strict=True, source="<command line>")


__all__ = [
    "OUTPUT_DIR_ENV",
    "PRESET_DIR",
    "output_dir",
    "parse_config",
    "parse_config_data",
    "parse_config_text",
    "preset_names",
    "resolve_config_path",
    "resolve_output_path",
    "serialize_config",
    "with_overrides",
]
