"""Service configuration: one YAML or JSON file plus environment overrides.

Environment variables named STIR_SERVICE_<FIELD> (upper-cased field name)
override the file value; booleans accept 1/0/true/false/yes/no.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, fields
from pathlib import Path

import yaml

from .errors import ConfigError

ENV_PREFIX = "STIR_SERVICE_"

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigError(f"cannot parse boolean from {raw!r}")


@dataclass(frozen=True)
class BackendConfig:
    embed_model_id: str = ""
    scorer_model_id: str = ""
    device: str = "cpu"
    frame_root: str = ""
    stub_mode: bool = True
    fixture: str = ""  # stub mode: canned vectors/logits live here
    host: str = "127.0.0.1"
    port: int = 8080

    def __post_init__(self):
        if self.stub_mode:
            if not self.fixture:
                raise ConfigError("stub_mode requires a fixture file path")
            if not Path(self.fixture).is_file():
                raise ConfigError(f"fixture file not found: {self.fixture}")
        else:
            if not self.embed_model_id or not self.scorer_model_id:
                raise ConfigError("real mode requires embed_model_id and scorer_model_id")
            if not self.frame_root:
                raise ConfigError("real mode requires frame_root")
            if not Path(self.frame_root).is_dir():
                raise ConfigError(f"frame_root does not exist: {self.frame_root}")

    @classmethod
    def from_dict(cls, data: dict) -> "BackendConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        merged = dict(data)
        for f in fields(cls):
            env = os.environ.get(ENV_PREFIX + f.name.upper())
            if env is None:
                continue
            if f.type in ("bool", bool):
                merged[f.name] = _parse_bool(env)
            elif f.type in ("int", int):
                merged[f.name] = int(env)
            else:
                merged[f.name] = env
        return cls(**merged)

    @classmethod
    def from_file(cls, path: str | Path) -> "BackendConfig":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            if path.suffix in (".yaml", ".yml"):
                data = yaml.safe_load(text)
            else:
                data = json.loads(text)
        except (yaml.YAMLError, ValueError) as exc:
            raise ConfigError(f"config {path} is not valid YAML/JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must contain a mapping")
        return cls.from_dict(data)
