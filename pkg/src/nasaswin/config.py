"""Plain-text ``key=value`` configuration files.

Model keys are the :class:`ModelConfig` field names; training keys are the
:class:`TrainConfig` field names. Dotted aliases: ``cms.enabled``,
``cms.max_subset`` and ``cmfe.embed_dim`` (which sets ``stage_dims`` to
C, 2C, 4C, 8C). Lines starting with ``#`` and blank lines are ignored.
"""
from __future__ import annotations

from dataclasses import fields
from pathlib import Path
from typing import Dict, Tuple

from .errors import ConfigurationError
from .model import ModelConfig
from .train import TrainConfig

ALIASES = {"cms.enabled": "cms_enabled", "cms.max_subset": "cms_max_subset", "steps": "max_steps"}


def parse_kv(text: str, origin: str = "<config>") -> Dict[str, str]:
    out: Dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigurationError(f"{origin}:{lineno}: expected key=value, got {line!r}")
        key = key.strip().lower()
        if key in out:
            raise ConfigurationError(f"{origin}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def split_config(values: Dict[str, str], origin: str = "<config>") -> Tuple[ModelConfig, TrainConfig]:
    model_keys = {f.name for f in fields(ModelConfig)}
    train_keys = {f.name for f in fields(TrainConfig)}
    model_part, train_part = {}, {}
    for key, value in values.items():
        key = ALIASES.get(key, key)
        if key == "cmfe.embed_dim":
            c = int(value)
            dims = ",".join(str(c * 2**i) for i in range(4))
            if "stage_dims" in values and values["stage_dims"].replace(" ", "") != dims:
                raise ConfigurationError(f"{origin}: cmfe.embed_dim={c} conflicts with stage_dims={values['stage_dims']}")
            model_part["stage_dims"] = dims
        elif key in model_keys:
            model_part[key] = value
        elif key in train_keys:
            train_part[key] = value
        else:
            raise ConfigurationError(f"{origin}: unknown key {key!r}")
    try:
        return ModelConfig.from_dict(model_part), TrainConfig.from_dict(train_part)
    except ValueError as exc:
        if isinstance(exc, ConfigurationError):
            raise
        raise ConfigurationError(f"{origin}: {exc}") from exc


def load_config(path) -> Tuple[ModelConfig, TrainConfig]:
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config {path} not found")
    return split_config(parse_kv(path.read_text(), str(path)), str(path))


def dump_config(model_cfg: ModelConfig, train_cfg: TrainConfig) -> str:
    lines = [f"{k}={v}" for k, v in model_cfg.to_dict().items()]
    lines += [f"{k}={v}" for k, v in train_cfg.to_dict().items()]
    return "\n".join(lines) + "\n"
