"""
Flat experiment config files.

One ``key = value`` pair per line, ``#`` starts a comment, dotted keys nest:

    network.layer_sizes = 4, 12, 12, 2
    network.activations = tanh, tanh
    network.seed = 7
    loss = squared
    train.eps = 0.05
    data.source = gaussian_blobs

Values stay strings (pydantic coerces them); comma-separated values and the
list-valued keys become lists.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict

from pydantic import ValidationError

from src.composite_opt.api.schemas import ExperimentConfig
from src.composite_opt.core.errors import ConfigError

logger = logging.getLogger(__name__)

LIST_KEYS = {"network.layer_sizes", "network.activations"}
KEY_ALIASES = {"data.source": "data.kind", "baseline.method": "baseline.kind"}


def _value(key: str, raw: str) -> Any:
    if key in LIST_KEYS:
        return [item.strip() for item in raw.split(",") if item.strip()]
    if "," in raw:
        return [item.strip() for item in raw.split(",")]
    return raw


def parse_config_text(text: str) -> Dict[str, Any]:
    """Turn the flat text into a nested dict, rejecting malformed or repeated keys."""
    nested: Dict[str, Any] = {}
    seen: set[str] = set()
    for number, line in enumerate(text.splitlines(), start=1):
        content = line.split("#", 1)[0].strip()
        if not content:
            continue
        if "=" not in content:
            raise ConfigError(f"expected 'key = value', got '{content}'", line=number)
        key, raw = (part.strip() for part in content.split("=", 1))
        key = KEY_ALIASES.get(key, key)
        parts = key.split(".")
        if not key or any(not part for part in parts):
            raise ConfigError(f"invalid key '{key}'", line=number)
        if key in seen:
            raise ConfigError(f"duplicate key '{key}'", line=number)
        seen.add(key)

        node = nested
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"'{part}' is both a value and a section", line=number)
            node = child
        if isinstance(node.get(parts[-1]), dict):
            raise ConfigError(f"'{key}' is both a value and a section", line=number)
        node[parts[-1]] = _value(key, raw)
    return nested


def load_experiment_config(path: Path | str) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    try:
        config = ExperimentConfig.model_validate(parse_config_text(text))
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    logger.info(f"[CLI] Loaded config {path} ({config.train.algorithm.value}, data={config.data.kind})")
    return config
