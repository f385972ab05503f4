import hashlib
import json
import logging
import os
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union

from pydantic import ValidationError

from src.app.errors import ConfigError, DataError, config_error_from_validation
from src.app.schemas import RunConfig
from src.config import PRESETS_DIR, THREAD_ENV_VARS

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


# ------------------- REPRODUCIBILITY -------------------

def set_deterministic(enabled: bool) -> None:
    """Pin BLAS/OpenMP pools to one thread so reductions run in a fixed order."""
    if not enabled:
        return
    for var in THREAD_ENV_VARS:
        os.environ[var] = '1'
    logger.info("Deterministic mode: numeric thread pools pinned to 1")


def sha256_file(path: Union[str, Path], chunk_size: int = 1 << 20) -> str:
    digest = hashlib.sha256()
    try:
        with open(path, 'rb') as fh:
            for chunk in iter(lambda: fh.read(chunk_size), b''):
                digest.update(chunk)
    except OSError as e:
        raise DataError(f"cannot read {path}: {e.strerror}")
    return digest.hexdigest()


@contextmanager
def timed(label: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        logger.info(f"{label} took {time.perf_counter() - start:.2f} s")


# ------------------- CONFIGURATION -------------------

def _parse_value(raw: str) -> Any:
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Apply ``section.field=value`` overrides; values are parsed as JSON when possible."""
    for item in overrides or ():
        key, sep, raw = item.partition('=')
        if not sep or not key:
            raise ConfigError(f"override '{item}' is not of the form section.field=value")
        node = data
        parts = key.split('.')
        for part in parts[:-1]:
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override '{key}': '{part}' is not a section")
            node = child
        node[parts[-1]] = _parse_value(raw)
    return data


def read_json(path: Union[str, Path]) -> Dict[str, Any]:
    try:
        with open(path, 'r', encoding='utf-8') as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e.msg} (line {e.lineno})")
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must hold a JSON object")
    return data


def deep_merge(base: Dict[str, Any], extra: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in extra.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def preset_path(name: str) -> Path:
    path = Path(name)
    if path.suffix == '.json' and path.exists():
        return path
    candidate = Path(PRESETS_DIR) / f"{name}.json"
    if not candidate.exists():
        available = sorted(p.stem for p in Path(PRESETS_DIR).glob('*.json'))
        raise ConfigError(f"unknown preset '{name}'; available: {available}")
    return candidate


def load_run_config(config_path: Optional[str] = None, preset: Optional[str] = None,
                    overrides: Iterable[str] = (), seed: Optional[int] = None) -> RunConfig:
    """Layer preset, config file and ``--set`` overrides, then validate into a RunConfig."""
    data: Dict[str, Any] = {}
    if preset:
        data = deep_merge(data, read_json(preset_path(preset)))
    if config_path:
        data = deep_merge(data, read_json(config_path))
    data = apply_overrides(data, overrides)
    if seed is not None:
        for section in ('synth', 'train'):
            data.setdefault(section, {})['seed'] = seed
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise config_error_from_validation(e)
