import json
import logging
from pathlib import Path
from typing import Any, Dict, Tuple, Union

import numpy as np

from src.app.errors import DataError

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
META_KEY = "__meta__"


def save_checkpoint(path: Union[str, Path], state: Dict[str, np.ndarray], meta: Dict[str, Any]) -> Path:
    """Write named arrays plus a JSON metadata entry to a single ``.npz`` file."""
    path = Path(path)
    header = json.dumps({"format_version": FORMAT_VERSION, **meta}, default=str)
    with open(path, "wb") as fh:
        np.savez(fh, **{name: np.asarray(value) for name, value in state.items()}, **{META_KEY: np.array(header)})
    logger.info(f"Saved checkpoint with {len(state)} arrays to {path}")
    return path


def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"checkpoint not found: {path}")
    with np.load(path, allow_pickle=False) as archive:
        if META_KEY not in archive.files:
            raise DataError(f"{path} is not a toolkit checkpoint")
        meta = json.loads(str(archive[META_KEY]))
        state = {name: archive[name] for name in archive.files if name != META_KEY}
    if meta.get("format_version") != FORMAT_VERSION:
        raise DataError(f"unsupported checkpoint format {meta.get('format_version')} (expected {FORMAT_VERSION})")
    return state, meta
