"""Post-hoc attention statistics: rollout relevance, attention distance and normalized entropy."""
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import entr

from src.app.errors import DataError
from src.app.hr.pipeline import HrWindow
from src.app.model.hrvconformer import HRVConformer
from src.app.nn.tensor import no_grad

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-6


@dataclass
class AttnStack:
    """Attention maps of shape (n_layers, n_samples, n_heads, L', L')."""
    maps: np.ndarray
    patch_samples: int
    window_samples: int
    class_token: bool = False

    def __post_init__(self) -> None:
        maps = np.asarray(self.maps, dtype=np.float64)
        if maps.ndim == 4:
            maps = maps[:, None]
        if maps.ndim != 5 or maps.shape[-1] != maps.shape[-2]:
            raise DataError(f"attention stack must be (layers, samples, heads, L, L), got {maps.shape}")
        self.maps = maps

    @property
    def n_layers(self) -> int:
        return self.maps.shape[0]

    @property
    def n_samples(self) -> int:
        return self.maps.shape[1]

    @property
    def n_heads(self) -> int:
        return self.maps.shape[2]

    @property
    def n_patches(self) -> int:
        return self.maps.shape[-1] - (1 if self.class_token else 0)

    def check_stochastic(self, tol: float = ROW_TOLERANCE) -> None:
        worst = float(np.max(np.abs(self.maps.sum(axis=-1) - 1.0)))
        if worst > tol or np.any(self.maps < -tol):
            raise DataError(f"attention rows are not stochastic (max row-sum error {worst:.2e})")

    def patch_block(self) -> np.ndarray:
        """Patch-to-patch attention with rows renormalized once the class token is removed."""
        if not self.class_token:
            return self.maps
        block = self.maps[..., 1:, 1:]
        return block / block.sum(axis=-1, keepdims=True)


@dataclass
class AttnStats:
    distance_mean: np.ndarray  # (n_layers, n_heads), input samples
    distance_sd: np.ndarray
    entropy_mean: np.ndarray   # (n_layers, n_heads), normalized to [0, 1]
    entropy_sd: np.ndarray
    relevance: np.ndarray      # (n_samples, n_patches)


# ------------------- ROLLOUT -------------------

def rollout_from_layers(layers: np.ndarray, class_token: bool = False) -> np.ndarray:
    """
    Relevance over input patches for one sample.

    ``layers`` is (n_layers, H, L, L) or (n_layers, L, L). Heads are averaged, each layer is
    mixed with the identity as 0.5*A + 0.5*I and row-renormalized, and the layer matrices are
    multiplied from the first layer up. The readout is the class-token row when present,
    otherwise the mean over rows. The result is min-max scaled to [0, 1]; a flat result is all ones.
    """
    layers = np.asarray(layers, dtype=np.float64)
    if layers.ndim == 4:
        layers = layers.mean(axis=1)
    length = layers.shape[-1]
    if np.max(np.abs(layers.sum(axis=-1) - 1.0)) > ROW_TOLERANCE:
        raise DataError("rollout needs row-stochastic attention")

    rolled = np.eye(length)
    for attn in layers:
        mixed = 0.5 * attn + 0.5 * np.eye(length)
        mixed = mixed / mixed.sum(axis=-1, keepdims=True)
        rolled = mixed @ rolled

    if class_token:
        relevance = rolled[0, 1:]
    else:
        relevance = rolled.mean(axis=0)
    span = relevance.max() - relevance.min()
    if span <= 1e-15:
        return np.ones_like(relevance)
    return (relevance - relevance.min()) / span


def rollout(stack: AttnStack) -> np.ndarray:
    """Per-sample rollout relevance, shape (n_samples, n_patches)."""
    stack.check_stochastic()
    return np.stack([
        rollout_from_layers(stack.maps[:, s], stack.class_token) for s in range(stack.n_samples)
    ])


# ------------------- DISTANCE / ENTROPY -------------------

def _distance_per_sample(stack: AttnStack, patch_samples: int) -> np.ndarray:
    block = stack.patch_block()
    length = block.shape[-1]
    pos = np.arange(length)
    gap = np.abs(pos[:, None] - pos[None, :]) * patch_samples
    # (layers, samples, heads): mean over queries of the weighted distance
    return (block * gap).sum(axis=-1).mean(axis=-1)


def attn_distance(stack: AttnStack, patch_samples: Optional[int] = None) -> np.ndarray:
    """Mean attention distance in input samples per (layer, head)."""
    per_sample = _distance_per_sample(stack, patch_samples or stack.patch_samples)
    return per_sample.mean(axis=1)


def _entropy_per_sample(stack: AttnStack) -> np.ndarray:
    n = stack.maps.shape[-1]
    if n < 2:
        raise DataError(f"normalized entropy needs at least 2 keys, got {n}")
    row_entropy = entr(np.clip(stack.maps, 0.0, None)).sum(axis=-1) / np.log(n)
    return row_entropy.mean(axis=-1)


def attn_entropy(stack: AttnStack):
    """Normalized attention entropy per (layer, head): (mean, sd) across samples."""
    per_sample = _entropy_per_sample(stack)
    return per_sample.mean(axis=1), per_sample.std(axis=1)


def compute_stats(stack: AttnStack) -> AttnStats:
    stack.check_stochastic()
    distance = _distance_per_sample(stack, stack.patch_samples)
    entropy = _entropy_per_sample(stack)
    return AttnStats(
        distance_mean=distance.mean(axis=1),
        distance_sd=distance.std(axis=1),
        entropy_mean=entropy.mean(axis=1),
        entropy_sd=entropy.std(axis=1),
        relevance=rollout(stack),
    )


# ------------------- COLLECTION / TABLES -------------------

def collect_attention(model: HRVConformer, windows: Sequence[HrWindow], batch_size: int = 64,
                      max_windows: Optional[int] = None) -> AttnStack:
    """Run ``model`` in inference mode over ``windows`` and stack its attention maps."""
    windows = list(windows)[:max_windows] if max_windows else list(windows)
    if not windows:
        raise DataError("no windows to collect attention from")
    values = np.stack([w.values for w in windows])
    was_training = model.training
    model.eval()
    maps = []
    try:
        with no_grad():
            for start in range(0, len(values), batch_size):
                maps.append(model(values[start:start + batch_size]).attn_maps)
    finally:
        model.train(was_training)
    cfg = model.cfg
    logger.info(f"Collected attention from {len(values)} windows over {cfg.n_layers} layers")
    return AttnStack(np.concatenate(maps, axis=1), cfg.patch_samples, cfg.window_samples, cfg.head == 'class_token')


def stats_frame(stats: AttnStats) -> pd.DataFrame:
    rows = []
    n_layers, n_heads = stats.distance_mean.shape
    for layer in range(n_layers):
        for head in range(n_heads):
            rows.append({"layer": layer, "head": head, "metric": "distance",
                         "mean": stats.distance_mean[layer, head], "sd": stats.distance_sd[layer, head]})
            rows.append({"layer": layer, "head": head, "metric": "entropy",
                         "mean": stats.entropy_mean[layer, head], "sd": stats.entropy_sd[layer, head]})
    return pd.DataFrame(rows, columns=["layer", "head", "metric", "mean", "sd"])


def relevance_frame(relevance: np.ndarray, patch_samples: int) -> pd.DataFrame:
    """Relevance expanded to window sample indices (mean and sd across windows)."""
    relevance = np.atleast_2d(relevance)
    per_sample_mean = np.repeat(relevance.mean(axis=0), patch_samples)
    per_sample_sd = np.repeat(relevance.std(axis=0), patch_samples)
    return pd.DataFrame({
        "sample": np.arange(per_sample_mean.size),
        "patch": np.arange(per_sample_mean.size) // patch_samples,
        "relevance_mean": per_sample_mean,
        "relevance_sd": per_sample_sd,
    })
