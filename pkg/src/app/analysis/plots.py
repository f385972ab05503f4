import logging
from pathlib import Path
from typing import Optional

import matplotlib

matplotlib.use('Agg')
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from src.app.analysis.attention_stats import AttnStats  # noqa: E402
from src.app.ecg.records import EcgRecord  # noqa: E402
from src.app.qrs.detector import DetectionResult  # noqa: E402

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


def plot_detection(rec: EcgRecord, result: DetectionResult, path: Path, seconds: Optional[float] = 20.0) -> Path:
    """Bandpassed signal with accepted and potential peaks over the first ``seconds``."""
    bp = result.features.bandpassed
    n = len(bp) if seconds is None else min(len(bp), int(seconds * rec.fs))
    t = rec.t0 + np.arange(n) / rec.fs

    plt.close('all')
    fig, ax = plt.subplots(figsize=(15, 4))
    ax.plot(t, bp[:n], color='salmon', linewidth=0.8, label='bandpassed')
    pot = result.potential.indices[result.potential.indices < n]
    acc = result.peaks.indices[result.peaks.indices < n]
    ax.scatter(t[pot], bp[pot], c='grey', s=15, marker='x', zorder=4, label='potential')
    ax.scatter(t[acc], bp[acc], c='black', s=40, marker='o', zorder=5, label='R-peak')
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Amplitude")
    ax.grid(True, linestyle='--', alpha=0.6)
    ax.legend(loc='upper right')
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_attention_heatmaps(stats: AttnStats, path: Path) -> Path:
    fig, axes = plt.subplots(1, 2, figsize=(12, 4))
    for ax, values, title in ((axes[0], stats.distance_mean, "Mean attention distance (samples)"),
                              (axes[1], stats.entropy_mean, "Normalized attention entropy")):
        image = ax.imshow(values, aspect='auto', cmap='viridis')
        ax.set_title(title, fontsize=10)
        ax.set_xlabel("Head")
        ax.set_ylabel("Layer")
        fig.colorbar(image, ax=ax)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)


def plot_relevance(values: np.ndarray, relevance: np.ndarray, patch_samples: int, fs: float, path: Path) -> Path:
    """Window trace coloured by its per-patch rollout relevance."""
    t = np.arange(len(values)) / fs
    fig, ax = plt.subplots(figsize=(15, 4))
    ax.plot(t, values, color='black', linewidth=0.8)
    for patch, weight in enumerate(relevance):
        ax.axvspan(patch * patch_samples / fs, (patch + 1) * patch_samples / fs,
                   color='red', alpha=0.05 + 0.45 * float(weight), linewidth=0)
    ax.set_xlabel("Time (s)")
    ax.set_ylabel("Normalized HR")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
