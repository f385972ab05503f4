import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.interpolate import CubicSpline

from src.app.errors import DataError
from src.app.rr.correction import CorrectedRrSeries, RrSeries
from src.app.schemas import PreprocessConfig

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


@dataclass
class HrSegment:
    values: np.ndarray
    t0: float
    epoch_id: str = ""
    fs: float = 4.0

    @property
    def duration(self) -> float:
        return len(self.values) / self.fs


@dataclass
class HrWindow:
    values: np.ndarray
    epoch_id: str
    label: int
    label_kind: Literal['strong', 'weak'] = 'strong'
    normalized: bool = False
    start_s: float = 0.0


@dataclass
class EpochWindows:
    epoch_id: str
    windows: List[HrWindow] = field(default_factory=list)
    n_segments: int = 0
    n_windows_total: int = 0
    n_windows_rejected: int = 0


# ------------------- SEGMENTATION -------------------

def split_on_gaps(series: CorrectedRrSeries, max_rr: float = 4.0) -> List[RrSeries]:
    """Maximal runs of intervals with no interval above ``max_rr`` and no excluded gap."""
    bad = (series.intervals > max_rr) | (np.asarray(series.annotations) == 'excluded_gap')
    segments: List[RrSeries] = []
    start = 0
    for stop in list(np.flatnonzero(bad)) + [len(series.intervals)]:
        if stop > start:
            segments.append(RrSeries(series.intervals[start:stop], series.beat_times[start:stop + 1], series.fs))
        start = stop + 1
    return segments


def resample_4hz(seg: RrSeries, interp_fs: float = 256.0, out_fs: float = 4.0, epoch_id: str = "") -> HrSegment:
    """
    Resample the tachogram (RR value at its closing beat time) onto a uniform grid.

    Linear interpolation onto an ``interp_fs`` grid is followed by a natural cubic spline
    evaluated every ``1/out_fs`` seconds.
    """
    times = seg.beat_times[1:]
    values = seg.intervals
    span = times[-1] - times[0] if len(times) else 0.0
    if span < 1.0:
        raise DataError(f"segment spans {span:.3f} s; too short to interpolate")

    dense_t = times[0] + np.arange(int(np.floor(span * interp_fs)) + 1) / interp_fs
    dense_v = np.interp(dense_t, times, values)
    spline = CubicSpline(dense_t, dense_v, bc_type='natural')

    grid = times[0] + np.arange(int(np.floor(span * out_fs)) + 1) / out_fs
    grid = grid[grid <= dense_t[-1]]
    return HrSegment(values=spline(grid), t0=float(times[0]), epoch_id=epoch_id, fs=out_fs)


def make_windows(seg: HrSegment, win: float = 300.0, overlap: float = 0.8, label: int = 0,
                 label_kind: Literal['strong', 'weak'] = 'strong') -> List[HrWindow]:
    if not 0 <= overlap < 1:
        raise DataError(f"overlap must lie in [0, 1), got {overlap}")
    size = int(round(win * seg.fs))
    stride = max(1, int(round(win * (1 - overlap) * seg.fs)))
    if len(seg.values) < size:
        return []
    starts = range(0, len(seg.values) - size + 1, stride)
    return [
        HrWindow(values=seg.values[s:s + size].copy(), epoch_id=seg.epoch_id, label=label,
                 label_kind=label_kind, start_s=seg.t0 + s / seg.fs)
        for s in starts
    ]


def reject_noisy(ws: Iterable[HrWindow], sd_max: float = 0.12) -> List[HrWindow]:
    return [w for w in ws if float(np.std(w.values)) <= sd_max]


def group_by_epoch(ws: Iterable[HrWindow]) -> Dict[str, List[HrWindow]]:
    groups: Dict[str, List[HrWindow]] = {}
    for w in ws:
        groups.setdefault(w.epoch_id, []).append(w)
    return groups


def filter_epochs(groups: Dict[str, List[HrWindow]], min_windows: int = 10) -> Dict[str, List[HrWindow]]:
    kept = {epoch: ws for epoch, ws in groups.items() if len(ws) >= min_windows}
    dropped = sorted(set(groups) - set(kept))
    if dropped:
        logger.info(f"Dropped {len(dropped)} epochs with fewer than {min_windows} windows: {dropped}")
    return kept


# ------------------- EPOCH PIPELINE -------------------

def preprocess_epoch(corrected: CorrectedRrSeries, epoch_id: str, label: int,
                     label_kind: Literal['strong', 'weak'] = 'strong',
                     cfg: Optional[PreprocessConfig] = None) -> EpochWindows:
    """Split on gaps, resample, window and drop noisy windows for one one-hour epoch."""
    cfg = cfg or PreprocessConfig()
    result = EpochWindows(epoch_id=epoch_id)
    for seg in split_on_gaps(corrected, cfg.max_rr_s):
        try:
            hr = resample_4hz(seg, cfg.interp_fs, cfg.out_fs, epoch_id)
        except DataError as e:
            logger.info(f"{epoch_id}: skipping segment ({e})")
            continue
        result.n_segments += 1
        windows = make_windows(hr, cfg.window_s, cfg.overlap, label, label_kind)
        kept = reject_noisy(windows, cfg.sd_max)
        result.n_windows_total += len(windows)
        result.n_windows_rejected += len(windows) - len(kept)
        result.windows.extend(kept)

    logger.info(
        f"{epoch_id}: {result.n_segments} segments, {result.n_windows_total} windows, "
        f"{result.n_windows_rejected} rejected as noisy"
    )
    return result


def availability_report(runs: Dict[str, List[EpochWindows]], min_windows: int = 10) -> pd.DataFrame:
    """Per-detector counts of epochs and windows surviving preprocessing."""
    rows = []
    for name, epochs in runs.items():
        retained = [e for e in epochs if len(e.windows) >= min_windows]
        rows.append({
            "detector": name,
            "epochs_total": len(epochs),
            "epochs_retained": len(retained),
            "windows_total": sum(e.n_windows_total for e in epochs),
            "windows_retained": sum(len(e.windows) for e in retained),
        })
    return pd.DataFrame(rows, columns=["detector", "epochs_total", "epochs_retained", "windows_total", "windows_retained"])


def split_epochs(epoch_labels: Dict[str, int], val_fraction: float = 0.2,
                 seed: int = 7) -> Tuple[List[str], List[str]]:
    """Stratified epoch-level train/validation split."""
    rng = np.random.default_rng(seed)
    train, val = [], []
    for label in sorted(set(epoch_labels.values())):
        ids = sorted(e for e, lab in epoch_labels.items() if lab == label)
        rng.shuffle(ids)
        n_val = int(round(val_fraction * len(ids))) if len(ids) >= 2 else 0
        n_val = min(max(n_val, 1 if len(ids) >= 2 else 0), len(ids) - 1)
        val.extend(ids[:n_val])
        train.extend(ids[n_val:])
    if not train or not val:
        raise DataError(f"cannot split {len(epoch_labels)} epochs into non-empty train and validation sets")
    return sorted(train), sorted(val)
