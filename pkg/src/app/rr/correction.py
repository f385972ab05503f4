"""RR-interval artifact correction.

Intervals fall into four categories (extremely short, short, long, extremely long).
Extremely short intervals and short intervals beyond 2.05x the running mean are replaced
by a trailing moving average; long intervals are rebuilt from potential peaks of the
bandpassed ECG; extremely long intervals are flagged and left untouched.
"""
import logging
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np

from src.app.errors import DataError
from src.app.qrs.detector import PotentialPeaks, RPeakSeries

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

EXTREMELY_SHORT_MAX_S = 0.2
SHORT_MAX_S = 2.0
LONG_MAX_S = 10.0
SHORT_OUTLIER_FACTOR = 2.05
RECONSTRUCT_MIN_FACTOR = 0.6


class RrCategory(str, Enum):
    EXTREMELY_SHORT = 'extremely_short'
    SHORT = 'short'
    LONG = 'long'
    EXTREMELY_LONG = 'extremely_long'


@dataclass
class RrSeries:
    intervals: np.ndarray
    beat_times: np.ndarray
    fs: Optional[float] = None
    # set on series that already went through ``correct``
    annotations: Optional[np.ndarray] = None
    ma_seed: Optional[float] = None
    global_mean: Optional[float] = None

    def __post_init__(self) -> None:
        self.intervals = np.asarray(self.intervals, dtype=np.float64)
        self.beat_times = np.asarray(self.beat_times, dtype=np.float64)
        if len(self.beat_times) != len(self.intervals) + 1:
            raise DataError(f"{len(self.intervals)} intervals need {len(self.intervals) + 1} beat times, got {len(self.beat_times)}")
        if np.any(self.intervals <= 0):
            raise DataError("RR intervals must be positive")

    def __len__(self) -> int:
        return len(self.intervals)

    @classmethod
    def from_beat_times(cls, beat_times, fs: Optional[float] = None) -> "RrSeries":
        beat_times = np.asarray(beat_times, dtype=np.float64)
        if len(beat_times) < 2:
            raise DataError("fewer than 2 beats; no RR interval to form")
        return cls(np.diff(beat_times), beat_times, fs)

    @classmethod
    def from_intervals(cls, intervals, t0: float = 0.0, fs: Optional[float] = None) -> "RrSeries":
        intervals = np.asarray(intervals, dtype=np.float64)
        return cls(intervals, t0 + np.concatenate([[0.0], np.cumsum(intervals)]), fs)

    @classmethod
    def from_peaks(cls, peaks: RPeakSeries) -> "RrSeries":
        return cls.from_beat_times(peaks.times, peaks.fs)


@dataclass
class CorrectedRrSeries:
    intervals: np.ndarray
    beat_times: np.ndarray
    annotations: np.ndarray
    global_mean_rr: float
    ma_seed: Optional[float] = None
    fs: Optional[float] = None

    def __len__(self) -> int:
        return len(self.intervals)

    def counts(self) -> Dict[str, int]:
        labels, counts = np.unique(self.annotations, return_counts=True)
        return {str(label): int(count) for label, count in zip(labels, counts)}

    def as_rr(self) -> RrSeries:
        return RrSeries(self.intervals.copy(), self.beat_times.copy(), self.fs,
                        annotations=self.annotations.copy(), ma_seed=self.ma_seed,
                        global_mean=self.global_mean_rr)


def classify_interval(rr: float) -> RrCategory:
    if not rr > 0:
        raise DataError(f"RR interval must be positive, got {rr}")
    if rr <= EXTREMELY_SHORT_MAX_S:
        return RrCategory.EXTREMELY_SHORT
    if rr <= SHORT_MAX_S:
        return RrCategory.SHORT
    if rr <= LONG_MAX_S:
        return RrCategory.LONG
    return RrCategory.EXTREMELY_LONG


Piece = Tuple[List[float], str]


def _assemble(beat_times: np.ndarray, pieces: List[Piece]) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Join per-interval pieces into intervals, beat times and annotations.

    Beats bounding an input interval keep their recorded times. Reconstructed pieces add
    beats inside their own gap. A run of consecutive replaced intervals keeps its span and
    spreads its inner beats in proportion to the replacement values, so a replaced
    interval carries the moving-average value while the time axis stays anchored.
    """
    intervals: List[float] = []
    labels: List[str] = []
    times: List[float] = [float(beat_times[0])]
    i = 0
    while i < len(pieces):
        values, label = pieces[i]
        if label == 'replaced_ma':
            j = i
            while j < len(pieces) and pieces[j][1] == 'replaced_ma':
                j += 1
            run = np.array([pieces[k][0][0] for k in range(i, j)], dtype=np.float64)
            start, stop = float(beat_times[i]), float(beat_times[j])
            times.extend((start + (stop - start) * np.cumsum(run)[:-1] / run.sum()).tolist())
            times.append(stop)
            intervals.extend(run.tolist())
            labels.extend([label] * (j - i))
            i = j
            continue
        times.extend((float(beat_times[i]) + np.cumsum(values)[:-1]).tolist())
        times.append(float(beat_times[i + 1]))
        intervals.extend(float(v) for v in values)
        labels.extend([label] * len(values))
        i += 1
    return np.array(intervals, dtype=np.float64), np.array(times), np.array(labels, dtype=object)


def _annotations_of(series: RrSeries) -> np.ndarray:
    if series.annotations is not None:
        return np.asarray(series.annotations, dtype=object)
    return np.full(len(series), 'original', dtype=object)


def _ma_seed(series: RrSeries) -> float:
    if series.ma_seed is not None:
        return float(series.ma_seed)
    usable = series.intervals[(series.intervals > EXTREMELY_SHORT_MAX_S) & (series.intervals <= SHORT_MAX_S)]
    return float(np.median(usable)) if usable.size else float(np.mean(series.intervals))


def _global_mean(series: RrSeries) -> float:
    if series.global_mean is not None:
        return float(series.global_mean)
    usable = series.intervals[series.intervals <= SHORT_MAX_S]
    return float(np.mean(usable)) if usable.size else float('nan')


# ------------------- SHORT INTERVALS -------------------

def _replace_short(series: RrSeries, ma_window: int, mean_rule: str,
                   global_mean: float) -> Tuple[np.ndarray, np.ndarray]:
    annotations = _annotations_of(series)
    seed = _ma_seed(series)
    buffer = deque(maxlen=ma_window)
    out = series.intervals.copy()
    replaced = np.zeros(len(out), dtype=bool)

    for i, rr in enumerate(series.intervals):
        if annotations[i] == 'replaced_ma':
            buffer.append(rr)
            continue
        category = classify_interval(rr)
        if annotations[i] != 'original' or category in (RrCategory.LONG, RrCategory.EXTREMELY_LONG):
            continue

        moving = float(np.mean(buffer)) if buffer else seed
        reference = moving if mean_rule == 'local' else global_mean
        if category == RrCategory.EXTREMELY_SHORT or rr > SHORT_OUTLIER_FACTOR * reference:
            out[i] = moving
            replaced[i] = True
        buffer.append(out[i])
    return out, replaced


def correct_short(series: RrSeries, ma_window: int = 8, mean_rule: Literal['local', 'global'] = 'local') -> RrSeries:
    if len(series) == 0:
        raise DataError("empty RR series")
    values, replaced = _replace_short(series, ma_window, mean_rule, _global_mean(series))
    annotations = _annotations_of(series)
    annotations[replaced] = 'replaced_ma'
    intervals, beat_times, labels = _assemble(series.beat_times, [([v], a) for v, a in zip(values, annotations)])
    return RrSeries(intervals, beat_times, series.fs, annotations=labels, ma_seed=_ma_seed(series),
                    global_mean=series.global_mean)


# ------------------- LONG INTERVALS -------------------

def _candidate_offsets(start: float, end: float, pp_times: np.ndarray) -> np.ndarray:
    inside = pp_times[(pp_times > start + 1e-9) & (pp_times < end - 1e-9)]
    return inside - start


def split_long_interval(length: float, offsets: np.ndarray, global_mean: float) -> List[float]:
    """
    Sub-intervals of a long gap cut at the candidate offsets.

    Candidates closer than 0.6x the global mean to the previous kept cut are dropped; if
    the closing sub-interval ends up too short, trailing cuts are dropped until it is not.
    """
    minimum = RECONSTRUCT_MIN_FACTOR * global_mean
    kept: List[float] = []
    previous = 0.0
    for offset in np.sort(offsets):
        if offset - previous >= minimum:
            kept.append(float(offset))
            previous = float(offset)
    while kept and length - kept[-1] < minimum:
        kept.pop()
    cuts = np.array([0.0] + kept + [length])
    return list(np.diff(cuts))


def reconstruct_long(series: RrSeries, pp: PotentialPeaks, global_mean: float) -> RrSeries:
    if not global_mean > 0:
        raise DataError(f"global mean RR must be positive, got {global_mean}")
    annotations = _annotations_of(series)
    pieces: List[Piece] = []
    for i, rr in enumerate(series.intervals):
        if annotations[i] == 'original' and classify_interval(rr) == RrCategory.LONG:
            offsets = _candidate_offsets(series.beat_times[i], series.beat_times[i + 1], pp.times)
            if offsets.size:
                pieces.append((split_long_interval(rr, offsets, global_mean), 'reconstructed'))
                continue
        pieces.append(([float(rr)], annotations[i]))
    intervals, beat_times, labels = _assemble(series.beat_times, pieces)
    return RrSeries(intervals, beat_times, series.fs, annotations=labels, ma_seed=series.ma_seed,
                    global_mean=global_mean)


# ------------------- ORCHESTRATION -------------------

def correct(series: RrSeries, pp: PotentialPeaks, ma_window: int = 8,
            mean_rule: Literal['local', 'global'] = 'local') -> CorrectedRrSeries:
    """
    Run the four-category correction.

    One pass: every input interval is classified once and mapped to its pieces, and the
    recorded beat times stay the anchors of the output time axis. A series coming out of
    a previous pass (``CorrectedRrSeries.as_rr``) keeps every non-original interval and
    every long interval as they are.
    """
    if len(series) == 0:
        raise DataError("empty RR series")

    annotations_in = _annotations_of(series)
    already_corrected = series.annotations is not None
    global_mean = _global_mean(series)
    seed = _ma_seed(series)

    replaced_values, replaced = _replace_short(series, ma_window, mean_rule, global_mean)

    pieces: List[Piece] = []
    for i, rr in enumerate(series.intervals):
        category = classify_interval(rr)
        if annotations_in[i] != 'original':
            pieces.append(([float(rr)], annotations_in[i]))
        elif category == RrCategory.EXTREMELY_LONG:
            pieces.append(([float(rr)], 'excluded_gap'))
        elif category == RrCategory.LONG:
            cuts = (np.empty(0) if already_corrected
                    else _candidate_offsets(series.beat_times[i], series.beat_times[i + 1], pp.times))
            if cuts.size:
                pieces.append((split_long_interval(rr, cuts, global_mean), 'reconstructed'))
            else:
                pieces.append(([float(rr)], 'original'))
        elif replaced[i]:
            pieces.append(([float(replaced_values[i])], 'replaced_ma'))
        else:
            pieces.append(([float(rr)], 'original'))

    intervals, beat_times, labels = _assemble(series.beat_times, pieces)
    corrected = CorrectedRrSeries(intervals, beat_times, labels, global_mean, seed, series.fs)
    logger.info(f"RR correction over {len(series)} intervals: {corrected.counts()}")
    return corrected
