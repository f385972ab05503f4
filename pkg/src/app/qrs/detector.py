import logging
from collections import deque
from dataclasses import dataclass, field
from typing import List, Literal, Optional, Tuple

import numpy as np
from scipy.signal import find_peaks

from src.app.ecg.records import EcgRecord
from src.app.errors import DataError
from src.app.qrs.filters import FeatureSignals, bandpass, check_polarity, feature_transform
from src.app.qrs.thresholds import DetectorThresholds, init_thresholds
from src.app.schemas import DetectorConfig

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

RR_HISTORY = 8
TWAVE_SLOPE_RATIO = 0.5


@dataclass
class RPeakSeries:
    indices: np.ndarray
    times: np.ndarray
    source: Literal['raw', 'bandpass'] = 'bandpass'
    fs: float = 256.0

    @classmethod
    def from_indices(cls, indices, fs: float, t0: float = 0.0, source: str = 'bandpass') -> "RPeakSeries":
        indices = np.asarray(indices, dtype=np.int64)
        return cls(indices=indices, times=t0 + indices / fs, source=source, fs=fs)

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class PotentialPeaks:
    indices: np.ndarray
    times: np.ndarray
    fs: float = 256.0

    def __len__(self) -> int:
        return len(self.indices)


@dataclass
class DetectionResult:
    peaks: RPeakSeries
    potential: PotentialPeaks
    features: FeatureSignals
    flipped: bool = False
    resets: int = 0
    trajectory: List[dict] = field(default_factory=list)


def _ms_to_samples(ms: float, fs: float) -> int:
    return int(round(ms * fs / 1000.0))


def searchback_refine(peaks: np.ndarray, signal: np.ndarray, window_ms: float, fs: float,
                      refractory_ms: float = 200.0, t0: float = 0.0,
                      source: str = 'bandpass') -> RPeakSeries:
    """
    Snap each peak to the maximum of ``signal`` within +-window_ms/2.

    The window is clipped at the signal boundaries. Refined peaks that collide or fall
    within the refractory period of the previous one keep whichever has the larger value.
    """
    half = _ms_to_samples(window_ms, fs) // 2
    refractory = _ms_to_samples(refractory_ms, fs)
    n = len(signal)

    kept: List[int] = []
    for p in np.asarray(peaks, dtype=np.int64):
        lo, hi = max(0, int(p) - half), min(n, int(p) + half + 1)
        if lo >= hi:
            continue
        snapped = lo + int(np.argmax(signal[lo:hi]))
        if kept and snapped - kept[-1] < max(refractory, 1):
            if signal[snapped] > signal[kept[-1]]:
                kept[-1] = snapped
            continue
        kept.append(snapped)
    return RPeakSeries.from_indices(kept, fs, t0, source)


class QrsDetector:
    """Pan-Tompkins style dual-threshold QRS detector with the neonatal enhancements.

    Enhancements (each switchable in DetectorConfig): polarity correction, threshold
    reset after ``reset_timeout_s`` without a beat, zero-segment skipping, and search-back
    refinement on the bandpassed signal instead of the raw ECG.
    """

    def __init__(self, cfg: Optional[DetectorConfig] = None) -> None:
        self.cfg = cfg or DetectorConfig()

    def detect(self, rec: EcgRecord) -> DetectionResult:
        cfg = self.cfg
        fs = rec.fs
        learn = int(round(cfg.learning_period_s * fs))
        if len(rec) < learn:
            raise DataError(f"record of {rec.duration:.2f} s is shorter than the {cfg.learning_period_s} s learning period")

        bp = bandpass(rec, cfg)
        flipped = False
        if cfg.polarity_check:
            bp, flipped = check_polarity(bp, cfg.learning_period_s, fs, cfg.polarity_ratio)
        features = feature_transform(bp, fs, cfg)

        if not np.any(features.integrated > cfg.zero_floor):
            logger.warning("Record carries no signal above the zero floor; returning no beats")
            empty = np.array([], dtype=np.int64)
            return DetectionResult(
                peaks=RPeakSeries.from_indices(empty, fs, rec.t0),
                potential=PotentialPeaks(empty, empty.astype(np.float64), fs),
                features=features,
                flipped=flipped,
            )

        accepted, resets, trajectory = self._scan(rec, features)

        refine_signal = bp if cfg.refine_source == 'bandpass' else rec.samples
        peaks = searchback_refine(np.array(accepted, dtype=np.int64), refine_signal, cfg.searchback_window_ms,
                                  fs, cfg.refractory_ms, rec.t0, cfg.refine_source)
        potential = self.potential_peaks(bp, peaks, fs, rec.t0)

        logger.info(f"Detected {len(peaks)} beats ({len(potential)} potential peaks, {resets} resets, flipped={flipped})")
        return DetectionResult(peaks, potential, features, flipped, resets, trajectory)

    # ------------------- THRESHOLD SCAN -------------------

    def _scan(self, rec: EcgRecord, features: FeatureSignals) -> Tuple[List[int], int, List[dict]]:
        cfg = self.cfg
        fs = rec.fs
        integ, bp, deriv = features.integrated, features.bandpassed, features.derivative
        n = len(integ)
        half_w = features.integration_window // 2
        learn = int(round(cfg.learning_period_s * fs))
        refractory = max(1, _ms_to_samples(cfg.refractory_ms, fs))
        twave = _ms_to_samples(cfg.twave_window_ms, fs)
        reset_after = int(round(cfg.reset_timeout_s * fs))
        dead = self._dead_mask(rec, half_w) if cfg.zero_skip else None

        def amplitude(p: int) -> float:
            return float(np.max(bp[max(0, p - half_w): p + half_w + 1]))

        def slope(p: int) -> float:
            return float(np.max(np.abs(deriv[max(0, p - half_w): p + half_w + 1])))

        def record(p: int, event: str, th: DetectorThresholds) -> None:
            trajectory.append({"index": int(p), "event": event, **th.snapshot()})

        def window_thresholds(p: int) -> DetectorThresholds:
            lo, hi = max(0, p - learn // 2), min(n, p + learn // 2)
            return init_thresholds(integ[lo:hi], bp[lo:hi])

        candidates, _ = find_peaks(integ, distance=refractory)
        th = init_thresholds(integ[:learn], bp[:learn])
        trajectory: List[dict] = []
        record(0, "init", th)

        accepted: List[int] = []
        rr = deque(maxlen=RR_HISTORY)
        noise_since: List[int] = []
        last_slope: Optional[float] = None
        last_reset = 0
        resets = 0

        def accept(p: int, searchback: bool = False) -> None:
            nonlocal last_slope
            if accepted:
                rr.append(p - accepted[-1])
            accepted.append(p)
            th.signal_peak(float(integ[p]), amplitude(p), searchback=searchback)
            last_slope = slope(p)
            record(p, "searchback" if searchback else "signal", th)

        for p in candidates:
            p = int(p)
            peak_i = float(integ[p])
            if cfg.zero_skip and (peak_i < cfg.zero_floor or dead[p]):
                continue

            if th.degenerate:
                th = window_thresholds(p)
                last_reset, resets = p, resets + 1
                record(p, "reset", th)
                if th.degenerate:
                    continue

            last_qrs = accepted[-1] if accepted else None
            anchor = max(last_qrs if last_qrs is not None else 0, last_reset)

            if cfg.threshold_reset and p - anchor > reset_after:
                th = window_thresholds(p)
                last_reset, resets = p, resets + 1
                noise_since = []
                record(p, "reset", th)
            elif last_qrs is not None and rr and p - last_qrs > cfg.rr_missed_factor * np.mean(rr):
                pool = [c for c in noise_since if c - last_qrs >= refractory]
                if pool:
                    best = max(pool, key=lambda c: integ[c])
                    if integ[best] >= th.I2 and amplitude(best) >= th.F2:
                        accept(best, searchback=True)
                        noise_since = [c for c in noise_since if c > best]

            last_qrs = accepted[-1] if accepted else None
            peak_f = amplitude(p)
            if peak_i >= th.I1 and peak_f >= th.F1:
                is_twave = (
                    last_qrs is not None
                    and p - last_qrs < twave
                    and last_slope is not None
                    and slope(p) < TWAVE_SLOPE_RATIO * last_slope
                )
                if is_twave:
                    th.noise_peak(peak_i, peak_f)
                    noise_since.append(p)
                    record(p, "twave", th)
                else:
                    accept(p)
                    noise_since = []
            else:
                th.noise_peak(peak_i, peak_f)
                noise_since.append(p)
                record(p, "noise", th)

        if resets:
            logger.info(f"Thresholds re-initialised {resets} times")
        return accepted, resets, trajectory

    def _dead_mask(self, rec: EcgRecord, half_w: int) -> np.ndarray:
        """True where the raw record is flat at the zero floor over the whole integration window."""
        flat = (np.abs(rec.samples) <= self.cfg.zero_floor).astype(np.float64)
        width = 2 * half_w + 1
        coverage = np.convolve(flat, np.ones(width), mode='same')
        return coverage >= width - 0.5

    # ------------------- POTENTIAL PEAKS -------------------

    def potential_peaks(self, bp: np.ndarray, peaks: RPeakSeries, fs: float, t0: float = 0.0) -> PotentialPeaks:
        distance = max(1, _ms_to_samples(self.cfg.potential_window, fs))
        local, _ = find_peaks(bp, distance=distance, height=max(self.cfg.zero_floor, np.finfo(float).tiny))
        indices = np.union1d(local, peaks.indices).astype(np.int64)
        return PotentialPeaks(indices=indices, times=t0 + indices / fs, fs=fs)


def detect(rec: EcgRecord, cfg: Optional[DetectorConfig] = None) -> Tuple[RPeakSeries, PotentialPeaks, FeatureSignals]:
    result = QrsDetector(cfg).detect(rec)
    return result.peaks, result.potential, result.features
