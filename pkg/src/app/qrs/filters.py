import logging
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np
from scipy.signal import butter, sosfiltfilt

from src.app.ecg.records import EcgRecord
from src.app.errors import ConfigError, DataError
from src.app.schemas import DetectorConfig

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# five-point derivative, (fs / 8) * [1, 2, 0, -2, -1]
DERIVATIVE_TAPS = np.array([1.0, 2.0, 0.0, -2.0, -1.0]) / 8.0


@dataclass
class FeatureSignals:
    bandpassed: np.ndarray
    derivative: np.ndarray
    squared: np.ndarray
    integrated: np.ndarray
    integration_window: int
    delays: Dict[str, int] = field(default_factory=dict)


def bandpass(rec: EcgRecord, cfg: DetectorConfig) -> np.ndarray:
    """
    Zero-phase Butterworth bandpass between ``cfg.band_low`` and ``cfg.band_high``.

    A second-order section design of order ``cfg.filter_order`` per edge (4th order at
    the default) is run forward and backward, so the output carries no group delay.
    """
    nyquist = rec.fs / 2
    if cfg.band_high >= nyquist or cfg.band_low >= nyquist:
        raise ConfigError(f"band edges [{cfg.band_low}, {cfg.band_high}] Hz must lie below Nyquist {nyquist} Hz")

    sos = butter(cfg.filter_order, [cfg.band_low, cfg.band_high], btype='bandpass', fs=rec.fs, output='sos')
    padlen = 3 * (2 * len(sos) + 1)
    if len(rec.samples) <= padlen:
        raise DataError(f"record of {len(rec.samples)} samples is shorter than the filter warm-up ({padlen})")
    return sosfiltfilt(sos, rec.samples)


def check_polarity(bandpassed: np.ndarray, learning_period_s: float, fs: float,
                   ratio: float = 1.2) -> Tuple[np.ndarray, bool]:
    """Flip the signal when the learning window is dominated by a negative deflection."""
    window = bandpassed[: int(round(learning_period_s * fs))]
    if window.size == 0:
        return bandpassed, False
    peak_up = abs(float(np.max(window)))
    peak_down = abs(float(np.min(window)))
    if peak_down > ratio * peak_up:
        logger.info(f"Negative QRS polarity detected (|min|={peak_down:.4g}, |max|={peak_up:.4g}); flipping")
        return -bandpassed, True
    return bandpassed, False


def five_point_derivative(signal: np.ndarray, fs: float) -> np.ndarray:
    # edge padding: flat input has no slope at the boundaries either
    padded = np.pad(signal, 2, mode='edge')
    return fs * np.convolve(padded, DERIVATIVE_TAPS, mode='valid')


def moving_integration(squared: np.ndarray, width: int) -> np.ndarray:
    """Centred moving mean of ``width`` samples (zero beyond the edges)."""
    return np.convolve(squared, np.full(width, 1.0 / width), mode='same')


def feature_transform(bandpassed: np.ndarray, fs: float, cfg: DetectorConfig) -> FeatureSignals:
    width = int(round(cfg.integration_window_ms * fs / 1000.0))
    if width < 1:
        raise ConfigError(f"integration window of {cfg.integration_window_ms} ms is below one sample at {fs} Hz")
    if width > len(bandpassed):
        raise DataError(f"integration window ({width} samples) longer than signal ({len(bandpassed)} samples)")

    derivative = five_point_derivative(bandpassed, fs)
    squared = derivative ** 2
    integrated = moving_integration(squared, width)

    return FeatureSignals(
        bandpassed=bandpassed,
        derivative=derivative,
        squared=squared,
        integrated=integrated,
        integration_window=width,
        # delays a causal realization would introduce; all stages here are re-centred
        delays={"bandpass": 0, "derivative": 2, "squared": 0, "integration": (width - 1) // 2},
    )
