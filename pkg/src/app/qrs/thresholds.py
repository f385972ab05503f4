import logging
from dataclasses import dataclass, asdict

import numpy as np

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

SIGNAL_WEIGHT = 0.125
SEARCHBACK_WEIGHT = 0.25
THRESHOLD_FRACTION = 0.25


@dataclass
class DetectorThresholds:
    """Running dual thresholds on the integrated (I*) and bandpassed (F*) signals."""
    I1: float
    I2: float
    SPKI: float
    NPKI: float
    F1: float
    F2: float
    SPKF: float
    NPKF: float

    @property
    def degenerate(self) -> bool:
        return self.SPKI <= 0 and self.NPKI <= 0 and self.SPKF <= 0 and self.NPKF <= 0

    def snapshot(self) -> dict:
        return {key: float(value) for key, value in asdict(self).items()}

    # - - - - UPDATES - - - -

    def signal_peak(self, peak_i: float, peak_f: float, searchback: bool = False) -> None:
        weight = SEARCHBACK_WEIGHT if searchback else SIGNAL_WEIGHT
        self.SPKI = weight * peak_i + (1 - weight) * self.SPKI
        self.SPKF = weight * peak_f + (1 - weight) * self.SPKF
        self._refresh()

    def noise_peak(self, peak_i: float, peak_f: float) -> None:
        self.NPKI = SIGNAL_WEIGHT * peak_i + (1 - SIGNAL_WEIGHT) * self.NPKI
        self.NPKF = SIGNAL_WEIGHT * peak_f + (1 - SIGNAL_WEIGHT) * self.NPKF
        self._refresh()

    def _refresh(self) -> None:
        self.I1 = self.NPKI + THRESHOLD_FRACTION * (self.SPKI - self.NPKI)
        self.I2 = 0.5 * self.I1
        self.F1 = self.NPKF + THRESHOLD_FRACTION * (self.SPKF - self.NPKF)
        self.F2 = 0.5 * self.F1


def init_thresholds(integrated_2s: np.ndarray, bandpassed_2s: np.ndarray) -> DetectorThresholds:
    """
    Initial thresholds over the learning slice.

    I1 = max/3 and I2 = mean/2 of the integrated slice, with the running signal and
    noise estimates starting at I1 and I2. The F set uses the bandpassed slice the
    same way, taking the mean of its magnitude so the noise estimate stays non-negative.
    An all-zero slice gives all-zero thresholds (``degenerate``).
    """
    integrated_2s = np.asarray(integrated_2s, dtype=np.float64)
    bandpassed_2s = np.asarray(bandpassed_2s, dtype=np.float64)
    if integrated_2s.size == 0:
        return DetectorThresholds(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0)

    i1 = float(np.max(integrated_2s)) / 3
    i2 = 0.5 * float(np.mean(integrated_2s))
    f1 = max(float(np.max(bandpassed_2s)), 0.0) / 3
    f2 = 0.5 * float(np.mean(np.abs(bandpassed_2s)))

    thresholds = DetectorThresholds(I1=i1, I2=i2, SPKI=i1, NPKI=i2, F1=f1, F2=f2, SPKF=f1, NPKF=f2)
    if thresholds.degenerate:
        logger.warning("Learning slice is all zero; detector enters degenerate-guard mode")
    return thresholds
