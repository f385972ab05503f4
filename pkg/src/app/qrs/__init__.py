from src.app.qrs.detector import (
    DetectionResult,
    PotentialPeaks,
    QrsDetector,
    RPeakSeries,
    detect,
    searchback_refine,
)
from src.app.qrs.filters import FeatureSignals, bandpass, check_polarity, feature_transform, moving_integration
from src.app.qrs.metrics import detection_metrics
from src.app.qrs.thresholds import DetectorThresholds, init_thresholds
