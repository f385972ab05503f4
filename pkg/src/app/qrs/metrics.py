from typing import List, Tuple, TypedDict

import numpy as np


class DetectionMetrics(TypedDict):
    tp: int
    fp: int
    fn: int
    sensitivity: float
    ppv: float
    mean_error_ms: float
    max_error_ms: float


def match_beats(detected: np.ndarray, reference: np.ndarray, tolerance_s: float = 0.05) -> List[Tuple[int, int]]:
    """One-to-one matching of detections to reference beats, nearest first, within the tolerance."""
    detected = np.asarray(detected, dtype=np.float64)
    used = np.zeros(len(detected), dtype=bool)
    pairs = []
    for j, ref in enumerate(np.asarray(reference, dtype=np.float64)):
        k = int(np.searchsorted(detected, ref))
        best = None
        for c in (k - 1, k):
            if 0 <= c < len(detected) and not used[c] and abs(detected[c] - ref) <= tolerance_s:
                if best is None or abs(detected[c] - ref) < abs(detected[best] - ref):
                    best = c
        if best is not None:
            used[best] = True
            pairs.append((best, j))
    return pairs


def detection_metrics(detected_times: np.ndarray, reference_times: np.ndarray,
                      tolerance_s: float = 0.05) -> DetectionMetrics:
    detected_times = np.asarray(detected_times, dtype=np.float64)
    reference_times = np.asarray(reference_times, dtype=np.float64)
    pairs = match_beats(detected_times, reference_times, tolerance_s)

    tp = len(pairs)
    fp = len(detected_times) - tp
    fn = len(reference_times) - tp
    errors = np.array([abs(detected_times[d] - reference_times[r]) for d, r in pairs]) * 1000.0

    return DetectionMetrics(
        tp=tp,
        fp=fp,
        fn=fn,
        sensitivity=tp / len(reference_times) if len(reference_times) else float('nan'),
        ppv=tp / len(detected_times) if len(detected_times) else float('nan'),
        mean_error_ms=float(errors.mean()) if tp else float('nan'),
        max_error_ms=float(errors.max()) if tp else float('nan'),
    )
