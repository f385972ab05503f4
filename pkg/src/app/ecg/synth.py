"""Synthetic single-lead ECG with exact beat annotations.

Beats are placed on a jittered schedule and rendered with a fixed Q-R-S-T template
built from Gaussian bumps; artifacts are painted over the finished trace.
"""
import logging
from dataclasses import dataclass, field
from typing import List, Literal, Tuple

import numpy as np

from src.app.ecg.records import EcgRecord
from src.app.errors import ConfigError
from src.app.schemas import SynthParams

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# (amplitude mV, offset s, width s) relative to the R peak
QRST_TEMPLATE = (
    (-0.08, -0.022, 0.006),  # Q
    (1.00, 0.000, 0.009),    # R
    (-0.20, 0.024, 0.008),   # S
    (0.22, 0.240, 0.040),    # T
)
TEMPLATE_SPAN_S = 0.45
SPIKE_BURST_HZ = 10.0
WANDER_HZ = 0.3


@dataclass
class GroundTruthBeats:
    r_times: np.ndarray
    polarity: Literal['upright', 'inverted'] = 'upright'
    injected_artifacts: List[Tuple[str, float, float]] = field(default_factory=list)

    @property
    def intervals(self) -> np.ndarray:
        return np.diff(self.r_times)


def qrst_template(t_rel: np.ndarray, rr: float = 0.5) -> np.ndarray:
    """Template value at times relative to the R peak; the T wave moves with the RR interval."""
    wave = np.zeros_like(t_rel, dtype=np.float64)
    for amplitude, offset, width in QRST_TEMPLATE:
        if width > 0.02:
            offset = min(offset, 0.45 * rr)
        wave += amplitude * np.exp(-0.5 * ((t_rel - offset) / width) ** 2)
    return wave


def beat_schedule(p: SynthParams, rng: np.random.Generator) -> np.ndarray:
    mean_rr = 60.0 / p.hr_bpm
    n_max = int(np.ceil(p.duration / mean_rr)) + 2
    jitter = rng.normal(0.0, p.hrv_sd, size=n_max) if p.hrv_sd > 0 else np.zeros(n_max)
    jitter = np.clip(jitter, -3 * p.hrv_sd, 3 * p.hrv_sd)
    intervals = mean_rr + jitter
    times = 0.5 * mean_rr + np.concatenate([[0.0], np.cumsum(intervals[:-1])])
    return times[times <= p.duration - 0.25 * mean_rr]


def _apply_artifacts(samples: np.ndarray, t: np.ndarray, p: SynthParams, rng: np.random.Generator) -> None:
    # zero segments are painted last so they stay exactly zero
    ordered = sorted(p.artifacts, key=lambda a: a.kind == 'zero')
    for art in ordered:
        span = (t >= art.t_start) & (t < art.t_end)
        local_t = t[span] - art.t_start
        if art.kind == 'spike':
            samples[span] += art.amplitude_mv * np.sin(2 * np.pi * SPIKE_BURST_HZ * local_t)
        elif art.kind == 'wander':
            samples[span] += 0.5 * art.amplitude_mv * np.sin(2 * np.pi * WANDER_HZ * local_t)
        elif art.kind == 'noise':
            samples[span] += rng.normal(0.0, art.amplitude_mv / 5.0, size=int(span.sum()))
        elif art.kind == 'zero':
            samples[span] = 0.0


def synth_ecg(p: SynthParams) -> Tuple[EcgRecord, GroundTruthBeats]:
    for art in p.artifacts:
        if art.t_end > p.duration:
            raise ConfigError(
                f"artifact window [{art.t_start}, {art.t_end}] s outside record duration {p.duration} s"
            )

    rng = np.random.default_rng(p.seed)
    r_times = beat_schedule(p, rng)

    n = int(round(p.duration * p.fs))
    t = np.arange(n) / p.fs
    samples = np.zeros(n, dtype=np.float64)
    half = int(TEMPLATE_SPAN_S * p.fs)
    mean_rr = 60.0 / p.hr_bpm
    for r in r_times:
        centre = int(round(r * p.fs))
        lo, hi = max(0, centre - half), min(n, centre + half + 1)
        samples[lo:hi] += qrst_template(t[lo:hi] - r, mean_rr)

    if p.noise_sd > 0:
        samples += rng.normal(0.0, p.noise_sd, size=n)
    _apply_artifacts(samples, t, p, rng)

    if p.polarity == 'inverted':
        samples = -samples

    logger.info(f"Synthesised {len(r_times)} beats over {p.duration} s at {p.fs} Hz ({p.polarity})")
    truth = GroundTruthBeats(
        r_times=r_times,
        polarity=p.polarity,
        injected_artifacts=[(a.kind, a.t_start, a.t_end) for a in p.artifacts],
    )
    return EcgRecord(samples, p.fs), truth
