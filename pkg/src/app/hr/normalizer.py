import logging
from dataclasses import dataclass, asdict, replace
from typing import Iterable, Literal, Optional

import numpy as np

from src.app.errors import DataError
from src.app.hr.pipeline import HrWindow

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Normalizer:
    """Affine window normalizer fitted on the training split.

    ``minmax`` maps the pooled 5th/95th percentiles to 0/1 (no clipping); ``zscore``
    uses the pooled mean and standard deviation.
    """
    p5: float
    p95: float
    method: Literal['minmax', 'zscore'] = 'minmax'
    mean: Optional[float] = None
    sd: Optional[float] = None

    def __post_init__(self) -> None:
        if not self.p5 < self.p95:
            raise DataError(f"degenerate normalizer: p5={self.p5} is not below p95={self.p95}")
        if self.method == 'zscore' and not (self.sd or 0) > 0:
            raise DataError("degenerate normalizer: zero standard deviation")

    @property
    def offset(self) -> float:
        return self.p5 if self.method == 'minmax' else self.mean

    @property
    def scale(self) -> float:
        return self.p95 - self.p5 if self.method == 'minmax' else self.sd

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (np.asarray(values, dtype=np.float64) - self.offset) / self.scale

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "Normalizer":
        return cls(**data)


def fit_normalizer(train_ws: Iterable[HrWindow], method: Literal['minmax', 'zscore'] = 'minmax') -> Normalizer:
    values = [np.asarray(w.values, dtype=np.float64) for w in train_ws]
    pooled = np.concatenate(values) if values else np.array([])
    if np.unique(pooled).size < 2:
        raise DataError("degenerate training pool: fewer than 2 distinct values")

    p5, p95 = np.percentile(pooled, [5, 95])
    if not p5 < p95:
        raise DataError(f"degenerate training pool: p5 == p95 == {p5}")
    normalizer = Normalizer(float(p5), float(p95), method, float(np.mean(pooled)), float(np.std(pooled)))
    logger.info(f"Fitted {method} normalizer on {pooled.size} values: p5={p5:.4f}, p95={p95:.4f}")
    return normalizer


def normalize(w: HrWindow, n: Normalizer) -> HrWindow:
    if w.normalized:
        raise DataError(f"window of epoch {w.epoch_id} at {w.start_s} s is already normalized")
    return replace(w, values=n.apply(w.values), normalized=True)
