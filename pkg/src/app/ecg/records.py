import io
import logging
from dataclasses import dataclass
from typing import BinaryIO, Union

import numpy as np
import pandas as pd

from src.app.errors import DataError

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)


@dataclass
class EcgRecord:
    samples: np.ndarray
    fs: float
    channel: str = "ECG"
    t0: float = 0.0

    def __post_init__(self) -> None:
        if not self.fs > 0:
            raise DataError(f"invalid sampling rate {self.fs}")
        self.samples = np.asarray(self.samples, dtype=np.float64)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.fs

    def scaled(self, factor: float) -> "EcgRecord":
        return EcgRecord(self.samples * factor, self.fs, self.channel, self.t0)


def read_ecg_csv(source: Union[BinaryIO, bytes], channel: str = "ECG") -> EcgRecord:
    """
    Parse an ECG CSV stream.

    Line 1 carries ``fs=<float>``, line 2 the ``sample_mv`` header and every following
    line one sample.
    """
    raw = source if isinstance(source, bytes) else source.read()
    text = raw.decode("utf-8")
    first, _, body = text.partition("\n")

    first = first.strip()
    if not first.startswith("fs="):
        raise DataError("missing fs header")
    try:
        fs = float(first[3:])
    except ValueError:
        raise DataError(f"invalid sampling rate '{first[3:]}'")
    if not np.isfinite(fs) or fs <= 0:
        raise DataError("invalid sampling rate")

    if not body.strip():
        raise DataError("no samples")
    frame = pd.read_csv(io.StringIO(body), dtype=str)
    if "sample_mv" not in frame.columns:
        raise DataError("missing sample_mv column")
    values = pd.to_numeric(frame["sample_mv"].str.strip(), errors="coerce")
    if values.isna().any():
        row = int(np.flatnonzero(values.isna().to_numpy())[0])
        raise DataError(f"non-numeric sample at row {row + 1}")
    if len(values) == 0:
        raise DataError("no samples")
    if len(values) < 2:
        raise DataError("fewer than 2 samples")

    logger.info(f"Read {len(values)} samples at {fs} Hz")
    return EcgRecord(values.to_numpy(dtype=np.float64), fs, channel)


def write_ecg_csv(record: EcgRecord, sink: BinaryIO) -> None:
    body = pd.DataFrame({"sample_mv": record.samples}).to_csv(index=False, float_format="%.9g")
    sink.write(f"fs={record.fs:g}\n".encode("utf-8"))
    sink.write(body.encode("utf-8"))
