"""Every on-disk format the toolkit reads or writes, one store per output directory."""
import io
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.app.ecg.records import EcgRecord, read_ecg_csv, write_ecg_csv
from src.app.ecg.synth import GroundTruthBeats
from src.app.errors import ConfigError, DataError
from src.app.hr.pipeline import HrWindow
from src.app.nn.checkpoint import load_checkpoint, save_checkpoint
from src.app.qrs.detector import RPeakSeries
from src.app.rr.correction import SHORT_MAX_S, CorrectedRrSeries
from src.app.schemas import RunManifest

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"
ECG_SUFFIX = ".ecg.csv"
BEATS_SUFFIX = ".beats.csv"
PEAKS_SUFFIX = ".peaks.csv"
RR_SUFFIX = ".rr.csv"
WINDOWS_SUFFIX = ".windows.csv"
THRESHOLDS_SUFFIX = ".thresholds.json"


def stem_of(path: Union[str, Path], suffix: str) -> str:
    name = Path(path).name
    return name[: -len(suffix)] if name.endswith(suffix) else Path(path).stem


class ArtifactStore:
    def __init__(self, out_dir: Union[str, Path], force: bool = False) -> None:
        self.out_dir = Path(out_dir)
        self.force = force
        self.written: List[str] = []

    # - - - - DIRECTORY - - - -

    def prepare(self) -> "ArtifactStore":
        """Create the directory; refuse to reuse one holding a run unless ``force`` is set."""
        manifest = self.out_dir / MANIFEST
        if manifest.exists():
            if not self.force:
                raise ConfigError(f"{self.out_dir} already holds a run; pass --force to overwrite it")
            self._clear_previous(manifest)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        return self

    def _clear_previous(self, manifest: Path) -> None:
        try:
            previous = json.loads(manifest.read_text(encoding='utf-8'))
        except (OSError, json.JSONDecodeError):
            previous = {}
        for name in previous.get('extra', {}).get('outputs', []):
            (self.out_dir / name).unlink(missing_ok=True)
        manifest.unlink()
        logger.info(f"Overwriting previous run in {self.out_dir}")

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def _track(self, name: str) -> Path:
        if name not in self.written:
            self.written.append(name)
        return self.path(name)

    # - - - - ECG / BEATS - - - -

    def write_ecg(self, name: str, record: EcgRecord) -> Path:
        target = self._track(f"{name}{ECG_SUFFIX}")
        with open(target, 'wb') as fh:
            write_ecg_csv(record, fh)
        return target

    @staticmethod
    def read_ecg(path: Union[str, Path]) -> EcgRecord:
        try:
            with open(path, 'rb') as fh:
                return read_ecg_csv(fh, channel=stem_of(path, ECG_SUFFIX))
        except OSError as e:
            raise DataError(f"cannot read {path}: {e.strerror}")

    def write_beats(self, name: str, beats: GroundTruthBeats) -> Path:
        target = self._track(f"{name}{BEATS_SUFFIX}")
        pd.DataFrame({"r_time_s": beats.r_times}).to_csv(target, index=False, float_format="%.9g")
        return target

    @staticmethod
    def read_beats(path: Union[str, Path]) -> np.ndarray:
        frame = _read_table(path, ["r_time_s"])
        return frame["r_time_s"].to_numpy(dtype=np.float64)

    # - - - - DETECTION - - - -

    def write_peaks(self, name: str, peaks: RPeakSeries) -> Path:
        target = self._track(f"{name}{PEAKS_SUFFIX}")
        pd.DataFrame({"index": peaks.indices, "time_s": peaks.times}).to_csv(target, index=False, float_format="%.9g")
        return target

    @staticmethod
    def read_peaks(path: Union[str, Path], fs: float) -> RPeakSeries:
        frame = _read_table(path, ["index", "time_s"])
        return RPeakSeries(frame["index"].to_numpy(dtype=np.int64), frame["time_s"].to_numpy(dtype=np.float64), fs=fs)

    def write_thresholds(self, name: str, trajectory: Sequence[dict]) -> Path:
        return self.write_json(f"{name}{THRESHOLDS_SUFFIX}", {"events": list(trajectory)})

    def write_rr(self, name: str, corrected: CorrectedRrSeries) -> Path:
        """One row per interval, keyed by the beat time that closes it."""
        target = self._track(f"{name}{RR_SUFFIX}")
        pd.DataFrame({
            "beat_time_s": corrected.beat_times[1:],
            "rr_s": corrected.intervals,
            "annotation": corrected.annotations,
        }).to_csv(target, index=False, float_format="%.9g")
        return target

    @staticmethod
    def read_rr(path: Union[str, Path]) -> CorrectedRrSeries:
        frame = _read_table(path, ["beat_time_s", "rr_s", "annotation"])
        if frame.empty:
            raise DataError(f"{path} holds no RR intervals")
        intervals = frame["rr_s"].to_numpy(dtype=np.float64)
        closing = frame["beat_time_s"].to_numpy(dtype=np.float64)
        beat_times = np.concatenate([[closing[0] - intervals[0]], closing])
        short = intervals[intervals <= SHORT_MAX_S]
        global_mean = float(short.mean()) if short.size else float(intervals.mean())
        return CorrectedRrSeries(intervals, beat_times, frame["annotation"].astype(str).to_numpy(dtype=object), global_mean)

    # - - - - WINDOWS - - - -

    def write_windows(self, epoch_id: str, windows: Sequence[HrWindow]) -> Path:
        """``epoch_id,label,label_kind`` header and values, then one window per row."""
        target = self._track(f"{epoch_id}{WINDOWS_SUFFIX}")
        label = windows[0].label if windows else -1
        kind = windows[0].label_kind if windows else 'strong'
        buffer = io.StringIO()
        buffer.write("epoch_id,label,label_kind\n")
        buffer.write(f"{epoch_id},{label},{kind}\n")
        if windows:
            pd.DataFrame(np.stack([w.values for w in windows])).to_csv(buffer, index=False, header=False, float_format="%.9g")
        target.write_text(buffer.getvalue(), encoding='utf-8')
        return target

    @staticmethod
    def read_windows(path: Union[str, Path]) -> List[HrWindow]:
        try:
            text = Path(path).read_text(encoding='utf-8')
        except OSError as e:
            raise DataError(f"cannot read {path}: {e.strerror}")
        lines = text.split("\n", 2)
        if len(lines) < 2 or lines[0].strip() != "epoch_id,label,label_kind":
            raise DataError(f"{path} is not a window store file")
        epoch_id, label, kind = lines[1].strip().split(",")
        body = lines[2] if len(lines) > 2 else ""
        if not body.strip():
            return []
        values = pd.read_csv(io.StringIO(body), header=None).to_numpy(dtype=np.float64)
        return [HrWindow(values=row, epoch_id=epoch_id, label=int(label), label_kind=kind) for row in values]

    @classmethod
    def read_window_dir(cls, directory: Union[str, Path]) -> List[HrWindow]:
        files = sorted(Path(directory).glob(f"*{WINDOWS_SUFFIX}"))
        if not files:
            raise DataError(f"no window files in {directory}")
        windows: List[HrWindow] = []
        for f in files:
            windows.extend(cls.read_windows(f))
        logger.info(f"Loaded {len(windows)} windows from {len(files)} epoch files")
        return windows

    # - - - - TABLES / JSON - - - -

    def write_table(self, name: str, frame: pd.DataFrame) -> Path:
        target = self._track(name)
        frame.to_csv(target, index=False)
        return target

    def write_json(self, name: str, payload: Any) -> Path:
        target = self._track(name)
        target.write_text(json.dumps(payload, indent=2, default=_json_default), encoding='utf-8')
        return target

    def save_checkpoint(self, name: str, state: Dict[str, np.ndarray], meta: Dict[str, Any]) -> Path:
        return save_checkpoint(self._track(name), state, meta)

    @staticmethod
    def load_checkpoint(path: Union[str, Path]) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
        return load_checkpoint(path)

    def figure_path(self, name: str) -> Path:
        return self._track(name)

    # - - - - MANIFEST - - - -

    def write_manifest(self, manifest: RunManifest) -> Path:
        manifest.extra = {**manifest.extra, "outputs": list(self.written)}
        target = self.path(MANIFEST)
        target.write_text(manifest.model_dump_json(indent=2), encoding='utf-8')
        logger.info(f"Wrote {len(self.written)} outputs and the manifest to {self.out_dir}")
        return target

    @staticmethod
    def read_manifest(directory: Union[str, Path]) -> Optional[RunManifest]:
        path = Path(directory) / MANIFEST
        if not path.exists():
            return None
        return RunManifest.model_validate_json(path.read_text(encoding='utf-8'))


def _read_table(path: Union[str, Path], columns: Iterable[str]) -> pd.DataFrame:
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"file not found: {path}")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataError(f"cannot read {path}: {e}")
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise DataError(f"{path} is missing columns {missing}")
    return frame


def _json_default(value: Any) -> Any:
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    return str(value)
