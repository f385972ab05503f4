"""Sub-command bodies. Each one reads its inputs, writes through an ArtifactStore and
finishes by writing the run manifest."""
import logging
from argparse import Namespace
from datetime import datetime, timezone
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from src.app import __version__
from src.app.analysis.attention_stats import collect_attention, compute_stats, relevance_frame, stats_frame
from src.app.artifact_store import BEATS_SUFFIX, ECG_SUFFIX, RR_SUFFIX, ArtifactStore, stem_of
from src.app.ecg.synth import synth_ecg
from src.app.errors import ConfigError, DataError
from src.app.hr.labels import EpochAnnotation, propagate_weak_labels
from src.app.hr.normalizer import Normalizer, fit_normalizer, normalize
from src.app.hr.pipeline import EpochWindows, HrWindow, availability_report, preprocess_epoch, split_epochs
from src.app.model.hrvconformer import HRVConformer
from src.app.qrs.detector import QrsDetector
from src.app.qrs.metrics import detection_metrics
from src.app.rr.correction import RrSeries, correct
from src.app.schemas import ArtifactSpec, ConformerConfig, DetectorConfig, RunConfig, RunManifest, SynthParams
from src.app.training.evaluation import evaluate, group_predictions, epoch_aggregate, predict_windows
from src.app.training.trainer import train
from src.app.utils import sha256_file, timed

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

SYNTH_PRESETS = ('clean', 'artifacts', 'inverted', 'epochs')
CHECKPOINT_NAME = "model.npz"

# class-conditional rhythm of the multi-epoch corpus: grade -> (hr_bpm, hrv_sd)
EPOCH_RHYTHMS = {
    'normal': (120.0, 0.030),
    'severe': (150.0, 0.004),
}
EPOCH_DURATION_S = 3600.0


class Run:
    """Bookkeeping shared by every command: store, timing, digests and the manifest."""

    def __init__(self, command: str, args: Namespace, cfg: RunConfig) -> None:
        self.command = command
        self.cfg = cfg
        self.store = ArtifactStore(args.out, force=args.force).prepare()
        self.deterministic = bool(args.deterministic)
        self.started_at = datetime.now(timezone.utc)
        self.digests: Dict[str, str] = {}
        self.seeds: Dict[str, int] = {"synth": cfg.synth.seed, "train": cfg.train.seed}
        self.normalizer: Optional[dict] = None
        self.extra: Dict[str, object] = {}

    def digest(self, path: Path) -> None:
        self.digests[str(path)] = sha256_file(path)

    def finish(self) -> Path:
        finished = datetime.now(timezone.utc)
        manifest = RunManifest(
            command=self.command,
            tool_version=__version__,
            config=self.cfg.model_dump(mode='json'),
            seeds=self.seeds,
            input_digests=self.digests,
            normalizer=self.normalizer,
            deterministic=self.deterministic,
            started_at=self.started_at,
            finished_at=finished,
            elapsed_s=(finished - self.started_at).total_seconds(),
            extra=self.extra,
        )
        return self.store.write_manifest(manifest)


# ------------------- SYNTH -------------------

def _preset_params(base: SynthParams, preset: str) -> SynthParams:
    if preset == 'clean':
        return base
    if preset == 'inverted':
        return base.model_copy(update={'polarity': 'inverted'})
    if preset == 'artifacts':
        d = base.duration
        artifacts = [
            ArtifactSpec(kind='spike', t_start=0.3 * d, t_end=0.3 * d + 0.5, amplitude_mv=5.0),
            ArtifactSpec(kind='zero', t_start=0.6 * d, t_end=0.6 * d + min(10.0, 0.1 * d)),
        ]
        return base.model_copy(update={'artifacts': list(base.artifacts) + artifacts})
    raise ConfigError(f"unknown synth preset '{preset}', expected one of {SYNTH_PRESETS}")


def cmd_synth(args: Namespace, cfg: RunConfig) -> int:
    run = Run('synth', args, cfg)
    if args.preset == 'epochs':
        _synth_epochs(run, args)
    else:
        params = _preset_params(cfg.synth, args.preset)
        record, beats = synth_ecg(params)
        run.store.write_ecg(args.name, record)
        run.store.write_beats(args.name, beats)
        run.extra.update(preset=args.preset, n_beats=len(beats.r_times), artifacts=beats.injected_artifacts)
    run.finish()
    return 0


def _synth_epochs(run: Run, args: Namespace) -> None:
    """Recordings of ``hours`` one-epoch files each; first and last hour carry a grade.

    Each file spans one hour unless ``synth.duration`` is set explicitly.
    """
    base = run.cfg.synth
    if 'duration' not in base.model_fields_set:
        base = base.model_copy(update={'duration': EPOCH_DURATION_S})
    grades = list(EPOCH_RHYTHMS)
    rows = []
    for r in range(args.recordings):
        grade = grades[r % len(grades)]
        hr_bpm, hrv_sd = EPOCH_RHYTHMS[grade]
        recording = f"rec{r:02d}"
        for hour in range(args.hours):
            params = base.model_copy(update={'hr_bpm': hr_bpm, 'hrv_sd': hrv_sd,
                                             'seed': base.seed * 1000 + r * 100 + hour})
            record, beats = synth_ecg(params)
            name = f"{recording}_h{hour:03d}"
            run.store.write_ecg(name, record)
            run.store.write_beats(name, beats)
            if hour in (0, args.hours - 1):
                rows.append({"recording": recording, "epoch_hour": hour, "grade": grade})
    run.store.write_table("labels.csv", pd.DataFrame(rows, columns=["recording", "epoch_hour", "grade"]))
    run.extra.update(preset='epochs', recordings=args.recordings, hours=args.hours, duration=base.duration)


# ------------------- DETECT -------------------

def _annotation_path(ecg_path: Path, explicit: Optional[str]) -> Optional[Path]:
    if explicit:
        return Path(explicit)
    sibling = ecg_path.with_name(stem_of(ecg_path, ECG_SUFFIX) + BEATS_SUFFIX)
    return sibling if sibling.exists() else None


def cmd_detect(args: Namespace, cfg: RunConfig) -> int:
    if args.annotations and len(args.ecg) > 1:
        raise ConfigError("--annotations applies to a single ECG file")
    detector_cfg = (DetectorConfig.standard(**_detector_fields(cfg.detector, keep_switches=False))
                    if args.standard else cfg.detector)
    cfg = cfg.model_copy(update={'detector': detector_cfg})
    run = Run('detect', args, cfg)
    detector = QrsDetector(detector_cfg)

    summary, metrics = [], {}
    for raw_path in args.ecg:
        path = Path(raw_path)
        record = ArtifactStore.read_ecg(path)
        run.digest(path)
        name = stem_of(path, ECG_SUFFIX)
        with timed(f"Detection on {name}"):
            result = detector.detect(record)
        run.store.write_peaks(name, result.peaks)
        if args.dump_thresholds:
            run.store.write_thresholds(name, result.trajectory)

        counts: Dict[str, int] = {}
        if len(result.peaks) >= 2:
            corrected = correct(RrSeries.from_peaks(result.peaks), result.potential,
                                cfg.preprocess.ma_window, cfg.preprocess.mean_rule)
            run.store.write_rr(name, corrected)
            counts = corrected.counts()
        else:
            logger.warning(f"{name}: fewer than 2 beats detected; no RR file written")

        annotations = _annotation_path(path, args.annotations)
        if annotations is not None:
            run.digest(annotations)
            metrics[name] = detection_metrics(result.peaks.times, ArtifactStore.read_beats(annotations),
                                              args.tolerance)
            logger.info(f"{name}: sensitivity={metrics[name]['sensitivity']:.4f} ppv={metrics[name]['ppv']:.4f}")
        if args.plot:
            from src.app.analysis.plots import plot_detection
            plot_detection(record, result, run.store.figure_path(f"{name}.detection.png"))

        summary.append({"record": name, "n_beats": len(result.peaks), "n_potential": len(result.potential),
                        "flipped": result.flipped, "resets": result.resets, **counts})

    run.store.write_table("detect_summary.csv", pd.DataFrame(summary))
    if metrics:
        run.store.write_json("detection_metrics.json", metrics)
    run.extra.update(preset='standard' if args.standard else 'enhanced')
    run.finish()
    return 0


def _detector_fields(cfg: DetectorConfig, keep_switches: bool) -> dict:
    fields = cfg.model_dump()
    if not keep_switches:
        for key in ('band_low', 'band_high', 'polarity_check', 'threshold_reset', 'zero_skip', 'refine_source'):
            fields.pop(key)
    return fields


# ------------------- PREPROCESS -------------------

def read_labels(path: Path) -> List[EpochAnnotation]:
    """``recording,epoch_hour,grade`` rows with weak labels propagated per recording."""
    try:
        frame = pd.read_csv(path)
    except FileNotFoundError:
        raise DataError(f"labels file not found: {path}")
    missing = {"recording", "epoch_hour", "grade"} - set(frame.columns)
    if missing:
        raise DataError(f"{path} is missing columns {sorted(missing)}")
    labelled: List[EpochAnnotation] = []
    for recording, rows in frame.groupby("recording", sort=True):
        strong = [EpochAnnotation.from_grade(int(r.epoch_hour), str(r.grade), str(recording)) for r in rows.itertuples()]
        labelled.extend(propagate_weak_labels(strong))
    return labelled


def _preprocess_dir(rr_dir: Path, annotations: List[EpochAnnotation], cfg: RunConfig, run: Run) -> List[EpochWindows]:
    epochs = []
    for ann in annotations:
        rr_path = rr_dir / f"{ann.epoch_id}{RR_SUFFIX}"
        if not rr_path.exists():
            logger.info(f"No RR file for {ann.epoch_id} in {rr_dir}; skipping")
            continue
        run.digest(rr_path)
        corrected = ArtifactStore.read_rr(rr_path)
        epochs.append(preprocess_epoch(corrected, ann.epoch_id, ann.label, ann.kind, cfg.preprocess))
    return epochs


def cmd_preprocess(args: Namespace, cfg: RunConfig) -> int:
    run = Run('preprocess', args, cfg)
    labels_path = Path(args.labels)
    annotations = read_labels(labels_path)
    run.digest(labels_path)

    runs: Dict[str, List[EpochWindows]] = {}
    for rr_dir in args.rr_dir:
        runs[Path(rr_dir).name] = _preprocess_dir(Path(rr_dir), annotations, cfg, run)
    primary = runs[Path(args.rr_dir[0]).name]

    kept = 0
    for epoch in primary:
        if len(epoch.windows) >= cfg.preprocess.min_windows and epoch.windows:
            run.store.write_windows(epoch.epoch_id, epoch.windows)
            kept += 1
    if kept == 0:
        raise DataError(f"no epoch kept {cfg.preprocess.min_windows} or more windows")

    run.store.write_table("availability.csv", availability_report(runs, cfg.preprocess.min_windows))
    run.extra.update(epochs_written=kept, epochs_seen=len(primary))
    run.finish()
    return 0


# ------------------- TRAIN / EVAL / ATTN -------------------

def _check_window_length(windows: List[HrWindow], model_cfg: ConformerConfig) -> None:
    lengths = {len(w.values) for w in windows}
    if lengths != {model_cfg.window_samples}:
        raise ConfigError(f"windows have {sorted(lengths)} samples but model.window_samples is {model_cfg.window_samples}")


def _load_model(checkpoint: Path) -> Tuple[HRVConformer, Normalizer, dict]:
    state, meta = ArtifactStore.load_checkpoint(checkpoint)
    model_cfg = ConformerConfig.model_validate(meta["model"])
    model = HRVConformer(model_cfg, seed=int(meta.get("seed", 7)))
    model.load_state_dict(state)
    return model, Normalizer.from_dict(meta["normalizer"]), meta


def cmd_train(args: Namespace, cfg: RunConfig) -> int:
    run = Run('train', args, cfg)
    windows = ArtifactStore.read_window_dir(args.windows)
    _check_window_length(windows, cfg.model)

    epoch_labels = {w.epoch_id: w.label for w in windows}
    train_ids, val_ids = split_epochs(epoch_labels, cfg.train.val_fraction, cfg.train.seed)
    train_set, val_set = set(train_ids), set(val_ids)
    normalizer = fit_normalizer([w for w in windows if w.epoch_id in train_set], cfg.preprocess.normalization)
    windows = [normalize(w, normalizer) for w in windows]
    train_ws = [w for w in windows if w.epoch_id in train_set]
    val_ws = [w for w in windows if w.epoch_id in val_set]

    model = HRVConformer(cfg.model, seed=cfg.train.seed)
    with timed("Training"):
        best, history = train(model, train_ws, val_ws, cfg.train)

    meta = {
        "model": cfg.model.model_dump(mode='json'),
        "normalizer": normalizer.to_dict(),
        "seed": cfg.train.seed,
        "train_epochs": train_ids,
        "val_epochs": val_ids,
        **best.meta,
    }
    run.store.save_checkpoint(CHECKPOINT_NAME, model.state_dict(), meta)
    run.store.write_table("history.csv", history)
    run.store.write_json("metrics.json", evaluate(model, val_ws, cfg.train.tie_label, cfg.train.batch_size))
    run.normalizer = normalizer.to_dict()
    run.seeds["model"] = cfg.train.seed
    run.extra.update(best.meta, train_epochs=train_ids, val_epochs=val_ids)
    run.finish()
    return 0


def cmd_eval(args: Namespace, cfg: RunConfig) -> int:
    run = Run('eval', args, cfg)
    checkpoint = Path(args.checkpoint)
    model, normalizer, meta = _load_model(checkpoint)
    run.digest(checkpoint)
    windows = ArtifactStore.read_window_dir(args.windows)
    if args.split != 'all':
        keep = set(meta.get(f"{args.split}_epochs", []))
        windows = [w for w in windows if w.epoch_id in keep]
        if not windows:
            raise DataError(f"no windows belong to the {args.split} split of {checkpoint}")
    _check_window_length(windows, model.cfg)
    windows = [normalize(w, normalizer) for w in windows]

    metrics = evaluate(model, windows, cfg.train.tie_label, cfg.train.batch_size)
    probs = predict_windows(model, windows, cfg.train.batch_size)
    groups, epoch_labels = group_predictions(windows, probs)
    aggregated = epoch_aggregate(groups, cfg.train.tie_label)

    run.store.write_json("metrics.json", metrics)
    run.store.write_table("window_predictions.csv", pd.DataFrame({
        "epoch_id": [w.epoch_id for w in windows],
        "label": [w.label for w in windows],
        "prob": probs,
    }))
    run.store.write_table("epoch_predictions.csv", pd.DataFrame([
        {"epoch_id": e, "label": epoch_labels[e], "pred": aggregated[e][0], "prob": aggregated[e][1]}
        for e in sorted(aggregated)
    ]))
    run.normalizer = normalizer.to_dict()
    run.extra.update(split=args.split)
    run.finish()
    return 0


def cmd_attn(args: Namespace, cfg: RunConfig) -> int:
    run = Run('attn', args, cfg)
    windows = ArtifactStore.read_window_dir(args.windows)
    if args.checkpoint:
        checkpoint = Path(args.checkpoint)
        model, normalizer, _ = _load_model(checkpoint)
        run.digest(checkpoint)
    else:
        logger.info("No checkpoint given; analysing a freshly initialised model")
        model = HRVConformer(cfg.model, seed=cfg.train.seed)
        normalizer = fit_normalizer(windows, cfg.preprocess.normalization)
    _check_window_length(windows, model.cfg)
    windows = [normalize(w, normalizer) for w in windows]

    stack = collect_attention(model, windows, cfg.attn.batch_size, cfg.attn.max_windows)
    stats = compute_stats(stack)
    run.store.write_table("attention_stats.csv", stats_frame(stats))
    run.store.write_table("relevance.csv", relevance_frame(stats.relevance, stack.patch_samples))
    if cfg.attn.figures:
        from src.app.analysis.plots import plot_attention_heatmaps, plot_relevance
        plot_attention_heatmaps(stats, run.store.figure_path("attention_heatmaps.png"))
        plot_relevance(windows[0].values, stats.relevance[0], stack.patch_samples, model.cfg.fs,
                       run.store.figure_path("relevance.png"))
    run.normalizer = normalizer.to_dict()
    run.extra.update(n_windows=stack.n_samples, mean_entropy=float(np.mean(stats.entropy_mean)))
    run.finish()
    return 0


COMMANDS = {
    'synth': cmd_synth,
    'detect': cmd_detect,
    'preprocess': cmd_preprocess,
    'train': cmd_train,
    'eval': cmd_eval,
    'attn': cmd_attn,
}
