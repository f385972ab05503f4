import json
import shutil
from pathlib import Path

import pandas as pd
import pytest

from src.config import PRESETS_DIR
from src.main import main


def _manifest(directory: Path) -> dict:
    return json.loads((directory / "manifest.json").read_text())


@pytest.fixture(scope="module")
def clean_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth_clean")
    code = main(["synth", "--out", str(out), "--seed", "5", "--set", "synth.duration=40"])
    return code, out


class TestSynth:
    def test_writes_record_beats_and_manifest(self, clean_run):
        code, out = clean_run
        assert code == 0
        assert (out / "record.ecg.csv").exists()
        assert (out / "record.beats.csv").exists()
        manifest = _manifest(out)
        assert manifest["command"] == "synth"
        assert manifest["seeds"]["synth"] == 5
        assert manifest["config"]["synth"]["duration"] == 40.0
        assert sorted(manifest["extra"]["outputs"]) == ["record.beats.csv", "record.ecg.csv"]

    def test_existing_run_needs_force(self, tmp_path):
        args = ["synth", "--out", str(tmp_path), "--set", "synth.duration=20"]
        assert main(args) == 0
        assert main(args) == 2
        assert main(args + ["--force"]) == 0

    def test_same_seed_same_bytes(self, tmp_path):
        for name in ("a", "b"):
            assert main(["synth", "--out", str(tmp_path / name), "--seed", "9", "--set", "synth.duration=20"]) == 0
        assert (tmp_path / "a" / "record.ecg.csv").read_bytes() == (tmp_path / "b" / "record.ecg.csv").read_bytes()

    def test_epochs_keep_explicit_duration(self, tmp_path):
        args = ["synth", "--preset", "epochs", "--out", str(tmp_path), "--set", "synth.duration=20",
                "--recordings", "1", "--hours", "1"]
        assert main(args) == 0
        assert _manifest(tmp_path)["extra"]["duration"] == 20.0
        assert [p.name for p in tmp_path.glob("*.ecg.csv")] == ["rec00_h000.ecg.csv"]

    @pytest.mark.slow
    def test_epochs_default_to_one_hour(self, tmp_path):
        assert main(["synth", "--preset", "epochs", "--out", str(tmp_path), "--recordings", "1", "--hours", "1"]) == 0
        assert _manifest(tmp_path)["extra"]["duration"] == 3600.0
        beats = pd.read_csv(tmp_path / "rec00_h000.beats.csv")
        assert beats["r_time_s"].max() > 3500.0

    def test_invalid_override(self, tmp_path):
        assert main(["synth", "--out", str(tmp_path), "--set", "synth.hr_bpm=500"]) == 2
        assert main(["synth", "--out", str(tmp_path / "x"), "--set", "no_equals_sign"]) == 2


class TestDetect:
    def test_clean_record_metrics(self, clean_run, tmp_path):
        _, synth_dir = clean_run
        assert main(["detect", str(synth_dir / "record.ecg.csv"), "--out", str(tmp_path), "--dump-thresholds"]) == 0
        metrics = json.loads((tmp_path / "detection_metrics.json").read_text())["record"]
        assert metrics["sensitivity"] >= 0.99 and metrics["ppv"] >= 0.99
        assert (tmp_path / "record.peaks.csv").exists()
        assert (tmp_path / "record.thresholds.json").exists()
        rr = pd.read_csv(tmp_path / "record.rr.csv")
        assert set(rr["annotation"]) <= {"original", "replaced_ma", "reconstructed", "excluded_gap"}
        summary = pd.read_csv(tmp_path / "detect_summary.csv")
        assert summary.loc[0, "record"] == "record"
        assert _manifest(tmp_path)["input_digests"]

    def test_no_metrics_without_annotations(self, clean_run, tmp_path):
        _, synth_dir = clean_run
        lone = tmp_path / "in" / "lone.ecg.csv"
        lone.parent.mkdir()
        shutil.copy(synth_dir / "record.ecg.csv", lone)
        assert main(["detect", str(lone), "--out", str(tmp_path / "out")]) == 0
        assert (tmp_path / "out" / "lone.rr.csv").exists()
        assert not (tmp_path / "out" / "detection_metrics.json").exists()

    def test_standard_preset_misses_more_on_artifacts(self, tmp_path):
        synth_dir = tmp_path / "synth"
        assert main(["synth", "--preset", "artifacts", "--out", str(synth_dir), "--set", "synth.duration=120"]) == 0
        ecg = str(synth_dir / "record.ecg.csv")
        assert main(["detect", ecg, "--out", str(tmp_path / "enhanced")]) == 0
        assert main(["detect", ecg, "--standard", "--out", str(tmp_path / "standard")]) == 0
        enhanced = json.loads((tmp_path / "enhanced" / "detection_metrics.json").read_text())["record"]
        standard = json.loads((tmp_path / "standard" / "detection_metrics.json").read_text())["record"]
        assert standard["fn"] > enhanced["fn"]
        assert _manifest(tmp_path / "standard")["config"]["detector"]["band_low"] == 5.0

    def test_unreadable_input(self, tmp_path):
        assert main(["detect", str(tmp_path / "missing.ecg.csv"), "--out", str(tmp_path / "out")]) == 3

    def test_malformed_input(self, tmp_path):
        bad = tmp_path / "bad.ecg.csv"
        bad.write_text("fs=256\nsample_mv\n0.1\nabc\n")
        assert main(["detect", str(bad), "--out", str(tmp_path / "out")]) == 3

    def test_invalid_model_setting(self, clean_run, tmp_path):
        _, synth_dir = clean_run
        code = main(["detect", str(synth_dir / "record.ecg.csv"), "--out", str(tmp_path), "--set", "model.dw_kernel=4"])
        assert code == 2


@pytest.mark.slow
class TestPipeline:
    def test_synth_to_attention(self, tmp_path):
        tiny = str(Path(PRESETS_DIR) / "tiny.json")
        synth, det, pre = tmp_path / "synth", tmp_path / "detect", tmp_path / "windows"
        trained, evaluated, attn = tmp_path / "train", tmp_path / "eval", tmp_path / "attn"

        assert main(["synth", "--preset", "epochs", "--out", str(synth), "--set", "synth.duration=120",
                     "--recordings", "2", "--hours", "4"]) == 0
        labels = pd.read_csv(synth / "labels.csv")
        assert len(labels) == 4

        ecgs = sorted(str(p) for p in synth.glob("*.ecg.csv"))
        assert len(ecgs) == 8
        assert main(["detect", *ecgs, "--out", str(det)]) == 0
        assert len(list(det.glob("*.rr.csv"))) == 8

        assert main(["preprocess", "--rr-dir", str(det), "--labels", str(synth / "labels.csv"),
                     "--config", tiny, "--out", str(pre)]) == 0
        assert len(list(pre.glob("*.windows.csv"))) == 8
        availability = pd.read_csv(pre / "availability.csv")
        assert availability.loc[0, "epochs_retained"] == 8

        assert main(["train", "--windows", str(pre), "--preset", "tiny", "--out", str(trained)]) == 0
        checkpoint = trained / "model.npz"
        assert checkpoint.exists()
        history = pd.read_csv(trained / "history.csv")
        assert 1 <= len(history) <= 20
        assert _manifest(trained)["normalizer"]["method"] == "minmax"

        assert main(["eval", "--windows", str(pre), "--checkpoint", str(checkpoint), "--split", "val",
                     "--out", str(evaluated)]) == 0
        metrics = json.loads((evaluated / "metrics.json").read_text())
        assert metrics["n_epochs"] == 2
        assert len(pd.read_csv(evaluated / "epoch_predictions.csv")) == 2

        assert main(["attn", "--windows", str(pre), "--checkpoint", str(checkpoint), "--config", tiny,
                     "--out", str(attn)]) == 0
        stats = pd.read_csv(attn / "attention_stats.csv")
        assert set(stats["metric"]) == {"distance", "entropy"}
        assert stats.query("metric == 'entropy'")["mean"].between(0, 1).all()
        assert (attn / "relevance.png").exists()
        assert _manifest(attn)["extra"]["n_windows"] == 16
