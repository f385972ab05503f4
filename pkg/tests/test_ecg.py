import io

import numpy as np
import pytest
from pydantic import ValidationError

from src.app.ecg.records import EcgRecord, read_ecg_csv, write_ecg_csv
from src.app.ecg.synth import beat_schedule, synth_ecg
from src.app.errors import ConfigError, DataError
from src.app.schemas import ArtifactSpec, SynthParams


class TestReadEcgCsv:
    def test_parses_header_and_rows(self):
        body = "fs=256\nsample_mv\n" + "\n".join(f"{0.001 * i:.3f}" for i in range(512)) + "\n"
        rec = read_ecg_csv(body.encode())
        assert len(rec) == 512
        assert rec.fs == 256.0
        assert rec.samples[3] == pytest.approx(0.003)

    def test_accepts_binary_stream(self):
        rec = read_ecg_csv(io.BytesIO(b"fs=250\nsample_mv\n0.1\n0.2\n"))
        assert rec.fs == 250.0
        np.testing.assert_allclose(rec.samples, [0.1, 0.2])

    @pytest.mark.parametrize("payload, message", [
        (b"fs=256\n", "no samples"),
        (b"fs=256\nsample_mv\n", "no samples"),
        (b"fs=0\nsample_mv\n0.1\n0.2\n", "invalid sampling rate"),
        (b"fs=-4\nsample_mv\n0.1\n0.2\n", "invalid sampling rate"),
        (b"sample_mv\n0.1\n0.2\n", "missing fs header"),
        (b"fs=256\nsample_mv\n0.1\nabc\n", "non-numeric sample at row 2"),
        (b"fs=256\nsample_mv\n0.1\n", "fewer than 2 samples"),
        (b"fs=256\nvalue\n0.1\n0.2\n", "missing sample_mv column"),
    ])
    def test_rejects_malformed_input(self, payload, message):
        with pytest.raises(DataError, match=message):
            read_ecg_csv(payload)

    def test_written_file_reads_back(self):
        rec = EcgRecord(np.array([0.5, -0.25, 0.125]), fs=256.0)
        sink = io.BytesIO()
        write_ecg_csv(rec, sink)
        assert sink.getvalue().startswith(b"fs=256\nsample_mv\n")
        back = read_ecg_csv(sink.getvalue())
        np.testing.assert_array_equal(back.samples, rec.samples)

    def test_record_rejects_non_positive_rate(self):
        with pytest.raises(DataError):
            EcgRecord(np.zeros(10), fs=0.0)


class TestSynthEcg:
    def test_beat_count_at_120_bpm(self):
        _, beats = synth_ecg(SynthParams(hr_bpm=120, duration=60.0, seed=7))
        assert 119 <= len(beats.r_times) <= 121

    def test_same_seed_is_bit_identical(self):
        params = SynthParams(duration=30.0, seed=21)
        rec_a, beats_a = synth_ecg(params)
        rec_b, beats_b = synth_ecg(params)
        np.testing.assert_array_equal(rec_a.samples, rec_b.samples)
        np.testing.assert_array_equal(beats_a.r_times, beats_b.r_times)

    def test_beat_times_strictly_increasing_and_consistent(self):
        _, beats = synth_ecg(SynthParams(duration=60.0, hrv_sd=0.05, seed=4))
        assert np.all(np.diff(beats.r_times) > 0)
        assert beats.intervals.sum() == pytest.approx(beats.r_times[-1] - beats.r_times[0], abs=1e-9)

    def test_inverted_polarity_negates_samples(self):
        upright, _ = synth_ecg(SynthParams(duration=20.0, seed=9))
        inverted, truth = synth_ecg(SynthParams(duration=20.0, seed=9, polarity='inverted'))
        np.testing.assert_array_equal(inverted.samples, -upright.samples)
        assert truth.polarity == 'inverted'

    def test_zero_artifact_is_exactly_zero(self):
        params = SynthParams(duration=30.0, seed=2, artifacts=[ArtifactSpec(kind='zero', t_start=10.0, t_end=20.0)])
        rec, truth = synth_ecg(params)
        t = np.arange(len(rec)) / rec.fs
        span = (t >= 10.0) & (t < 20.0)
        assert np.all(rec.samples[span] == 0.0)
        assert np.any(rec.samples[~span] != 0.0)
        assert truth.injected_artifacts == [('zero', 10.0, 20.0)]

    def test_spike_artifact_dominates_its_window(self):
        params = SynthParams(duration=20.0, seed=2, artifacts=[ArtifactSpec(kind='spike', t_start=5.0, t_end=5.5)])
        rec, _ = synth_ecg(params)
        t = np.arange(len(rec)) / rec.fs
        assert np.max(np.abs(rec.samples[(t >= 5.0) & (t < 5.5)])) > 3.0

    def test_artifact_outside_record_is_rejected(self):
        params = SynthParams(duration=10.0, artifacts=[ArtifactSpec(kind='zero', t_start=8.0, t_end=12.0)])
        with pytest.raises(ConfigError):
            synth_ecg(params)

    def test_schedule_stays_inside_record(self):
        params = SynthParams(duration=15.0, hrv_sd=0.02, seed=1)
        times = beat_schedule(params, np.random.default_rng(params.seed))
        assert times[0] > 0
        assert times[-1] <= params.duration

    @pytest.mark.parametrize("field, value", [("hr_bpm", 30), ("hr_bpm", 300), ("duration", 0)])
    def test_params_validated(self, field, value):
        with pytest.raises(ValidationError):
            SynthParams(**{field: value})

    def test_artifact_window_must_be_ordered(self):
        with pytest.raises(ValidationError):
            ArtifactSpec(kind='spike', t_start=3.0, t_end=2.0)
