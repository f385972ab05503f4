import numpy as np
import pytest

from src.app.errors import DataError
from src.app.hr.labels import EpochAnnotation, epoch_id, grade_to_class, propagate_weak_labels
from src.app.hr.normalizer import Normalizer, fit_normalizer, normalize
from src.app.hr.pipeline import (
    EpochWindows,
    HrSegment,
    HrWindow,
    availability_report,
    filter_epochs,
    group_by_epoch,
    make_windows,
    preprocess_epoch,
    reject_noisy,
    resample_4hz,
    split_epochs,
    split_on_gaps,
)
from src.app.rr.correction import CorrectedRrSeries, RrSeries
from src.app.schemas import PreprocessConfig


def _corrected(intervals, annotations=None) -> CorrectedRrSeries:
    intervals = np.asarray(intervals, dtype=np.float64)
    if annotations is None:
        annotations = ['original'] * len(intervals)
    beat_times = np.concatenate([[0.0], np.cumsum(intervals)])
    return CorrectedRrSeries(intervals, beat_times, np.array(annotations, dtype=object), float(np.mean(intervals)))


def _window(values, epoch="rec_h000", label=0) -> HrWindow:
    return HrWindow(values=np.asarray(values, dtype=np.float64), epoch_id=epoch, label=label)


class TestResample:
    def test_constant_tachogram_is_exact(self):
        seg = RrSeries.from_intervals([0.5] * 240)
        hr = resample_4hz(seg)
        np.testing.assert_allclose(hr.values, 0.5, atol=1e-12)
        assert hr.fs == 4.0

    def test_affine_tachogram_is_exact(self):
        # beats spaced so the interval closing at t equals a + b * t
        a, b = 0.4, 0.001
        times = [0.0]
        while times[-1] < 120.0:
            times.append((times[-1] + a) / (1 - b))
        seg = RrSeries.from_beat_times(times)
        np.testing.assert_allclose(seg.intervals, a + b * seg.beat_times[1:], atol=1e-12)

        hr = resample_4hz(seg)
        grid = hr.t0 + np.arange(len(hr.values)) / hr.fs
        np.testing.assert_allclose(hr.values, a + b * grid, atol=1e-9)

    def test_sinusoid_relative_error_below_one_percent(self):
        def rr(t):
            return 0.35 + 0.05 * np.sin(2 * np.pi * 0.1 * t)

        times = [0.0]
        while times[-1] < 300.0:
            nxt = times[-1] + 0.35
            for _ in range(50):
                nxt = times[-1] + rr(nxt)
            times.append(nxt)
        hr = resample_4hz(RrSeries.from_beat_times(times))
        grid = hr.t0 + np.arange(len(hr.values)) / hr.fs
        assert np.max(np.abs(hr.values - rr(grid)) / rr(grid)) < 0.01

    def test_short_segment_rejected(self):
        with pytest.raises(DataError):
            resample_4hz(RrSeries.from_intervals([0.4, 0.4]))


class TestWindowing:
    def test_one_hour_gives_56_windows(self):
        seg = HrSegment(values=np.full(3600 * 4, 0.5), t0=0.0, epoch_id="rec_h001")
        ws = make_windows(seg, win=300.0, overlap=0.8, label=1)
        assert len(ws) == 56
        assert all(len(w.values) == 1200 for w in ws)
        assert ws[1].start_s - ws[0].start_s == pytest.approx(60.0)
        assert {w.epoch_id for w in ws} == {"rec_h001"}

    def test_segment_shorter_than_window(self):
        seg = HrSegment(values=np.zeros(100), t0=0.0)
        assert make_windows(seg, win=300.0) == []

    def test_invalid_overlap(self):
        with pytest.raises(DataError):
            make_windows(HrSegment(values=np.zeros(2000), t0=0.0), overlap=1.0)

    @pytest.mark.parametrize("n_samples, expected", [(1200, 1), (1439, 1), (1440, 2), (2000, 4), (3600 * 4, 56)])
    def test_windows_tile_the_segment(self, n_samples, expected):
        seg = HrSegment(values=np.arange(n_samples, dtype=np.float64), t0=10.0)
        ws = make_windows(seg, win=300.0, overlap=0.8)
        assert len(ws) == (n_samples - 1200) // 240 + 1 == expected
        for w in ws:
            start = int(round((w.start_s - seg.t0) * seg.fs))
            assert seg.t0 <= w.start_s and w.start_s + 300.0 <= seg.t0 + seg.duration
            np.testing.assert_array_equal(w.values, seg.values[start:start + 1200])
        # the last window ends less than one stride before the segment does
        assert seg.t0 + seg.duration - (ws[-1].start_s + 300.0) < 60.0

    def test_reject_noisy(self):
        rng = np.random.default_rng(0)
        calm = _window(0.4 + rng.normal(0, 0.02, 1200))
        noisy = _window(0.4 + rng.normal(0, 0.3, 1200))
        assert reject_noisy([calm, noisy], sd_max=0.12) == [calm]

    def test_group_and_filter_epochs(self):
        ws = [_window([0.0], "a")] * 3 + [_window([0.0], "b")]
        groups = group_by_epoch(ws)
        assert {k: len(v) for k, v in groups.items()} == {"a": 3, "b": 1}
        assert set(filter_epochs(groups, min_windows=2)) == {"a"}


class TestSegmentation:
    def test_split_on_gaps(self):
        series = _corrected([0.5, 0.5, 5.0, 0.5, 0.5, 12.0, 0.5],
                            ['original'] * 5 + ['excluded_gap', 'original'])
        segments = split_on_gaps(series, max_rr=4.0)
        assert [len(s) for s in segments] == [2, 2, 1]
        assert segments[1].beat_times[0] == pytest.approx(6.0)

    def test_preprocess_epoch(self):
        cfg = PreprocessConfig()
        result = preprocess_epoch(_corrected([0.5] * 800), "rec_h002", label=1, cfg=cfg)
        assert isinstance(result, EpochWindows)
        assert result.n_segments == 1
        assert len(result.windows) == result.n_windows_total == 2
        assert all(w.label == 1 and w.label_kind == 'strong' for w in result.windows)

    def test_preprocess_epoch_skips_short_segments(self):
        series = _corrected([0.5] * 800 + [12.0, 0.5])
        result = preprocess_epoch(series, "rec_h003", label=0)
        assert result.n_segments == 1
        assert len(result.windows) == 2

    def test_availability_report(self):
        full = EpochWindows("a", [_window([0.0])] * 10, 1, 12, 2)
        thin = EpochWindows("b", [_window([0.0])] * 3, 1, 3, 0)
        report = availability_report({"enhanced": [full, thin], "standard": [thin]}, min_windows=10)
        row = report.set_index("detector").loc["enhanced"]
        assert row["epochs_total"] == 2
        assert row["epochs_retained"] == 1
        assert row["windows_total"] == 15
        assert row["windows_retained"] == 10
        assert report.set_index("detector").loc["standard", "epochs_retained"] == 0


class TestNormalizer:
    def test_percentiles_map_to_unit_interval(self):
        rng = np.random.default_rng(1)
        ws = [_window(0.4 + rng.normal(0, 0.05, 200)) for _ in range(4)]
        n = fit_normalizer(ws)
        assert n.apply(np.array([n.p5]))[0] == 0.0
        assert n.apply(np.array([n.p95]))[0] == 1.0
        pooled = np.concatenate([w.values for w in ws])
        assert n.p5 == pytest.approx(np.percentile(pooled, 5))

    def test_values_outside_percentiles_are_not_clipped(self):
        n = Normalizer(0.3, 0.5)
        np.testing.assert_allclose(n.apply(np.array([0.2, 0.6])), [-0.5, 1.5])

    def test_zscore(self):
        ws = [_window([1.0, 2.0, 3.0, 4.0])]
        n = fit_normalizer(ws, method='zscore')
        out = normalize(ws[0], n).values
        assert out.mean() == pytest.approx(0.0, abs=1e-12)
        assert out.std() == pytest.approx(1.0)

    @pytest.mark.parametrize("method", ["minmax", "zscore"])
    def test_normalize_is_affine(self, method):
        rng = np.random.default_rng(6)
        n = Normalizer(0.3, 0.5, method, mean=0.42, sd=0.07)
        x, y = rng.uniform(0.2, 0.7, 50), rng.uniform(0.2, 0.7, 50)
        a = 0.3
        fx, fy = normalize(_window(x), n).values, normalize(_window(y), n).values
        mixed = normalize(_window(a * x + (1 - a) * y), n).values
        np.testing.assert_allclose(mixed, a * fx + (1 - a) * fy, atol=1e-12)
        np.testing.assert_allclose(fx - fy, (x - y) / n.scale, atol=1e-12)

    def test_normalize_twice_rejected(self):
        n = Normalizer(0.3, 0.5)
        once = normalize(_window([0.4]), n)
        assert once.normalized
        with pytest.raises(DataError):
            normalize(once, n)

    def test_degenerate_pool_rejected(self):
        with pytest.raises(DataError):
            fit_normalizer([_window(np.full(50, 0.4))])
        with pytest.raises(DataError):
            fit_normalizer([])

    def test_dict_round_trip(self):
        n = Normalizer(0.3, 0.5, 'minmax', 0.4, 0.05)
        assert Normalizer.from_dict(n.to_dict()) == n


class TestLabels:
    @pytest.mark.parametrize("grade, expected", [
        ("normal", 0), ("Mild", 0), ("moderate", 1), ("severe", 1), ("inactive", 1),
    ])
    def test_grade_to_class(self, grade, expected):
        assert grade_to_class(grade) == expected

    def test_unknown_grade(self):
        with pytest.raises(DataError):
            grade_to_class("extreme")

    def test_epoch_id_format(self):
        assert epoch_id("rec01", 7) == "rec01_h007"
        assert EpochAnnotation.from_grade(3, "severe", "rec01").epoch_id == "rec01_h003"

    def test_weak_labels_fill_agreeing_gaps_only(self):
        strong = [
            EpochAnnotation.from_grade(0, "normal", "r"),
            EpochAnnotation.from_grade(3, "mild", "r"),
            EpochAnnotation.from_grade(5, "severe", "r"),
        ]
        out = propagate_weak_labels(strong)
        by_hour = {a.epoch_hour: a for a in out}
        assert sorted(by_hour) == [0, 1, 2, 3, 5]
        assert by_hour[1].kind == 'weak' and by_hour[1].label == 0
        assert by_hour[2].recording == "r"
        assert by_hour[5].kind == 'strong'


class TestSplitEpochs:
    def test_stratified_and_disjoint(self):
        labels = {f"r_h{i:03d}": i % 2 for i in range(20)}
        train, val = split_epochs(labels, val_fraction=0.2, seed=3)
        assert set(train).isdisjoint(val)
        assert set(train) | set(val) == set(labels)
        assert sorted(labels[e] for e in val) == [0, 0, 1, 1]

    def test_deterministic_for_a_seed(self):
        labels = {f"r_h{i:03d}": i % 2 for i in range(12)}
        assert split_epochs(labels, seed=5) == split_epochs(labels, seed=5)

    def test_single_epoch_cannot_split(self):
        with pytest.raises(DataError):
            split_epochs({"r_h000": 0})
