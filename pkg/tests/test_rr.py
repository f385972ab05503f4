import numpy as np
import pytest

from src.app.errors import DataError
from src.app.qrs.detector import PotentialPeaks, RPeakSeries
from src.app.rr.correction import (
    RrCategory,
    RrSeries,
    classify_interval,
    correct,
    correct_short,
    reconstruct_long,
    split_long_interval,
)


def _pp(times) -> PotentialPeaks:
    times = np.asarray(times, dtype=np.float64)
    return PotentialPeaks(indices=np.round(times * 256).astype(np.int64), times=times, fs=256.0)


NO_PEAKS = _pp([])


class TestClassifyInterval:
    @pytest.mark.parametrize("rr, category", [
        (0.15, RrCategory.EXTREMELY_SHORT),
        (0.2, RrCategory.EXTREMELY_SHORT),
        (0.2000001, RrCategory.SHORT),
        (2.0, RrCategory.SHORT),
        (2.0000001, RrCategory.LONG),
        (2.25, RrCategory.LONG),
        (10.0, RrCategory.LONG),
        (10.0000001, RrCategory.EXTREMELY_LONG),
        (12.0, RrCategory.EXTREMELY_LONG),
    ])
    def test_bounds(self, rr, category):
        assert classify_interval(rr) == category

    @pytest.mark.parametrize("rr", [0.0, -0.5])
    def test_non_positive_rejected(self, rr):
        with pytest.raises(DataError):
            classify_interval(rr)


class TestRrSeries:
    def test_from_peaks(self):
        peaks = RPeakSeries.from_indices([128, 256, 384], fs=256.0)
        series = RrSeries.from_peaks(peaks)
        np.testing.assert_allclose(series.intervals, [0.5, 0.5])
        assert series.fs == 256.0

    def test_intervals_match_beat_times(self):
        series = RrSeries.from_intervals([0.4, 0.5, 0.6], t0=1.0)
        np.testing.assert_allclose(np.diff(series.beat_times), series.intervals, atol=1e-9)

    def test_single_beat_rejected(self):
        with pytest.raises(DataError):
            RrSeries.from_beat_times([1.0])


class TestCorrectShort:
    def test_extremely_short_replaced_by_moving_average(self):
        series = RrSeries.from_intervals([0.5] * 10 + [0.1] + [0.5] * 5)
        out = correct_short(series)
        assert out.intervals[10] == pytest.approx(0.5)
        assert out.annotations[10] == 'replaced_ma'
        assert list(out.annotations).count('replaced_ma') == 1

    def test_outlier_above_factor_replaced(self):
        series = RrSeries.from_intervals([0.5] * 10 + [1.2] + [0.5] * 5)
        out = correct_short(series)
        assert out.intervals[10] == pytest.approx(0.5)

    def test_interval_below_factor_kept(self):
        series = RrSeries.from_intervals([0.5] * 10 + [0.9] + [0.5] * 5)
        out = correct_short(series)
        assert out.intervals[10] == 0.9
        assert out.annotations[10] == 'original'

    def test_global_rule_uses_series_mean(self):
        series = RrSeries.from_intervals([0.4] * 10 + [0.9] + [0.6] * 10)
        local = correct_short(series, mean_rule='local')
        glob = correct_short(series, mean_rule='global')
        # 0.9 > 2.05 * 0.4 locally, but not against the global mean near 0.5
        assert local.annotations[10] == 'replaced_ma'
        assert glob.annotations[10] == 'original'

    def test_beat_times_rebuilt(self):
        series = RrSeries.from_intervals([0.5] * 5 + [0.1] + [0.5] * 5, t0=2.0)
        out = correct_short(series)
        assert out.intervals[5] == pytest.approx(0.5)
        np.testing.assert_allclose(out.beat_times, series.beat_times, atol=1e-12)
        np.testing.assert_allclose(out.beat_times[-3:], [6.1, 6.6, 7.1])
        untouched = out.annotations == 'original'
        np.testing.assert_allclose(np.diff(out.beat_times)[untouched], out.intervals[untouched], atol=1e-12)

    def test_replaced_run_spreads_inside_its_span(self):
        series = RrSeries.from_intervals([0.5] * 8 + [0.1, 0.1] + [0.5] * 4)
        out = correct_short(series)
        assert list(out.annotations[8:10]) == ['replaced_ma', 'replaced_ma']
        # the run keeps its 0.2 s span; the inner beat splits it by the replacement values
        assert out.beat_times[10] == pytest.approx(series.beat_times[10])
        assert out.beat_times[9] == pytest.approx(series.beat_times[8] + 0.1)
        np.testing.assert_allclose(out.beat_times[10:], series.beat_times[10:], atol=1e-12)
        assert np.all(np.diff(out.beat_times) > 0)


class TestReconstructLong:
    def test_gap_split_at_candidates(self):
        parts = split_long_interval(2.25, np.array([0.45, 0.95, 1.40, 1.85]), global_mean=0.45)
        np.testing.assert_allclose(parts, [0.45, 0.50, 0.45, 0.45, 0.40], atol=1e-12)
        assert sum(parts) == pytest.approx(2.25, abs=1e-6)
        assert min(parts) >= 0.6 * 0.45

    def test_close_candidate_dropped(self):
        parts = split_long_interval(2.5, np.array([0.2, 1.25]), global_mean=0.5)
        np.testing.assert_allclose(parts, [1.25, 1.25])

    def test_trailing_short_piece_merged(self):
        parts = split_long_interval(2.5, np.array([1.2, 2.4]), global_mean=0.5)
        np.testing.assert_allclose(parts, [1.2, 1.3])

    def test_no_candidates_leaves_gap(self):
        series = RrSeries.from_intervals([1.2, 1.2, 2.4, 1.2])
        out = reconstruct_long(series, NO_PEAKS, global_mean=1.2)
        np.testing.assert_allclose(out.intervals, series.intervals)
        assert list(out.annotations) == ['original'] * 4

    def test_time_is_conserved(self):
        series = RrSeries.from_intervals([0.45] * 4 + [2.25] + [0.45] * 4)
        start = series.beat_times[4]
        pp = _pp(start + np.array([0.45, 0.95, 1.40, 1.85]))
        out = reconstruct_long(series, pp, global_mean=0.45)
        assert out.intervals.sum() == pytest.approx(series.intervals.sum(), abs=1e-6)
        assert list(out.annotations).count('reconstructed') == 5

    def test_non_positive_global_mean_rejected(self):
        with pytest.raises(DataError):
            reconstruct_long(RrSeries.from_intervals([0.5, 0.5]), NO_PEAKS, global_mean=0.0)


class TestCorrect:
    def test_clean_series_is_fixed_point(self):
        series = RrSeries.from_intervals(0.5 + 0.01 * np.sin(np.arange(40)))
        out = correct(series, _pp(series.beat_times))
        np.testing.assert_allclose(out.intervals, series.intervals)
        assert set(out.annotations) == {'original'}

    def test_extremely_long_gap_flagged(self):
        series = RrSeries.from_intervals([0.5] * 5 + [12.0] + [0.5] * 5)
        out = correct(series, _pp(series.beat_times))
        assert out.annotations[5] == 'excluded_gap'
        assert out.intervals[5] == 12.0

    def test_missed_beat_reconstructed(self):
        series = RrSeries.from_intervals([1.2] * 6 + [2.4] + [1.2] * 6)
        gap_start = series.beat_times[6]
        pp = _pp(np.concatenate([series.beat_times, [gap_start + 1.2]]))
        out = correct(series, pp)
        np.testing.assert_allclose(out.intervals[6:8], [1.2, 1.2])
        assert list(out.annotations[6:8]) == ['reconstructed', 'reconstructed']
        assert len(out) == len(series) + 1
        assert out.global_mean_rr == pytest.approx(1.2)

    def test_beat_times_strictly_increasing(self):
        rng = np.random.default_rng(0)
        intervals = np.clip(0.5 + rng.normal(0, 0.02, size=60), 0.3, None)
        intervals[[10, 30]] = [0.1, 1.4]
        intervals[45] = 3.1
        series = RrSeries.from_intervals(intervals)
        pp = _pp(np.concatenate([series.beat_times, [series.beat_times[45] + 1.5]]))
        out = correct(series, pp)
        assert np.all(np.diff(out.beat_times) > 0)

    def test_recorded_beats_keep_their_times(self):
        series = RrSeries.from_intervals([0.5] * 10 + [0.1] + [0.5] * 10 + [2.5] + [0.5] * 10)
        gap_start = series.beat_times[21]
        pp = _pp(np.concatenate([series.beat_times, gap_start + np.array([0.5, 1.0, 1.5, 2.0])]))
        out = correct(series, pp)
        assert list(out.annotations).count('replaced_ma') == 1
        assert list(out.annotations).count('reconstructed') == 5
        nearest = np.abs(out.beat_times[:, None] - series.beat_times[None, :]).min(axis=0)
        np.testing.assert_allclose(nearest, 0.0, atol=1e-9)
        assert out.beat_times[-1] == pytest.approx(series.beat_times[-1])

    def test_idempotent(self):
        intervals = [0.5] * 10 + [0.1] + [0.5] * 10 + [2.4] + [0.5] * 5 + [12.0] + [0.5] * 5 + [1.4] + [0.5] * 3
        series = RrSeries.from_intervals(intervals)
        gap_start = series.beat_times[21]
        pp = _pp(np.concatenate([series.beat_times, [gap_start + 1.2]]))
        first = correct(series, pp)
        second = correct(first.as_rr(), pp)
        np.testing.assert_allclose(second.intervals, first.intervals)
        assert list(second.annotations) == list(first.annotations)

    def test_empty_series_rejected(self):
        with pytest.raises(DataError):
            correct(RrSeries(np.array([]), np.array([0.0])), NO_PEAKS)
