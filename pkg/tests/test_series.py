import math
from datetime import timedelta, timezone

import numpy as np
import pytest

from no2cal.errors import IngestionError, InsufficientData
from no2cal.series import HOUR, Channel, HourlySeries, align, hourly_average
from conftest import T0, make_series


def minutes(i):
    return T0 + timedelta(minutes=i)


class TestHourlyAverage:
    def test_constant_hour(self):
        raw = [(minutes(i), 10.0) for i in range(60)]
        s = hourly_average(raw, "s", Channel.C_OX)
        assert len(s) == 1
        assert s.start == T0
        assert s.values[0] == 10.0

    def test_mean_and_gap_marking(self):
        raw = [
            (minutes(5), 5.0),
            (minutes(20), 15.0),
            (minutes(130), 9.0),  # hour H+2; H+1 has no samples
        ]
        s = hourly_average(raw, "s", Channel.C_OX)
        assert len(s) == 3
        assert s.values[0] == 10.0
        assert math.isnan(s.values[1])
        assert s.values[2] == 9.0

    def test_sinusoid_hour_mean(self):
        # oracle: direct summation of the same generated minute samples
        vals = [10.0 + 5.0 * math.sin(2 * math.pi * i / 60.0) for i in range(60)]
        raw = [(minutes(i), v) for i, v in enumerate(vals)]
        s = hourly_average(raw, "s", Channel.C_OX)
        assert s.values[0] == pytest.approx(sum(vals) / 60.0, abs=1e-12)
        assert s.values[0] == pytest.approx(10.0, abs=0.1)

    def test_non_increasing_timestamps_name_index(self):
        raw = [(minutes(0), 1.0), (minutes(5), 2.0), (minutes(5), 3.0)]
        with pytest.raises(IngestionError, match="sample 2"):
            hourly_average(raw, "s", Channel.C_OX)

    def test_idempotent_on_hourly_input(self):
        vals = [3.0, 4.5, np.nan, 7.25]
        raw = [(T0 + HOUR * i, v) for i, v in enumerate(vals) if not math.isnan(v)]
        s1 = hourly_average(raw, "s", Channel.C_OX)
        s2 = hourly_average(list((ts, v) for ts, v in s1.samples() if not math.isnan(v)), "s", Channel.C_OX)
        assert np.array_equal(s1.values, s2.values, equal_nan=True)

    def test_rejects_non_finite(self):
        with pytest.raises(IngestionError, match="non-finite"):
            hourly_average([(minutes(0), math.inf)], "s", Channel.C_OX)


class TestAlign:
    def test_identical_full_coverage(self):
        a = make_series(np.arange(72.0))
        b = make_series(np.arange(72.0) + 1)
        stamps, av, bv = align(a, b, T0, T0 + HOUR * 72, min_coverage=0.75)
        assert len(stamps) == 72
        assert av.size == bv.size == 72

    def test_union_of_gaps_drops_pairs(self):
        av = np.arange(72.0)
        bv = np.arange(72.0)
        av[[3, 4]] = np.nan
        bv[[4, 7]] = np.nan
        a = make_series(av)
        b = make_series(bv)
        stamps, x, y = align(a, b, T0, T0 + HOUR * 72)
        assert len(stamps) == 69

    def test_insufficient_coverage_carries_fraction(self):
        av = np.arange(72.0)
        av[36:] = np.nan  # half coverage
        a = make_series(av)
        b = make_series(np.arange(72.0))
        with pytest.raises(InsufficientData) as e:
            align(a, b, T0, T0 + HOUR * 72, min_coverage=0.75)
        assert e.value.achieved == pytest.approx(0.5)

    def test_symmetric_timestamp_set(self, rng):
        av = rng.normal(10, 3, 100)
        bv = rng.normal(10, 3, 100)
        av[rng.integers(0, 100, 20)] = np.nan
        bv[rng.integers(0, 100, 20)] = np.nan
        a, b = make_series(av), make_series(bv)
        s_ab, *_ = align(a, b, T0, T0 + HOUR * 100)
        s_ba, *_ = align(b, a, T0, T0 + HOUR * 100)
        assert s_ab == s_ba


class TestHourlySeries:
    def test_requires_hour_aligned_utc_start(self):
        with pytest.raises(IngestionError):
            HourlySeries("s", Channel.C_OX, T0 + timedelta(minutes=30), np.ones(3))
        with pytest.raises(IngestionError):
            HourlySeries("s", Channel.C_OX, T0.replace(tzinfo=None), np.ones(3))

    def test_values_frozen(self):
        s = make_series([1.0, 2.0])
        with pytest.raises(ValueError):
            s.values[0] = 5.0

    def test_window_pads_with_nan(self):
        s = make_series([1.0, 2.0, 3.0])
        w = s.window(T0 - HOUR, T0 + HOUR * 5)
        assert w.size == 6
        assert math.isnan(w[0]) and math.isnan(w[4]) and math.isnan(w[5])
        assert list(w[1:4]) == [1.0, 2.0, 3.0]

    def test_from_samples_marks_gaps(self):
        s = HourlySeries.from_samples(
            "s", Channel.O3, [(T0, 1.0), (T0 + HOUR * 3, None), (T0 + HOUR * 5, 2.0)]
        )
        assert len(s) == 6
        assert math.isnan(s.values[1]) and math.isnan(s.values[3])
        assert s.values[5] == 2.0

    def test_from_samples_rejects_unaligned(self):
        with pytest.raises(IngestionError, match="not hour-aligned"):
            HourlySeries.from_samples("s", Channel.O3, [(T0 + timedelta(minutes=1), 1.0)])

    def test_timezone_normalized_to_utc(self):
        pst = timezone(timedelta(hours=-8))
        s = HourlySeries.from_samples("s", Channel.O3, [(T0.astimezone(pst), 4.0)])
        assert s.start == T0
