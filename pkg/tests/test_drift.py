import math

import numpy as np
import pytest

from no2cal.config import DriftConfig
from no2cal.drift import AlarmState, DriftTestResult, alarm_update, drift_check
from no2cal.errors import OrderingError
from no2cal.series import HOUR
from conftest import T0, make_series

CFG = DriftConfig()
AT = T0 + HOUR * 71  # first instant with a full trailing window


def result_at(i, failed=False, evaluable=True):
    return DriftTestResult(
        p_ks=0.01 if failed else 0.5,
        a1_hat=1.0,
        a0_hat=0.0,
        ks_pass=not failed,
        slope_pass=True,
        offset_pass=True,
        evaluated_at=T0 + HOUR * i,
        evaluable=evaluable,
    )


class TestDriftCheck:
    def test_identical_series_pass(self, rng):
        vals = rng.normal(20, 6, 72)
        y = make_series(vals)
        z = make_series(vals.copy(), site_id="proxy")
        r = drift_check(y, z, AT, CFG)
        assert r.evaluable
        assert r.p_ks == 1.0
        assert r.a1_hat == pytest.approx(1.0)
        assert abs(r.a0_hat) < 1e-9
        assert r.all_pass

    def test_constant_shift_fails_offset_and_ks(self, rng):
        z_vals = rng.normal(20, 6, 72)
        y = make_series(z_vals + 8.0)
        z = make_series(z_vals, site_id="proxy")
        r = drift_check(y, z, AT, CFG)
        # oracle: the moment formulas on the shifted window
        assert r.a1_hat == pytest.approx(1.0, abs=1e-12)
        assert r.a0_hat == pytest.approx(-8.0, abs=1e-9)
        assert not r.offset_pass
        assert not r.ks_pass  # 8 ppb against sd 6 separates the samples
        assert r.slope_pass

    def test_scaled_series_fails_slope(self, rng):
        z_vals = rng.normal(20, 6, 72)
        y = make_series(1.5 * z_vals)
        z = make_series(z_vals, site_id="proxy")
        r = drift_check(y, z, AT, CFG)
        assert r.a1_hat == pytest.approx(1.0 / 1.5, abs=1e-12)
        assert not r.slope_pass

    def test_insufficient_coverage_not_evaluable(self, rng):
        vals = rng.normal(20, 6, 72)
        vals[:30] = np.nan
        y = make_series(vals)
        z = make_series(rng.normal(20, 6, 72), site_id="proxy")
        r = drift_check(y, z, AT, CFG)
        assert not r.evaluable
        assert math.isnan(r.p_ks)
        assert not r.failed  # must not advance the counter

    def test_flatlined_sensor_fails_evaluably(self, rng):
        y = make_series(np.full(72, 12.0))
        z = make_series(rng.normal(20, 6, 72), site_id="proxy")
        r = drift_check(y, z, AT, CFG)
        assert r.evaluable
        assert not r.slope_pass and not r.offset_pass
        assert r.failed


class TestAlarmUpdate:
    def test_alarm_at_120th_consecutive_failure(self):
        state = AlarmState("s")
        for i in range(119):
            alarm_update(state, result_at(i, failed=True), CFG)
            assert not state.alarmed
        alarm_update(state, result_at(119, failed=True), CFG)
        assert state.alarmed
        assert state.consecutive_fail_hours == 120

    def test_single_pass_resets(self):
        state = AlarmState("s")
        for i in range(119):
            alarm_update(state, result_at(i, failed=True), CFG)
        alarm_update(state, result_at(119, failed=False), CFG)
        assert state.consecutive_fail_hours == 0
        assert not state.alarmed

    def test_not_evaluable_freezes_counter(self):
        state = AlarmState("s")
        alarm_update(state, result_at(0, failed=True), CFG)
        alarm_update(state, result_at(1, evaluable=False), CFG)
        assert state.consecutive_fail_hours == 1  # unchanged, not reset
        alarm_update(state, result_at(2, failed=True), CFG)
        assert state.consecutive_fail_hours == 2

    def test_out_of_order_rejected(self):
        state = AlarmState("s")
        alarm_update(state, result_at(5), CFG)
        with pytest.raises(OrderingError):
            alarm_update(state, result_at(5), CFG)
        with pytest.raises(OrderingError):
            alarm_update(state, result_at(3), CFG)

    def test_history_appended(self):
        state = AlarmState("s")
        for i in range(10):
            alarm_update(state, result_at(i, failed=i % 2 == 0), CFG)
        assert len(state.history) == 10
        assert state.history[0][0] == T0

    def test_alarm_holds_until_pass(self):
        state = AlarmState("s")
        for i in range(125):
            alarm_update(state, result_at(i, failed=True), CFG)
        assert state.alarmed
        alarm_update(state, result_at(125, evaluable=False), CFG)
        assert state.alarmed  # frozen counter keeps the alarm up
        alarm_update(state, result_at(126, failed=False), CFG)
        assert not state.alarmed


def run_chain(fail_flags, cfg):
    """Alarm chain over a boolean failure sequence; returns alarmed set."""
    state = AlarmState("s")
    alarmed = set()
    for i, failed in enumerate(fail_flags):
        alarm_update(state, result_at(i, failed=failed), cfg)
        if state.alarmed:
            alarmed.add(i)
    return alarmed


class TestProperties:
    def test_monotonicity_widened_bounds_never_add_alarms(self, rng):
        # widened bounds turn some failures into passes; alarms cannot grow
        p = rng.uniform(0, 0.2, 2000)
        a1 = rng.normal(1.0, 0.35, 2000)
        a0 = rng.normal(0.0, 5.0, 2000)
        tight = DriftConfig()
        wide = DriftConfig(ks_alpha=0.01, slope_bounds=(0.5, 1.6), offset_bounds=(-9.0, 9.0))
        fails_tight = [
            not (pi >= tight.ks_alpha and 0.7 < s < 1.3 and -5 < o < 5)
            for pi, s, o in zip(p, a1, a0)
        ]
        fails_wide = [
            not (pi >= wide.ks_alpha and 0.5 < s < 1.6 and -9 < o < 9)
            for pi, s, o in zip(p, a1, a0)
        ]
        alarmed_tight = run_chain(fails_tight, tight)
        alarmed_wide = run_chain(fails_wide, wide)
        assert alarmed_wide <= alarmed_tight

    def test_determinism(self, rng):
        vals = rng.normal(20, 6, 300)
        proxy = vals + rng.normal(0, 1, 300)
        y, z = make_series(vals), make_series(proxy, site_id="p")
        h1 = [drift_check(y, z, T0 + HOUR * t, CFG) for t in range(71, 300)]
        h2 = [drift_check(y, z, T0 + HOUR * t, CFG) for t in range(71, 300)]
        assert h1 == h2
