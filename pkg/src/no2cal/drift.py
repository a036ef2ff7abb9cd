"""Rolling three-test drift detection and the alarm persistence state machine.

Each evaluated hour, the corrected sensor window is compared against the
proxy window with a two-sample KS test and moment-matched slope/offset
estimates. Any failing test advances a per-site counter; the counter
resets on an hour where all three pass, freezes on hours that cannot be
evaluated, and raises the alarm once it reaches the persistence duration.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime

from .config import DriftConfig
from .errors import DegenerateVariance, OrderingError
from .series import HOUR, HourlySeries, window_pair
from .stats import ks_two_sample, moment_match


@dataclass(frozen=True)
class DriftTestResult:
    """Outcome of the three drift tests at one instant.

    ``evaluable`` is False when the window lacked coverage; the numeric
    fields are NaN then and the result must not advance the fail counter.
    """

    p_ks: float
    a1_hat: float
    a0_hat: float
    ks_pass: bool
    slope_pass: bool
    offset_pass: bool
    evaluated_at: datetime
    evaluable: bool = True

    @property
    def all_pass(self) -> bool:
        return self.ks_pass and self.slope_pass and self.offset_pass

    @property
    def failed(self) -> bool:
        return self.evaluable and not self.all_pass


@dataclass
class AlarmState:
    """Per-site alarm memory; single writer, one instance per site."""

    site_id: str
    consecutive_fail_hours: int = 0
    alarmed: bool = False
    last_result: DriftTestResult | None = None
    history: list[tuple[datetime, DriftTestResult, bool]] = field(default_factory=list)


def drift_check(
    site_series: HourlySeries,
    proxy_series: HourlySeries,
    at: datetime,
    cfg: DriftConfig,
) -> DriftTestResult:
    """Run the three drift tests on the trailing window ending at ``at``.

    The window spans the ``cfg.window_hours`` hours up to and including
    ``at``. Insufficient joint coverage yields an evaluable=False result.
    A flatlined sensor window (zero variance) cannot produce slope/offset
    estimates and is treated as a failing, evaluable result: a dead signal
    is drift evidence, not missing data.
    """
    end = at + HOUR  # window is inclusive of `at`
    start = end - HOUR * cfg.window_hours
    y, z, achieved = window_pair(site_series, proxy_series, start, end)
    if achieved < cfg.min_coverage:
        return DriftTestResult(
            p_ks=math.nan,
            a1_hat=math.nan,
            a0_hat=math.nan,
            ks_pass=False,
            slope_pass=False,
            offset_pass=False,
            evaluated_at=at,
            evaluable=False,
        )
    d_stat, p_ks = ks_two_sample(y, z)
    try:
        a1, a0 = moment_match(y, z)
    except DegenerateVariance:
        a1, a0 = math.inf, math.nan
    ks_pass = p_ks >= cfg.ks_alpha
    slope_pass = cfg.slope_bounds[0] < a1 < cfg.slope_bounds[1]
    offset_pass = cfg.offset_bounds[0] < a0 < cfg.offset_bounds[1] if math.isfinite(a0) else False
    return DriftTestResult(
        p_ks=p_ks,
        a1_hat=a1,
        a0_hat=a0,
        ks_pass=ks_pass,
        slope_pass=slope_pass,
        offset_pass=offset_pass,
        evaluated_at=at,
    )


def alarm_update(
    state: AlarmState,
    result: DriftTestResult,
    cfg: DriftConfig,
    stride_hours: int = 1,
) -> AlarmState:
    """Advance the persistence state machine with one test result.

    Failing hours add ``stride_hours`` to the counter; a passing hour
    resets it; a not-evaluable hour leaves it untouched (missing data is
    not evidence of health). The alarm holds exactly while the counter is
    at or above the persistence duration, so it clears only once a
    subsequent check passes on corrected output.
    """
    if state.history and result.evaluated_at <= state.history[-1][0]:
        raise OrderingError(
            f"{state.site_id}: result at {result.evaluated_at.isoformat()} not after "
            f"last history entry {state.history[-1][0].isoformat()}"
        )
    if result.evaluable:
        if result.all_pass:
            state.consecutive_fail_hours = 0
        else:
            state.consecutive_fail_hours += stride_hours
    state.alarmed = state.consecutive_fail_hours >= cfg.persistence_hours
    state.last_result = result
    state.history.append((result.evaluated_at, result, state.alarmed))
    return state
