"""Eligibility screening, wear-time compliance, and the pre-study baseline.

The baseline walking pattern has four cells, keyed by (morning anchor?,
weekday?). Each cell is the mean number of steps in the 24-hour window
that starts at the corresponding nudge anchor, taken over the 30 pre-study
days of the matching weekday class.

Day-level records only split counts at 12:00, so sub-day windows are
apportioned deterministically assuming steps spread uniformly within each
bucket:

* 06:00 window over day d:  morning(d)/2 + evening(d) + morning(d+1)/2
* 15:00 window over day d:  0.75*evening(d) + morning(d+1) + 0.25*evening(d+1)

When the following day's record is missing (the last day of a history),
the day's own record stands in for it.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .domain import DeliveryTime, StepRecord, is_weekday
from .errors import DegenerateBaselineError, InsufficientHistoryError

#: Steps/day below which a worn-device day is not credible.
WEAR_THRESHOLD = 500
#: Days meeting WEAR_THRESHOLD required per period for compliance.
MIN_WEAR_DAYS = 7
#: Mean pre-study steps must be strictly below this to qualify.
ELIGIBILITY_STEP_CAP = 8000.0
#: Minimum days of any recorded data for eligibility screening.
MIN_HISTORY_DAYS = 7
#: A baseline cell below this makes the relative reward ill-defined.
BASELINE_FLOOR = 100.0
#: Length of the pre-study observation window.
PRE_STUDY_DAYS = 30

# Share of the 00:00-12:00 bucket that falls after the 06:00 anchor,
# and of the 12:00-24:00 bucket that falls after the 15:00 anchor.
_MORNING_TAIL = 6.0 / 12.0
_AFTERNOON_TAIL = 9.0 / 12.0


class Period(Enum):
    """Analysis phases, as inclusive study-day ranges."""

    BASELINE = (-PRE_STUDY_DAYS, -1)
    MONTH1 = (1, 30)
    MONTH2 = (31, 60)

    @property
    def day_range(self) -> tuple[int, int]:
        return self.value

    def contains(self, day: int) -> bool:
        lo, hi = self.value
        return lo <= day <= hi


@dataclass(frozen=True)
class ComplianceReport:
    period: Period
    qualifying_days: int

    @property
    def compliant(self) -> bool:
        return self.qualifying_days >= MIN_WEAR_DAYS


@dataclass(frozen=True)
class BaselinePattern:
    """Pre-study walking pattern: 4 anchored-window cells plus daily stats."""

    cells: Mapping[tuple[bool, bool], float]  # (is_morning, is_weekday) -> steps
    daily_mean: float
    daily_sd: float

    def cell(self, is_morning: bool, is_weekday: bool) -> float:
        return self.cells[(bool(is_morning), bool(is_weekday))]


def window_total(
    day_record: StepRecord, next_record: StepRecord | None, time: DeliveryTime
) -> float:
    """Steps in the 24h window opening at ``time``'s anchor on the record's day."""
    nxt = next_record if next_record is not None else day_record
    if time == DeliveryTime.MORNING:
        return (
            _MORNING_TAIL * day_record.morning_steps
            + day_record.evening_steps
            + (1.0 - _MORNING_TAIL) * nxt.morning_steps
        )
    return (
        _AFTERNOON_TAIL * day_record.evening_steps
        + nxt.morning_steps
        + (1.0 - _AFTERNOON_TAIL) * nxt.evening_steps
    )


def _by_day(records: Sequence[StepRecord]) -> dict[int, StepRecord]:
    index: dict[int, StepRecord] = {}
    for rec in records:
        if rec.day in index:
            raise ValueError(f"duplicate step record for day {rec.day}")
        index[rec.day] = rec
    return index


def check_eligibility(pre_study: Sequence[StepRecord]) -> bool:
    """True iff mean daily steps over the pre-study window is below 8,000."""
    index = _by_day(pre_study)
    if len(index) < MIN_HISTORY_DAYS:
        raise InsufficientHistoryError(
            f"need at least {MIN_HISTORY_DAYS} recorded days, got {len(index)}"
        )
    mean = float(np.mean([rec.total_steps for rec in index.values()]))
    return mean < ELIGIBILITY_STEP_CAP


def compliance(records: Sequence[StepRecord], period: Period) -> ComplianceReport:
    """Count wear-proxy days (>= 500 steps) inside the period."""
    qualifying = sum(
        1
        for rec in records
        if period.contains(rec.day) and rec.total_steps >= WEAR_THRESHOLD
    )
    return ComplianceReport(period=period, qualifying_days=qualifying)


def compute_baseline(pre_study: Sequence[StepRecord]) -> BaselinePattern:
    """Aggregate the 30-day history into the 4-cell anchored-window pattern."""
    index = _by_day(pre_study)
    if not index:
        raise InsufficientHistoryError("empty pre-study history")
    days = sorted(index)

    window_sums: dict[tuple[bool, bool], list[float]] = {
        (m, w): [] for m in (True, False) for w in (True, False)
    }
    for day in days:
        rec = index[day]
        nxt = index.get(day + 1)
        weekday = is_weekday(day)
        window_sums[(True, weekday)].append(
            window_total(rec, nxt, DeliveryTime.MORNING)
        )
        window_sums[(False, weekday)].append(
            window_total(rec, nxt, DeliveryTime.AFTERNOON)
        )

    totals = np.array([index[d].total_steps for d in days], dtype=float)
    daily_mean = float(totals.mean())
    daily_sd = float(totals.std(ddof=1)) if len(totals) > 1 else 0.0

    cells = {
        key: (float(np.mean(vals)) if vals else daily_mean)
        for key, vals in window_sums.items()
    }
    low = [key for key, v in cells.items() if v < BASELINE_FLOOR]
    if low:
        raise DegenerateBaselineError(
            f"baseline cells below {BASELINE_FLOOR:g} steps: {sorted(low)}"
        )
    return BaselinePattern(cells=cells, daily_mean=daily_mean, daily_sd=daily_sd)
