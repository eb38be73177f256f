"""Proximal reward and the per-day state vector.

The reward is the relative change of the 24-hour post-nudge step window
against the participant's matching baseline cell. The state vector packs
a static block (demographics, survey, pre-study pattern) and a dynamic
block computed from the trailing 7 days ending the day before the
decision, so nothing from the decision day itself can leak in.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

from .baseline import BASELINE_FLOOR, WEAR_THRESHOLD, BaselinePattern
from .domain import (
    DecisionRecord,
    DeliveryTime,
    FeedbackEvent,
    FeedbackRating,
    NudgeTheme,
    ParticipantProfile,
    StepRecord,
    day_of_week,
)
from .errors import DegenerateBaselineError, InsufficientDataError

DEFAULT_VOLUME_CUTOFF = 5000.0
DEFAULT_CV_CUTOFF = 0.25
RECENT_WINDOW_DAYS = 7


class WalkVolume(IntEnum):
    LOW = 0
    HIGH = 1


class WalkRegularity(IntEnum):
    REGULAR = 0
    IRREGULAR = 1


@dataclass(frozen=True)
class Reward:
    """Relative 24h step change against the matching baseline cell."""

    value: float


def compute_reward(
    post_window_steps: float,
    baseline: BaselinePattern,
    is_morning: bool,
    is_weekday: bool,
) -> Reward:
    """(observed window - baseline cell) / baseline cell."""
    cell = baseline.cell(is_morning, is_weekday)
    if cell < BASELINE_FLOOR:
        raise DegenerateBaselineError(
            f"baseline cell {cell:.1f} below floor {BASELINE_FLOOR:g}"
        )
    return Reward((float(post_window_steps) - cell) / cell)


def recent_slope(
    totals: Sequence[float], days: Optional[Sequence[float]] = None
) -> float:
    """OLS slope of daily totals on day index.

    ``days`` supplies explicit x positions when the series has gaps;
    otherwise consecutive positions are assumed.
    """
    y = np.asarray(totals, dtype=float)
    if y.size < 2:
        raise InsufficientDataError("slope needs at least 2 days")
    x = np.arange(y.size, dtype=float) if days is None else np.asarray(days, float)
    if x.size != y.size:
        raise ValueError("days and totals lengths differ")
    xc = x - x.mean()
    denom = float(xc @ xc)
    if denom == 0.0:
        raise InsufficientDataError("all observations on the same day")
    return float(xc @ (y - y.mean()) / denom)


def classify_walk_pattern(
    window: Sequence[StepRecord],
    volume_cutoff: float = DEFAULT_VOLUME_CUTOFF,
    cv_cutoff: float = DEFAULT_CV_CUTOFF,
) -> tuple[WalkVolume, WalkRegularity]:
    """Label a step history as low/high volume and regular/irregular.

    Regularity is the coefficient of variation of the day-of-week mean
    step counts; an empty or constant-by-weekday history is regular.
    """
    if not window:
        raise InsufficientDataError("cannot classify an empty window")
    totals = np.array([rec.total_steps for rec in window], dtype=float)
    volume = WalkVolume.HIGH if totals.mean() >= volume_cutoff else WalkVolume.LOW

    dows = np.array([day_of_week(rec.day) for rec in window])
    dow_means = np.array(
        [totals[dows == d].mean() for d in range(7) if np.any(dows == d)]
    )
    center = dow_means.mean()
    cv = 0.0 if center <= 0 else float(dow_means.std(ddof=0) / center)
    regularity = (
        WalkRegularity.REGULAR if cv <= cv_cutoff else WalkRegularity.IRREGULAR
    )
    return volume, regularity


_STATIC_NAMES = (
    "age",
    "sex",
    "device_type",
    "education",
    "area",
    "weather",
    *[f"survey_q{q:02d}" for q in range(1, 21)],
    "prestudy_mean",
    "prestudy_sd",
    "prestudy_volume",
    "prestudy_regularity",
)

_DYNAMIC_NAMES = (
    "recent_mean",
    "recent_sd",
    "recent_slope",
    "feedback_up",
    "feedback_down",
    "day_of_week",
    "recent_volume",
    "recent_regularity",
    "recent_morning_mean",
    "recent_evening_mean",
    "missing_pct",
    "nudges_ability",
    "nudges_perceived_benefit",
    "nudges_physical_opportunity",
    "nudges_planning",
    "nudges_prioritization",
    "nudges_social_opportunity",
    "nudges_morning",
    "nudges_afternoon",
)

#: Stable column order for model matrices and CSV export.
FEATURE_NAMES: tuple[str, ...] = _STATIC_NAMES + _DYNAMIC_NAMES
N_FEATURES = len(FEATURE_NAMES)
STATIC_SIZE = len(_STATIC_NAMES)


@dataclass(frozen=True)
class FeatureVector:
    """A fixed-width numeric state row; column meanings in FEATURE_NAMES."""

    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != N_FEATURES:
            raise ValueError(
                f"expected {N_FEATURES} features, got {len(self.values)}"
            )

    def __getitem__(self, name: str) -> float:
        return self.values[FEATURE_NAMES.index(name)]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def to_dict(self) -> dict:
        return {"values": list(self.values)}

    @classmethod
    def from_dict(cls, d) -> "FeatureVector":
        return cls(values=tuple(float(v) for v in d["values"]))

    @classmethod
    def from_array(cls, arr) -> "FeatureVector":
        return cls(values=tuple(float(v) for v in arr))


def static_block(
    profile: ParticipantProfile,
    pre_study: Sequence[StepRecord],
    volume_cutoff: float = DEFAULT_VOLUME_CUTOFF,
    cv_cutoff: float = DEFAULT_CV_CUTOFF,
) -> tuple[float, ...]:
    """Features fixed at enrollment; constant for a participant."""
    if not pre_study:
        raise InsufficientDataError("no pre-study history for participant")
    pre_totals = np.array([rec.total_steps for rec in pre_study], dtype=float)
    pre_mean = float(pre_totals.mean())
    pre_sd = float(pre_totals.std(ddof=1)) if pre_totals.size > 1 else 0.0
    pre_vol, pre_reg = classify_walk_pattern(pre_study, volume_cutoff, cv_cutoff)
    return (
        float(profile.age),
        float(profile.sex),
        float(profile.device_type),
        float(profile.education),
        float(profile.location),
        float(profile.weather_code),
        *[float(r) for r in profile.comb_survey.responses],
        pre_mean,
        pre_sd,
        float(pre_vol),
        float(pre_reg),
    )


def dynamic_block(
    steps_by_day: dict[int, StepRecord],
    decision_history: Sequence[DecisionRecord],
    feedback_history: Sequence[FeedbackEvent],
    day: int,
    fallback_mean: float,
    fallback_volume: WalkVolume,
    fallback_regularity: WalkRegularity,
    volume_cutoff: float = DEFAULT_VOLUME_CUTOFF,
    cv_cutoff: float = DEFAULT_CV_CUTOFF,
) -> tuple[float, ...]:
    """Trailing-window features for one day; reads only days before it.

    A window day is missing when it has no record or falls below the
    wear-time proxy; missing days are dropped, never imputed. With no
    usable day at all, the level and pattern codes fall back to the
    pre-study values.
    """
    window_days = range(day - RECENT_WINDOW_DAYS, day)
    worn = [
        steps_by_day[d]
        for d in window_days
        if d in steps_by_day and steps_by_day[d].total_steps >= WEAR_THRESHOLD
    ]
    missing_pct = 100.0 * (RECENT_WINDOW_DAYS - len(worn)) / RECENT_WINDOW_DAYS

    if worn:
        totals = np.array([rec.total_steps for rec in worn], dtype=float)
        recent_mean = float(totals.mean())
        recent_sd = float(totals.std(ddof=1)) if totals.size > 1 else 0.0
        morning_mean = float(np.mean([rec.morning_steps for rec in worn]))
        evening_mean = float(np.mean([rec.evening_steps for rec in worn]))
        rec_vol, rec_reg = classify_walk_pattern(worn, volume_cutoff, cv_cutoff)
    else:
        recent_mean, recent_sd = fallback_mean, 0.0
        morning_mean = evening_mean = 0.0
        rec_vol, rec_reg = fallback_volume, fallback_regularity

    if len(worn) >= 2:
        slope = recent_slope(
            [rec.total_steps for rec in worn], days=[rec.day for rec in worn]
        )
    else:
        slope = 0.0

    fb_up = fb_down = 0
    for ev in feedback_history:
        if ev.day in window_days:
            if ev.rating == FeedbackRating.UP:
                fb_up += 1
            elif ev.rating == FeedbackRating.DOWN:
                fb_down += 1

    theme_counts = [0] * len(NudgeTheme)
    time_counts = [0, 0]
    for dec in decision_history:
        if dec.day in window_days and dec.action is not None:
            theme_counts[int(dec.action.theme)] += 1
            time_counts[int(dec.action.time)] += 1

    return (
        recent_mean,
        recent_sd,
        slope,
        float(fb_up),
        float(fb_down),
        float(day_of_week(day)),
        float(rec_vol),
        float(rec_reg),
        morning_mean,
        evening_mean,
        missing_pct,
        *[float(c) for c in theme_counts],
        float(time_counts[int(DeliveryTime.MORNING)]),
        float(time_counts[int(DeliveryTime.AFTERNOON)]),
    )


def extract_features(
    profile: ParticipantProfile,
    step_history: Sequence[StepRecord],
    decision_history: Sequence[DecisionRecord],
    feedback_history: Sequence[FeedbackEvent],
    day: int,
    volume_cutoff: float = DEFAULT_VOLUME_CUTOFF,
    cv_cutoff: float = DEFAULT_CV_CUTOFF,
) -> FeatureVector:
    """Build the state row for a participant-day.

    Only data from days strictly before ``day`` is consulted.
    """
    if day < 1:
        raise ValueError(f"study day must be >= 1, got {day}")
    pre_study = [rec for rec in step_history if rec.day < 0]
    static = static_block(profile, pre_study, volume_cutoff, cv_cutoff)
    pre_mean = static[FEATURE_NAMES.index("prestudy_mean")]
    pre_vol = WalkVolume(int(static[FEATURE_NAMES.index("prestudy_volume")]))
    pre_reg = WalkRegularity(int(static[FEATURE_NAMES.index("prestudy_regularity")]))
    dynamic = dynamic_block(
        {rec.day: rec for rec in step_history},
        decision_history,
        feedback_history,
        day,
        pre_mean,
        pre_vol,
        pre_reg,
        volume_cutoff,
        cv_cutoff,
    )
    return FeatureVector(values=static + dynamic)
