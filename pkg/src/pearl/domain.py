"""Shared vocabulary types: actions, messages, participants, and decision logs.

All types here are immutable value objects with JSON-safe ``to_dict`` /
``from_dict`` round-trips, so they can be logged, exported, and shared
across threads freely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import IntEnum
from pathlib import Path
from typing import TYPE_CHECKING, Mapping, Optional, Sequence

import numpy as np

from .errors import EmptyBucketError

if TYPE_CHECKING:
    from .features import FeatureVector


class NudgeTheme(IntEnum):
    """The six behavioral themes a nudge can target."""

    ABILITY = 0
    PERCEIVED_BENEFIT = 1
    PHYSICAL_OPPORTUNITY = 2
    PLANNING = 3
    PRIORITIZATION = 4
    SOCIAL_OPPORTUNITY = 5


# Canonical PascalCase names used in message files and CSV exports.
THEME_NAMES = {
    NudgeTheme.ABILITY: "Ability",
    NudgeTheme.PERCEIVED_BENEFIT: "PerceivedBenefit",
    NudgeTheme.PHYSICAL_OPPORTUNITY: "PhysicalOpportunity",
    NudgeTheme.PLANNING: "Planning",
    NudgeTheme.PRIORITIZATION: "Prioritization",
    NudgeTheme.SOCIAL_OPPORTUNITY: "SocialOpportunity",
}
THEME_BY_NAME = {name: theme for theme, name in THEME_NAMES.items()}


class DeliveryTime(IntEnum):
    """When a nudge is shown; anchors are 06:00 and 15:00 local time."""

    MORNING = 0
    AFTERNOON = 1


#: Clock hour at which each delivery window opens.
ANCHOR_HOUR = {DeliveryTime.MORNING: 6, DeliveryTime.AFTERNOON: 15}


class Arm(IntEnum):
    """Trial arm assignment."""

    CONTROL = 0
    RANDOM = 1
    FIXED = 2
    RL = 3


class Sex(IntEnum):
    FEMALE = 0
    MALE = 1


class Location(IntEnum):
    URBAN = 0
    SUBURBAN = 1
    RURAL = 2


class DeviceType(IntEnum):
    TRACKER_BAND = 0
    SMARTWATCH = 1


class Education(IntEnum):
    HIGH_SCHOOL = 0
    COLLEGE = 1
    GRADUATE = 2


class TimePreference(IntEnum):
    MORNING = 0
    AFTERNOON = 1
    NONE = 2


class FeedbackRating(IntEnum):
    UP = 0
    DOWN = 1
    NONE = 2


@dataclass(frozen=True, order=True)
class Action:
    """One of the 12 arms of the bandit: a theme paired with a delivery time."""

    theme: NudgeTheme
    time: DeliveryTime

    def to_dict(self) -> dict:
        return {"theme": self.theme.name, "time": self.time.name}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Action":
        return cls(NudgeTheme[d["theme"]], DeliveryTime[d["time"]])


N_ACTIONS = 12

ALL_ACTIONS: tuple[Action, ...] = tuple(
    Action(theme, time) for theme in NudgeTheme for time in DeliveryTime
)


def action_index(action: Action) -> int:
    """Map an action to its stable index in 0..11."""
    return int(action.theme) * 2 + int(action.time)


def action_from_index(index: int) -> Action:
    """Inverse of :func:`action_index`."""
    if not 0 <= index < N_ACTIONS:
        raise ValueError(f"action index out of range: {index}")
    return ALL_ACTIONS[index]


@dataclass(frozen=True)
class NudgeMessage:
    id: str
    theme: NudgeTheme
    text: str

    def to_dict(self) -> dict:
        return {"id": self.id, "theme": THEME_NAMES[self.theme], "text": self.text}

    @classmethod
    def from_dict(cls, d: Mapping) -> "NudgeMessage":
        return cls(id=d["id"], theme=THEME_BY_NAME[d["theme"]], text=d["text"])


@dataclass(frozen=True)
class MessageRepository:
    """Per-theme buckets of nudge texts; every theme must have at least one."""

    buckets: Mapping[NudgeTheme, tuple[NudgeMessage, ...]]

    def __post_init__(self):
        seen_ids = set()
        for theme in NudgeTheme:
            bucket = self.buckets.get(theme, ())
            if not bucket:
                raise EmptyBucketError(f"no messages for theme {theme.name}")
            for msg in bucket:
                if msg.theme != theme:
                    raise ValueError(
                        f"message {msg.id!r} filed under {theme.name} "
                        f"but tagged {msg.theme.name}"
                    )
                if msg.id in seen_ids:
                    raise ValueError(f"duplicate message id {msg.id!r}")
                seen_ids.add(msg.id)

    def size(self) -> int:
        return sum(len(b) for b in self.buckets.values())

    def to_dict(self) -> list[dict]:
        return [m.to_dict() for theme in NudgeTheme for m in self.buckets[theme]]

    @classmethod
    def from_dict(cls, records: Sequence[Mapping]) -> "MessageRepository":
        buckets: dict[NudgeTheme, list[NudgeMessage]] = {t: [] for t in NudgeTheme}
        for rec in records:
            msg = NudgeMessage.from_dict(rec)
            buckets[msg.theme].append(msg)
        return cls({t: tuple(b) for t, b in buckets.items()})

    @classmethod
    def load(cls, path: str | Path) -> "MessageRepository":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def sample_message(
    repo: MessageRepository, theme: NudgeTheme, rng: np.random.Generator
) -> NudgeMessage:
    """Draw uniformly from the theme's bucket."""
    bucket = repo.buckets.get(theme, ())
    if not bucket:
        raise EmptyBucketError(f"no messages for theme {theme.name}")
    return bucket[int(rng.integers(len(bucket)))]


# Default question grouping: 20 survey items split over the six sub-themes.
DEFAULT_QUESTION_MAP: tuple[NudgeTheme, ...] = (
    (NudgeTheme.ABILITY,) * 4
    + (NudgeTheme.PLANNING,) * 3
    + (NudgeTheme.PERCEIVED_BENEFIT,) * 4
    + (NudgeTheme.PRIORITIZATION,) * 3
    + (NudgeTheme.PHYSICAL_OPPORTUNITY,) * 3
    + (NudgeTheme.SOCIAL_OPPORTUNITY,) * 3
)


@dataclass(frozen=True)
class CombSurvey:
    """20 Likert items (1..5), each mapped to one of the six sub-themes."""

    responses: tuple[int, ...]
    question_map: tuple[NudgeTheme, ...] = DEFAULT_QUESTION_MAP

    def __post_init__(self):
        if len(self.responses) != len(self.question_map):
            raise ValueError("responses and question_map lengths differ")
        if any(not 1 <= r <= 5 for r in self.responses):
            raise ValueError("Likert responses must lie in 1..5")
        themes = set(self.question_map)
        if themes != set(NudgeTheme):
            missing = sorted(t.name for t in set(NudgeTheme) - themes)
            raise ValueError(f"question map misses sub-themes: {missing}")

    def sub_theme_mean(self, theme: NudgeTheme) -> float:
        scores = [r for r, t in zip(self.responses, self.question_map) if t == theme]
        return sum(scores) / len(scores)

    def sub_theme_means(self) -> dict[NudgeTheme, float]:
        return {t: self.sub_theme_mean(t) for t in NudgeTheme}

    def to_dict(self) -> dict:
        return {
            "responses": list(self.responses),
            "question_map": [t.name for t in self.question_map],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "CombSurvey":
        return cls(
            responses=tuple(int(r) for r in d["responses"]),
            question_map=tuple(NudgeTheme[n] for n in d["question_map"]),
        )


@dataclass(frozen=True)
class ParticipantProfile:
    """Static participant attributes fixed at enrollment.

    ``weather_code`` is the simulator's 3-level seasonal placeholder; a
    deployment would replace it with a real feed.
    """

    id: str
    age: float
    sex: Sex
    weight: float
    location: Location
    device_type: DeviceType
    education: Education
    comb_survey: CombSurvey
    time_preference: TimePreference
    arm: Arm
    enrollment_day: int = 0
    weather_code: int = 0

    def __post_init__(self):
        if not 22 <= self.age <= 60:
            raise ValueError(f"age out of range [22, 60]: {self.age}")
        if self.weight <= 0:
            raise ValueError(f"weight must be positive: {self.weight}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "age": self.age,
            "sex": self.sex.name,
            "weight": self.weight,
            "location": self.location.name,
            "device_type": self.device_type.name,
            "education": self.education.name,
            "comb_survey": self.comb_survey.to_dict(),
            "time_preference": self.time_preference.name,
            "arm": self.arm.name,
            "enrollment_day": self.enrollment_day,
            "weather_code": self.weather_code,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ParticipantProfile":
        return cls(
            id=d["id"],
            age=float(d["age"]),
            sex=Sex[d["sex"]],
            weight=float(d["weight"]),
            location=Location[d["location"]],
            device_type=DeviceType[d["device_type"]],
            education=Education[d["education"]],
            comb_survey=CombSurvey.from_dict(d["comb_survey"]),
            time_preference=TimePreference[d["time_preference"]],
            arm=Arm[d["arm"]],
            enrollment_day=int(d["enrollment_day"]),
            weather_code=int(d.get("weather_code", 0)),
        )


@dataclass(frozen=True)
class StepRecord:
    """One day of step counts, split at the 12:00 boundary.

    ``day`` uses study-day numbering: 1..T during the study, negative for
    the pre-study window (-30..-1). There is no day 0.
    """

    participant_id: str
    day: int
    morning_steps: int
    evening_steps: int

    def __post_init__(self):
        if self.morning_steps < 0 or self.evening_steps < 0:
            raise ValueError("step counts must be non-negative")

    @property
    def total_steps(self) -> int:
        return self.morning_steps + self.evening_steps

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "day": self.day,
            "morning_steps": self.morning_steps,
            "evening_steps": self.evening_steps,
            "total_steps": self.total_steps,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StepRecord":
        rec = cls(
            participant_id=d["participant_id"],
            day=int(d["day"]),
            morning_steps=int(d["morning_steps"]),
            evening_steps=int(d["evening_steps"]),
        )
        if "total_steps" in d and int(d["total_steps"]) != rec.total_steps:
            raise ValueError("total_steps does not equal morning + evening")
        return rec


def day_of_week(day: int) -> int:
    """Day-of-week code for a study day; 0..4 weekday, 5..6 weekend."""
    return day % 7


def is_weekday(day: int) -> bool:
    return day_of_week(day) < 5


@dataclass(frozen=True)
class FeedbackEvent:
    participant_id: str
    day: int
    message_id: str
    rating: FeedbackRating
    free_text: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "day": self.day,
            "message_id": self.message_id,
            "rating": self.rating.name,
            "free_text": self.free_text,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeedbackEvent":
        return cls(
            participant_id=d["participant_id"],
            day=int(d["day"]),
            message_id=d["message_id"],
            rating=FeedbackRating[d["rating"]],
            free_text=d.get("free_text"),
        )


@dataclass(frozen=True)
class DecisionRecord:
    """One logged policy decision: the unit of learning and evaluation.

    ``propensity`` is the probability the logging policy assigned to the
    chosen action; it must be strictly positive so the record can be
    reweighted later. ``reward`` stays ``None`` until the 24-hour outcome
    window has been fully observed.
    """

    participant_id: str
    day: int
    features: "FeatureVector"
    action: Action
    propensity: float
    message_id: str
    reward: Optional[float] = None
    feedback: Optional[FeedbackEvent] = None

    def __post_init__(self):
        if not 0.0 < self.propensity <= 1.0:
            raise ValueError(f"propensity must lie in (0, 1]: {self.propensity}")

    def with_reward(self, reward: float) -> "DecisionRecord":
        return replace(self, reward=reward)

    def to_dict(self) -> dict:
        return {
            "participant_id": self.participant_id,
            "day": self.day,
            "features": self.features.to_dict(),
            "action": self.action.to_dict(),
            "propensity": self.propensity,
            "message_id": self.message_id,
            "reward": self.reward,
            "feedback": self.feedback.to_dict() if self.feedback else None,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "DecisionRecord":
        from .features import FeatureVector

        return cls(
            participant_id=d["participant_id"],
            day=int(d["day"]),
            features=FeatureVector.from_dict(d["features"]),
            action=Action.from_dict(d["action"]),
            propensity=float(d["propensity"]),
            message_id=d["message_id"],
            reward=None if d.get("reward") is None else float(d["reward"]),
            feedback=(
                FeedbackEvent.from_dict(d["feedback"]) if d.get("feedback") else None
            ),
        )


# --- default synthetic message repository ---------------------------------

_MESSAGE_TEMPLATES: dict[NudgeTheme, tuple[str, ...]] = {
    NudgeTheme.ABILITY: (
        "A short walk counts. Ten easy minutes is a real workout.",
        "Start below your limit: one lap today, two tomorrow.",
        "You already walk every day; stretching it by five minutes is easy.",
        "Break it up: three 10-minute walks beat one you skip.",
        "Slow is fine. Consistency builds capacity faster than intensity.",
        "A comfortable pace still raises your heart rate. Go at yours.",
    ),
    NudgeTheme.PERCEIVED_BENEFIT: (
        "A brisk walk now can lift your mood for hours.",
        "Every extra thousand steps supports your heart.",
        "Walking after meals helps steady your energy through the day.",
        "Regular steps mean better sleep tonight.",
        "Small daily increases add up to measurable fitness in weeks.",
        "Moving more today is the cheapest health insurance there is.",
    ),
    NudgeTheme.PHYSICAL_OPPORTUNITY: (
        "Stairs nearby? Two flights now is a quick win.",
        "Park a little farther out and bank the extra steps.",
        "Take the long way to the mailbox or the shop.",
        "Indoor laps count when the weather turns.",
        "Walk the platform or the parking lot while you wait.",
        "A loop around the block fits between errands.",
    ),
    NudgeTheme.PLANNING: (
        "Pick a time for tomorrow's walk and put it in your calendar.",
        "Lay out your shoes tonight; the morning walk plans itself.",
        "Decide your route before lunch so the walk is automatic.",
        "Pair your walk with a podcast episode you queue up now.",
        "Set a step target for today and check it at dinner.",
        "Plan a backup indoor option in case the weather shifts.",
    ),
    NudgeTheme.PRIORITIZATION: (
        "Your walk is an appointment with yourself. Keep it.",
        "Ten minutes for you comes before the next email.",
        "Trade one scroll session for a stroll session.",
        "Meetings can wait ten minutes; your health compounds daily.",
        "Put steps first this afternoon; the rest of the list will keep.",
        "You make time for what matters. This matters.",
    ),
    NudgeTheme.SOCIAL_OPPORTUNITY: (
        "Invite a friend for a walk-and-talk today.",
        "Call someone while you walk; the time flies.",
        "A family stroll after dinner beats the couch.",
        "Ask a colleague to make the next meeting a walking one.",
        "Join a neighbor on their usual loop this evening.",
        "Share today's step count with a friend and compare notes.",
    ),
}


def default_repository(messages_per_theme: int = 30) -> MessageRepository:
    """Build the synthetic nudge bank (default 6 x 30 = 180 messages)."""
    buckets: dict[NudgeTheme, tuple[NudgeMessage, ...]] = {}
    for theme in NudgeTheme:
        templates = _MESSAGE_TEMPLATES[theme]
        slug = THEME_NAMES[theme].lower()
        msgs = []
        for k in range(messages_per_theme):
            text = templates[k % len(templates)]
            if k >= len(templates):
                text = f"{text} (v{k // len(templates) + 1})"
            msgs.append(NudgeMessage(id=f"{slug}-{k:03d}", theme=theme, text=text))
        buckets[theme] = tuple(msgs)
    return MessageRepository(buckets)
