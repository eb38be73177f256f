"""Synthetic cohort generation and the daily 4-arm trial loop.

The behavioral generator is explicitly synthetic: a participant's daily
steps are a personal baseline scaled by day-of-week and secular-drift
terms, lifted multiplicatively when a nudge lands on a theme the person
actually struggles with, plus Gaussian noise. Population-level knobs are
calibrated to the published cohort (mean baseline steps, female share,
withdrawal rate); individual-level dynamics are invented, documented, and
configurable.

A day tick runs: close matured reward windows -> retrain the bandit ->
pick and deliver each arm's action -> simulate steps -> apply attrition.
All randomness flows through per-(participant, day) counter streams, so
runs are reproducible bit-for-bit at any worker count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import optimize, stats

from . import rng as rngmod
from .baseline import (
    ELIGIBILITY_STEP_CAP,
    PRE_STUDY_DAYS,
    BaselinePattern,
    check_eligibility,
    compute_baseline,
    window_total,
)
from .domain import (
    ALL_ACTIONS,
    Action,
    Arm,
    CombSurvey,
    DecisionRecord,
    DeliveryTime,
    DeviceType,
    Education,
    FeedbackEvent,
    FeedbackRating,
    Location,
    MessageRepository,
    NudgeTheme,
    ParticipantProfile,
    Sex,
    StepRecord,
    TimePreference,
    day_of_week,
    default_repository,
    is_weekday,
    sample_message,
)
from .errors import ConfigError
from .features import (
    FeatureVector,
    WalkRegularity,
    WalkVolume,
    compute_reward,
    dynamic_block,
    static_block,
)
from .learner import (
    LearnerConfig,
    RewardModel,
    choose_epsilon,
    fit_reward_models,
    greedy_action,
)
from .policies import (
    FixedPolicyState,
    PolicyDecision,
    build_fixed_state,
    control_policy,
    egreedy_policy,
    fixed_policy,
    random_policy,
)

RECENT_WINDOW_DAYS = 7


@dataclass(frozen=True)
class PopulationConfig:
    """Cohort-level generative knobs, defaulted to the published cohort."""

    baseline_mean: float = 5618.2
    baseline_sd: float = 1502.5
    female_share: float = 0.863
    age_mean: float = 42.1
    age_sd: float = 9.0
    weight_mean: float = 90.8
    weight_sd: float = 25.5
    location_probs: tuple[float, float, float] = (0.153, 0.638, 0.209)
    device_probs: tuple[float, float] = (0.55, 0.45)
    education_probs: tuple[float, float, float] = (0.30, 0.45, 0.25)
    time_pref_probs: tuple[float, float, float] = (0.35, 0.35, 0.30)
    survey_noise_sd: float = 0.7
    morning_share_range: tuple[float, float] = (0.38, 0.52)

    def to_dict(self) -> dict:
        return {
            "baseline_mean": self.baseline_mean,
            "baseline_sd": self.baseline_sd,
            "female_share": self.female_share,
            "age_mean": self.age_mean,
            "age_sd": self.age_sd,
            "weight_mean": self.weight_mean,
            "weight_sd": self.weight_sd,
            "location_probs": list(self.location_probs),
            "device_probs": list(self.device_probs),
            "education_probs": list(self.education_probs),
            "time_pref_probs": list(self.time_pref_probs),
            "survey_noise_sd": self.survey_noise_sd,
            "morning_share_range": list(self.morning_share_range),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "PopulationConfig":
        kwargs = {}
        for name, default in cls().to_dict().items():
            if name in d:
                value = d[name]
                kwargs[name] = tuple(value) if isinstance(default, list) else value
        return cls(**kwargs)


@dataclass(frozen=True)
class ResponseConfig:
    """Behavioral response parameters shared by all simulated users.

    ``favorability`` follows the observed feedback ordering: Ability and
    PerceivedBenefit themes rate best, PhysicalOpportunity worst.
    """

    gain_scale: float = 0.15
    receptivity_morning: float = 0.85
    receptivity_afternoon: float = 1.15
    habituation_decay: float = 0.9
    dow_multipliers: tuple[float, ...] = (1.02, 1.02, 1.02, 1.02, 1.02, 0.95, 0.95)
    drift_per_day: float = -4.5
    noise_sd: float = 1200.0
    favorability: tuple[float, ...] = (0.85, 0.80, 0.35, 0.65, 0.65, 0.60)
    feedback_response_rate: float = 0.05

    def to_dict(self) -> dict:
        return {
            "gain_scale": self.gain_scale,
            "receptivity_morning": self.receptivity_morning,
            "receptivity_afternoon": self.receptivity_afternoon,
            "habituation_decay": self.habituation_decay,
            "dow_multipliers": list(self.dow_multipliers),
            "drift_per_day": self.drift_per_day,
            "noise_sd": self.noise_sd,
            "favorability": list(self.favorability),
            "feedback_response_rate": self.feedback_response_rate,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ResponseConfig":
        kwargs = {}
        for name, default in cls().to_dict().items():
            if name in d:
                value = d[name]
                kwargs[name] = tuple(value) if isinstance(default, list) else value
        return cls(**kwargs)


@dataclass(frozen=True)
class AttritionConfig:
    """Cumulative withdrawal targets over the nominal 60-day horizon.

    The intervention default makes the four-arm average come out at the
    published 11.3% overall: (0.135 + 3 * 0.10567) / 4.
    """

    control_cumulative: float = 0.135
    intervention_cumulative: float = 0.10567
    horizon_days: int = 60

    def daily_hazard(self, arm: Arm) -> float:
        cum = self.control_cumulative if arm == Arm.CONTROL else self.intervention_cumulative
        return 1.0 - (1.0 - cum) ** (1.0 / self.horizon_days)

    def to_dict(self) -> dict:
        return {
            "control_cumulative": self.control_cumulative,
            "intervention_cumulative": self.intervention_cumulative,
            "horizon_days": self.horizon_days,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AttritionConfig":
        return cls(**{k: d[k] for k in cls().to_dict() if k in d})


@dataclass(frozen=True)
class TrialConfig:
    n_per_arm: int = 500
    study_days: int = 60
    seed: int = 0
    messages_per_theme: int = 30
    population: PopulationConfig = field(default_factory=PopulationConfig)
    response: ResponseConfig = field(default_factory=ResponseConfig)
    attrition: AttritionConfig = field(default_factory=AttritionConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)

    def validate(self) -> None:
        if self.n_per_arm < 1:
            raise ConfigError(f"n_per_arm must be >= 1, got {self.n_per_arm}")
        if self.study_days < 1:
            raise ConfigError(f"study_days must be >= 1, got {self.study_days}")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        if self.messages_per_theme < 1:
            raise ConfigError("messages_per_theme must be >= 1")
        probs = (
            self.population.female_share,
            *self.population.location_probs,
            *self.population.device_probs,
            *self.population.education_probs,
            *self.population.time_pref_probs,
            self.attrition.control_cumulative,
            self.attrition.intervention_cumulative,
            self.response.feedback_response_rate,
            *self.response.favorability,
        )
        for p in probs:
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"probability out of [0, 1]: {p}")
        if not 0.0 < self.response.habituation_decay <= 1.0:
            raise ConfigError("habituation_decay must lie in (0, 1]")

    def to_dict(self) -> dict:
        return {
            "n_per_arm": self.n_per_arm,
            "study_days": self.study_days,
            "seed": self.seed,
            "messages_per_theme": self.messages_per_theme,
            "population": self.population.to_dict(),
            "response": self.response.to_dict(),
            "attrition": self.attrition.to_dict(),
            "learner": self.learner.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TrialConfig":
        try:
            cfg = cls(
                n_per_arm=int(d.get("n_per_arm", 500)),
                study_days=int(d.get("study_days", 60)),
                seed=int(d.get("seed", 0)),
                messages_per_theme=int(d.get("messages_per_theme", 30)),
                population=PopulationConfig.from_dict(d.get("population", {})),
                response=ResponseConfig.from_dict(d.get("response", {})),
                attrition=AttritionConfig.from_dict(d.get("attrition", {})),
                learner=LearnerConfig.from_dict(d.get("learner", {})),
            )
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"invalid trial config: {exc}") from exc
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class UserResponseModel:
    """Latent behavioral parameters of one simulated participant."""

    baseline_steps: float
    barriers: tuple[float, ...]
    gains: tuple[float, ...]
    receptivity: tuple[float, float]
    habituation_decay: float
    dow_multipliers: tuple[float, ...]
    drift_per_day: float
    noise_sd: float
    favorability: tuple[float, ...]
    morning_share: float

    def uplift(self, action: Action, recent_same_theme: int = 0) -> float:
        """Multiplicative step uplift a nudge produces for this user."""
        theme = int(action.theme)
        habituation = self.habituation_decay ** recent_same_theme
        return (
            self.gains[theme]
            * self.barriers[theme]
            * self.receptivity[int(action.time)]
            * habituation
        )

    def expected_steps(
        self,
        day: int,
        delivered: Optional[Action] = None,
        recent_same_theme: int = 0,
    ) -> float:
        """Mean steps for a study day before noise."""
        drift = 1.0 + self.drift_per_day * day / self.baseline_steps
        expected = self.baseline_steps * self.dow_multipliers[day_of_week(day)] * drift
        if delivered is not None:
            expected *= 1.0 + self.uplift(delivered, recent_same_theme)
        return max(expected, 0.0)


@dataclass
class TrialLog:
    """Everything a finished (or imported) trial run produced."""

    arms: dict[str, Arm]
    steps: list[StepRecord]
    decisions: list[DecisionRecord]
    feedback: list[FeedbackEvent]
    withdrawals: dict[str, int] = field(default_factory=dict)
    profiles: Optional[list[ParticipantProfile]] = None
    config: Optional[TrialConfig] = None
    epsilon_by_day: list[float] = field(default_factory=list)

    def participants_in(self, arm: Arm) -> list[str]:
        return [pid for pid, a in self.arms.items() if a == arm]


@lru_cache(maxsize=16)
def _truncated_lognormal_params(
    mean: float, sd: float, cap: float
) -> tuple[float, float]:
    """(mu, sigma) of a log-normal whose < cap truncation hits mean/sd."""

    def truncated_moments(mu: float, sigma: float) -> tuple[float, float]:
        z = (math.log(cap) - mu) / sigma
        p = stats.norm.cdf(z)
        m1 = math.exp(mu + sigma**2 / 2) * stats.norm.cdf(z - sigma) / p
        m2 = math.exp(2 * mu + 2 * sigma**2) * stats.norm.cdf(z - 2 * sigma) / p
        return m1, math.sqrt(max(m2 - m1**2, 1e-12))

    def equations(params):
        mu, sigma = params
        m1, s1 = truncated_moments(mu, abs(sigma))
        return (m1 - mean, s1 - sd)

    sigma0 = math.sqrt(math.log(1 + (sd / mean) ** 2))
    mu0 = math.log(mean) - sigma0**2 / 2
    (mu, sigma), info, ok, msg = optimize.fsolve(
        equations, (mu0, sigma0), full_output=True
    )
    if ok != 1:
        raise ConfigError(f"could not calibrate baseline distribution: {msg}")
    return float(mu), float(abs(sigma))


def _draw_survey(
    barriers: np.ndarray, noise_sd: float, rng: np.random.Generator
) -> CombSurvey:
    """Likert responses consistent with the latent barriers (plus noise)."""
    from .domain import DEFAULT_QUESTION_MAP

    responses = []
    for theme in DEFAULT_QUESTION_MAP:
        ideal = 5.0 - 4.0 * barriers[int(theme)]
        score = int(round(ideal + rng.normal(0.0, noise_sd)))
        responses.append(min(5, max(1, score)))
    return CombSurvey(responses=tuple(responses))


def _simulate_prestudy(
    pid: str, model: UserResponseModel, rng: np.random.Generator
) -> list[StepRecord]:
    records = []
    for day in range(-PRE_STUDY_DAYS, 0):
        mean = model.baseline_steps * model.dow_multipliers[day_of_week(day)]
        total = max(0.0, mean + rng.normal(0.0, model.noise_sd))
        records.append(_split_record(pid, day, total, model.morning_share))
    return records


def _split_record(pid: str, day: int, total: float, morning_share: float) -> StepRecord:
    total_int = int(round(total))
    morning = int(round(total_int * morning_share))
    return StepRecord(
        participant_id=pid,
        day=day,
        morning_steps=morning,
        evening_steps=total_int - morning,
    )


def generate_population(
    config: TrialConfig, rng: np.random.Generator
) -> list[tuple[ParticipantProfile, UserResponseModel, list[StepRecord]]]:
    """Draw the 4-arm cohort; every member passes eligibility screening.

    Participants failing the screen (30-day mean at or above the cap) are
    redrawn, so the returned cohort is the eligible population.
    """
    pop = config.population
    resp = config.response
    mu, sigma = _truncated_lognormal_params(
        pop.baseline_mean, pop.baseline_sd, ELIGIBILITY_STEP_CAP
    )
    arms = [arm for arm in Arm for _ in range(config.n_per_arm)]
    n_total = len(arms)
    width = max(4, len(str(n_total - 1)))

    cohort = []
    for i, arm in enumerate(arms):
        pid = f"p{i:0{width}d}"
        while True:
            latent = float(rng.lognormal(mu, sigma))
            if latent >= ELIGIBILITY_STEP_CAP:
                continue
            barriers = rng.uniform(0.0, 1.0, size=len(NudgeTheme))
            model = UserResponseModel(
                baseline_steps=latent,
                barriers=tuple(barriers),
                gains=(resp.gain_scale,) * len(NudgeTheme),
                receptivity=(resp.receptivity_morning, resp.receptivity_afternoon),
                habituation_decay=resp.habituation_decay,
                dow_multipliers=resp.dow_multipliers,
                drift_per_day=resp.drift_per_day,
                noise_sd=resp.noise_sd,
                favorability=resp.favorability,
                morning_share=float(rng.uniform(*pop.morning_share_range)),
            )
            pre_study = _simulate_prestudy(pid, model, rng)
            if not check_eligibility(pre_study):
                continue
            survey = _draw_survey(barriers, pop.survey_noise_sd, rng)
            profile = ParticipantProfile(
                id=pid,
                age=float(np.clip(rng.normal(pop.age_mean, pop.age_sd), 22.0, 60.0)),
                sex=Sex.FEMALE if rng.random() < pop.female_share else Sex.MALE,
                weight=float(max(35.0, rng.normal(pop.weight_mean, pop.weight_sd))),
                location=Location(int(rng.choice(3, p=pop.location_probs))),
                device_type=DeviceType(int(rng.choice(2, p=pop.device_probs))),
                education=Education(int(rng.choice(3, p=pop.education_probs))),
                comb_survey=survey,
                time_preference=TimePreference(int(rng.choice(3, p=pop.time_pref_probs))),
                arm=arm,
                enrollment_day=0,
                weather_code=int(rng.integers(3)),
            )
            cohort.append((profile, model, pre_study))
            break
    return cohort


def simulate_day(
    profile: ParticipantProfile,
    response_model: UserResponseModel,
    delivered: Optional[Action],
    day: int,
    rng: np.random.Generator,
    recent_same_theme: int = 0,
) -> StepRecord:
    """Draw one study day of steps, split into the two clock buckets."""
    if day < 1:
        raise ValueError(f"study day must be >= 1, got {day}")
    mean = response_model.expected_steps(day, delivered, recent_same_theme)
    total = max(0.0, mean + rng.normal(0.0, response_model.noise_sd))
    return _split_record(profile.id, day, total, response_model.morning_share)


def sample_feedback(
    theme: NudgeTheme,
    favorability: Sequence[float],
    rng: np.random.Generator,
    response_rate: float = 1.0,
    participant_id: str = "",
    day: int = 0,
    message_id: str = "",
) -> FeedbackEvent:
    """Thumbs up/down/none for a delivered nudge of the given theme."""
    fav = favorability[int(theme)]
    if not 0.0 <= fav <= 1.0:
        raise ValueError(f"favorability must lie in [0, 1]: {fav}")
    u = rng.random()
    if u < fav * response_rate:
        rating = FeedbackRating.UP
    elif u < response_rate:
        rating = FeedbackRating.DOWN
    else:
        rating = FeedbackRating.NONE
    return FeedbackEvent(
        participant_id=participant_id, day=day, message_id=message_id, rating=rating
    )


class _ParticipantState:
    """Mutable per-participant bookkeeping for the trial loop."""

    __slots__ = (
        "profile",
        "model",
        "baseline",
        "fixed_state",
        "steps_by_day",
        "decisions",
        "feedback",
        "static",
        "pre_mean",
        "pre_vol",
        "pre_reg",
        "pending",
        "recent_themes",
    )

    def __init__(self, profile, model, pre_study):
        self.profile = profile
        self.model = model
        self.baseline: BaselinePattern = compute_baseline(pre_study)
        self.fixed_state: Optional[FixedPolicyState] = None
        self.steps_by_day: dict[int, StepRecord] = {r.day: r for r in pre_study}
        self.decisions: list[DecisionRecord] = []
        self.feedback: list[FeedbackEvent] = []
        self.static = static_block(profile, pre_study)
        self.pre_mean = self.static[-4]
        self.pre_vol = WalkVolume(int(self.static[-2]))
        self.pre_reg = WalkRegularity(int(self.static[-1]))
        self.pending: list[int] = []  # indices into self.decisions
        self.recent_themes: list[tuple[int, int]] = []  # (day, theme)

    def features_for(self, day: int) -> FeatureVector:
        dyn = dynamic_block(
            self.steps_by_day,
            self.decisions,
            self.feedback,
            day,
            self.pre_mean,
            self.pre_vol,
            self.pre_reg,
        )
        return FeatureVector(values=self.static + dyn)

    def same_theme_count(self, day: int, theme: NudgeTheme) -> int:
        lo = day - RECENT_WINDOW_DAYS
        return sum(1 for d, t in self.recent_themes if lo <= d < day and t == int(theme))

    def close_windows(self, up_to_day: int) -> list[DecisionRecord]:
        """Fill rewards for decisions whose 24h window is fully observed."""
        closed = []
        remaining = []
        for idx in self.pending:
            rec = self.decisions[idx]
            if rec.day > up_to_day:
                remaining.append(idx)
                continue
            day_rec = self.steps_by_day.get(rec.day)
            next_rec = self.steps_by_day.get(rec.day + 1)
            if day_rec is None or next_rec is None:
                # withdrawal interrupted the window; reward stays unobserved
                continue
            observed = window_total(day_rec, next_rec, rec.action.time)
            reward = compute_reward(
                observed,
                self.baseline,
                rec.action.time == DeliveryTime.MORNING,
                is_weekday(rec.day),
            )
            updated = rec.with_reward(reward.value)
            self.decisions[idx] = updated
            closed.append(updated)
        self.pending = remaining
        return closed


def _cold_start_threshold(learner: LearnerConfig) -> int:
    return 12 * learner.min_samples_leaf


def run_trial(config: TrialConfig) -> TrialLog:
    """Run the full seeded trial and return its complete log."""
    config.validate()
    seed = config.seed
    repo = default_repository(config.messages_per_theme)
    cohort = generate_population(config, rngmod.stream(seed, rngmod.POPULATION))

    states = [_ParticipantState(profile, model, pre) for profile, model, pre in cohort]
    for st in states:
        if st.profile.arm == Arm.FIXED:
            st.fixed_state = build_fixed_state(
                st.profile.comb_survey, st.profile.time_preference
            )

    active = [True] * len(states)
    withdrawals: dict[str, int] = {}
    epsilon_by_day: list[float] = []
    reward_model: Optional[RewardModel] = None
    cold_start = _cold_start_threshold(config.learner)

    rl_closed: list[DecisionRecord] = []

    for day in range(1, config.study_days + 1):
        # (1) close reward windows that matured two days ago
        for i, st in enumerate(states):
            if st.pending:
                for rec in st.close_windows(day - 2):
                    if st.profile.arm == Arm.RL:
                        rl_closed.append(rec)

        # (2) midnight retrain on all closed RL-arm history
        rl_states = [
            (i, st)
            for i, st in enumerate(states)
            if active[i] and st.profile.arm == Arm.RL
        ]
        rl_features = {i: st.features_for(day) for i, st in rl_states}
        if len(rl_closed) >= cold_start:
            reward_model = fit_reward_models(rl_closed, config.learner)
            epsilon = _daily_epsilon(
                rl_closed, list(rl_features.values()), config.learner, seed, day
            )
        else:
            reward_model = None
            epsilon = 1.0
        epsilon_by_day.append(epsilon)

        # (3)-(5) decide, deliver, observe
        for i, st in enumerate(states):
            if not active[i]:
                continue
            arm = st.profile.arm
            rng_day = rngmod.stream(seed, rngmod.STEPS, i, day)
            delivered: Optional[Action] = None
            repeat_count = 0
            if arm != Arm.CONTROL:
                if arm == Arm.RANDOM:
                    decision = random_policy(rng_day)
                    feats = st.features_for(day)
                elif arm == Arm.FIXED:
                    decision = fixed_policy(st.fixed_state, rng_day)
                    feats = st.features_for(day)
                else:
                    feats = rl_features[i]
                    greedy = (
                        greedy_action(reward_model, feats)
                        if reward_model is not None
                        else ALL_ACTIONS[0]
                    )
                    decision = egreedy_policy(greedy, epsilon, rng_day)
                delivered = decision.action
                message = sample_message(repo, delivered.theme, rng_day)
                event = sample_feedback(
                    delivered.theme,
                    st.model.favorability,
                    rng_day,
                    response_rate=config.response.feedback_response_rate,
                    participant_id=st.profile.id,
                    day=day,
                    message_id=message.id,
                )
                got_feedback = event.rating != FeedbackRating.NONE
                if got_feedback:
                    st.feedback.append(event)
                repeat_count = st.same_theme_count(day, delivered.theme)
                record = DecisionRecord(
                    participant_id=st.profile.id,
                    day=day,
                    features=feats,
                    action=delivered,
                    propensity=decision.propensity,
                    message_id=message.id,
                    feedback=event if got_feedback else None,
                )
                st.decisions.append(record)
                st.pending.append(len(st.decisions) - 1)
                st.recent_themes.append((day, int(delivered.theme)))

            step = simulate_day(
                st.profile, st.model, delivered, day, rng_day, repeat_count
            )
            st.steps_by_day[day] = step

            # (6) attrition
            hazard = config.attrition.daily_hazard(arm)
            if rng_day.random() < hazard:
                active[i] = False
                withdrawals[st.profile.id] = day + 1

    # close whatever matured by the end of follow-up
    for st in states:
        if st.pending:
            st.close_windows(config.study_days - 1)

    steps: list[StepRecord] = []
    decisions: list[DecisionRecord] = []
    feedback: list[FeedbackEvent] = []
    for st in states:
        steps.extend(st.steps_by_day[d] for d in sorted(st.steps_by_day))
        decisions.extend(st.decisions)
        feedback.extend(st.feedback)

    return TrialLog(
        arms={st.profile.id: st.profile.arm for st in states},
        steps=steps,
        decisions=decisions,
        feedback=feedback,
        withdrawals=withdrawals,
        profiles=[st.profile for st in states],
        config=config,
        epsilon_by_day=epsilon_by_day,
    )


def _daily_epsilon(
    history: Sequence[DecisionRecord],
    probe: Sequence[FeatureVector],
    learner: LearnerConfig,
    seed: int,
    day: int,
) -> float:
    """Exploration rate from bootstrap-ensemble disagreement on today's states."""
    from .learner import bootstrap_reward_models, ensemble_disagreement

    if not probe:
        return learner.epsilon_low
    rng = rngmod.stream(seed, rngmod.LEARNER, day)
    models = bootstrap_reward_models(history, learner, rng)
    rate = ensemble_disagreement(models, probe)
    return choose_epsilon(rate, learner)
