"""Adaptive physical-activity nudge engine.

A deterministic-by-seed implementation of a four-arm nudging trial:
domain types and message bank, eligibility and baseline computation,
the four arm policies, the proximal reward and state pipeline, an
inverse-propensity-weighted boosted-tree bandit learner, a synthetic
cohort simulator, and the longitudinal verification statistics.
"""

from .baseline import (
    BaselinePattern,
    ComplianceReport,
    Period,
    check_eligibility,
    compliance,
    compute_baseline,
    window_total,
)
from .domain import (
    ALL_ACTIONS,
    N_ACTIONS,
    Action,
    Arm,
    CombSurvey,
    DecisionRecord,
    DeliveryTime,
    FeedbackEvent,
    FeedbackRating,
    MessageRepository,
    NudgeMessage,
    NudgeTheme,
    ParticipantProfile,
    StepRecord,
    TimePreference,
    action_from_index,
    action_index,
    default_repository,
    sample_message,
)
from .features import (
    FEATURE_NAMES,
    FeatureVector,
    Reward,
    WalkRegularity,
    WalkVolume,
    classify_walk_pattern,
    compute_reward,
    extract_features,
    recent_slope,
)
from .gbrt import GbrtEnsemble, quantile_bins
from .learner import (
    LearnerConfig,
    RewardModel,
    bootstrap_reward_models,
    choose_epsilon,
    ensemble_disagreement,
    feature_importance,
    fit_gbrt,
    fit_reward_models,
    greedy_action,
    is_value_estimate,
)
from .policies import (
    FixedPolicyState,
    PolicyDecision,
    build_fixed_state,
    control_policy,
    egreedy_policy,
    egreedy_propensities,
    fixed_policy,
    random_policy,
)
from .simulate import (
    AttritionConfig,
    PopulationConfig,
    ResponseConfig,
    TrialConfig,
    TrialLog,
    UserResponseModel,
    generate_population,
    run_trial,
    sample_feedback,
    simulate_day,
)
from .stats import (
    GeeResult,
    PeriodSummary,
    RegressionResult,
    bh_adjust,
    change_score_regression,
    did_regression,
    gee_exchangeable,
    gee_fit,
    summarize_periods,
)

__version__ = "0.1.0"
