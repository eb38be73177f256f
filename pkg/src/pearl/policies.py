"""The four arm policies.

Every decision returns the probability the policy assigned to the chosen
action, which is what downstream importance-sampling needs; the control
arm returns no action with propensity 1.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import (
    ALL_ACTIONS,
    N_ACTIONS,
    Action,
    CombSurvey,
    DeliveryTime,
    NudgeTheme,
    TimePreference,
    action_from_index,
    action_index,
)

LIKERT_MAX = 5.0
PREFERRED_TIME_PROB = 0.7
_PROB_TOL = 1e-12


@dataclass(frozen=True)
class PolicyDecision:
    action: Optional[Action]
    propensity: float

    def __post_init__(self):
        if not 0.0 < self.propensity <= 1.0 + _PROB_TOL:
            raise ValueError(f"propensity must lie in (0, 1]: {self.propensity}")


@dataclass(frozen=True)
class FixedPolicyState:
    """Per-participant sampling weights, frozen at onboarding."""

    theme_probs: tuple[float, ...]
    time_probs: tuple[float, float]

    def __post_init__(self):
        if len(self.theme_probs) != len(NudgeTheme):
            raise ValueError("theme_probs must have 6 entries")
        for p in (*self.theme_probs, *self.time_probs):
            if p < 0:
                raise ValueError("probabilities must be non-negative")
        if abs(sum(self.theme_probs) - 1.0) > _PROB_TOL:
            raise ValueError("theme_probs must sum to 1")
        if abs(sum(self.time_probs) - 1.0) > _PROB_TOL:
            raise ValueError("time_probs must sum to 1")


def control_policy() -> PolicyDecision:
    """No nudge, ever."""
    return PolicyDecision(action=None, propensity=1.0)


def random_policy(rng: np.random.Generator) -> PolicyDecision:
    """Uniform over all 12 actions."""
    idx = int(rng.integers(N_ACTIONS))
    return PolicyDecision(action=action_from_index(idx), propensity=1.0 / N_ACTIONS)


def build_fixed_state(
    survey: CombSurvey, time_preference: TimePreference
) -> FixedPolicyState:
    """Turn survey barrier scores and a stated time preference into weights.

    A theme's barrier is 5 minus its mean Likert score, so themes the
    participant struggles with are nudged more often. All-zero barriers
    (a perfect survey) fall back to uniform.
    """
    barriers = [LIKERT_MAX - survey.sub_theme_mean(t) for t in NudgeTheme]
    total = sum(barriers)
    if total <= 0:
        theme_probs = tuple(1.0 / len(NudgeTheme) for _ in NudgeTheme)
    else:
        theme_probs = tuple(b / total for b in barriers)

    p = PREFERRED_TIME_PROB
    if time_preference == TimePreference.MORNING:
        time_probs = (p, 1.0 - p)
    elif time_preference == TimePreference.AFTERNOON:
        time_probs = (1.0 - p, p)
    else:
        time_probs = (0.5, 0.5)
    return FixedPolicyState(theme_probs=theme_probs, time_probs=time_probs)


def fixed_policy(state: FixedPolicyState, rng: np.random.Generator) -> PolicyDecision:
    """Sample theme and time independently from the frozen weights."""
    theme_idx = int(rng.choice(len(NudgeTheme), p=state.theme_probs))
    time_idx = int(rng.choice(2, p=state.time_probs))
    action = Action(NudgeTheme(theme_idx), DeliveryTime(time_idx))
    propensity = state.theme_probs[theme_idx] * state.time_probs[time_idx]
    return PolicyDecision(action=action, propensity=propensity)


def egreedy_propensities(greedy: Action, epsilon: float) -> np.ndarray:
    """Action probabilities of the epsilon-greedy policy, indexed 0..11."""
    probs = np.full(N_ACTIONS, epsilon / N_ACTIONS)
    probs[action_index(greedy)] += 1.0 - epsilon
    return probs


def egreedy_policy(
    greedy: Action, epsilon: float, rng: np.random.Generator
) -> PolicyDecision:
    """Play ``greedy`` with probability 1 - epsilon, else uniform over all 12.

    The uniform draw includes the greedy action, so every action keeps a
    strictly positive propensity whenever epsilon > 0.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1]: {epsilon}")
    if rng.random() < epsilon:
        action = action_from_index(int(rng.integers(N_ACTIONS)))
    else:
        action = greedy
    propensity = epsilon / N_ACTIONS
    if action == greedy:
        propensity += 1.0 - epsilon
    return PolicyDecision(action=action, propensity=propensity)
