import numpy as np
import pytest

from pearl.baseline import PRE_STUDY_DAYS
from pearl.domain import (
    Arm,
    CombSurvey,
    DeviceType,
    Education,
    Location,
    ParticipantProfile,
    Sex,
    StepRecord,
    TimePreference,
)


def make_survey(responses=None):
    if responses is None:
        responses = (3,) * 20
    return CombSurvey(responses=tuple(responses))


def make_profile(pid="p0", arm=Arm.RL, survey=None, time_pref=TimePreference.NONE,
                 age=40.0, weight=80.0):
    return ParticipantProfile(
        id=pid,
        age=age,
        sex=Sex.FEMALE,
        weight=weight,
        location=Location.SUBURBAN,
        device_type=DeviceType.TRACKER_BAND,
        education=Education.COLLEGE,
        comb_survey=survey or make_survey(),
        time_preference=time_pref,
        arm=arm,
    )


def steps(pid, day, morning, evening):
    return StepRecord(
        participant_id=pid, day=day, morning_steps=morning, evening_steps=evening
    )


def constant_prestudy(pid="p0", total=3000, days=PRE_STUDY_DAYS):
    """Pre-study history with the same total every day, evenly split."""
    half = total // 2
    return [steps(pid, d, half, total - half) for d in range(-days, 0)]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
