import numpy as np
import pytest

from glucose_mbrl.baselines import BasalBolusAgent, bb_params_for
from glucose_mbrl.config import ExperimentConfig
from glucose_mbrl.esn import EsnHyper
from glucose_mbrl.simcore import DEFAULT_PROFILE, profile_by_id


class ConstantBolusAgent:
    """Test stub: the same bolus every step."""

    name = "constant"

    def __init__(self, bolus: float):
        self.bolus = bolus
        self.last_plan = None
        self.episodes = 0

    def start_episode(self) -> None:
        pass

    def observe(self, cgm: float, carbs: float, insulin_prev: float) -> float:
        return self.bolus

    def end_episode(self, log) -> None:
        self.episodes += 1


@pytest.fixture
def adult():
    return profile_by_id(DEFAULT_PROFILE)


@pytest.fixture
def bb_agent(adult):
    return BasalBolusAgent(bb_params_for(adult))


@pytest.fixture
def bb_config():
    return ExperimentConfig(profile_id=DEFAULT_PROFILE, agent="bb")


@pytest.fixture
def small_hyper():
    return EsnHyper(reservoir_size=30, connectivity=0.3, washout=0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def constant_agent():
    return ConstantBolusAgent
