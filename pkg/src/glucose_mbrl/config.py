"""
Experiment configuration.

An experiment config is a YAML mapping whose keys are the fields of ExperimentConfig:

    profile_id: adult#001
    agent: mbrl_with_uncertainty
    episodes: 200
    seed: 7
    cgm: {noise_std: 5.0, noise_correlation: 0.7}
    esn: {reservoir_size: 200, leak_rate: 0.3}
    output_dir: runs/adult001

Unknown keys are rejected at every level.
"""

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from pathlib import Path
from typing import Any, List

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from glucose_mbrl.errors import ConfigError
from glucose_mbrl.esn import EsnHyper
from glucose_mbrl.mealgen import MealSpec, default_specs
from glucose_mbrl.planner import DEFAULT_HORIZON
from glucose_mbrl.simcore import CgmConfig, format_profile_id, parse_profile_id

MBRL_EPISODES = 200
BB_EPISODES = 30


class AgentKind(StrEnum):
    MBRL_WITH_UNCERTAINTY = "mbrl_with_uncertainty"
    MBRL_WITHOUT_UNCERTAINTY = "mbrl_without_uncertainty"
    BB = "bb"

    @property
    def is_mbrl(self) -> bool:
        return self is not AgentKind.BB


class ExperimentConfig(BaseModel):
    """
    One training run: a profile, an agent and the episode schedule.

    Attributes:
        profile_id: Virtual person, e.g. 'adult#001'.
        agent: Which controller to run.
        episodes: Episode count; None picks 200 for MBRL agents and 30 for BB.
        seed: Master seed; every random stream of the run derives from it.
        cgm: Sensor noise.
        meals: Meal table replacing the default one.
        esn: Reservoir hyperparameters.
        horizon: Planning horizon in steps.
        output_dir: Where CSV logs and metrics.json are written; nothing is written when None.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    profile_id: str
    agent: AgentKind = AgentKind.MBRL_WITH_UNCERTAINTY
    episodes: int | None = Field(default=None, ge=1)
    seed: int = 0
    cgm: CgmConfig = CgmConfig()
    meals: List[MealSpec] | None = None
    esn: EsnHyper = EsnHyper()
    horizon: int = Field(default=DEFAULT_HORIZON, ge=1)
    output_dir: Path | None = None
    ensemble_size: int = Field(default=5, ge=1)
    bootstrap_episodes: int = Field(default=5, ge=0)
    evaluation_window: int = Field(default=30, ge=1)
    tir_window: int = Field(default=10, ge=1)

    @field_validator("profile_id")
    @classmethod
    def _normalize_profile_id(cls, value: str) -> str:
        return format_profile_id(*parse_profile_id(value))

    @property
    def resolved_episodes(self) -> int:
        if self.episodes is not None:
            return self.episodes
        return MBRL_EPISODES if self.agent.is_mbrl else BB_EPISODES

    def meal_specs(self) -> List[MealSpec]:
        return list(self.meals) if self.meals is not None else default_specs()


def parse_config(document: Any, source: str = "<config>") -> ExperimentConfig:
    """
    Validate an already parsed config mapping.

    Raises:
        ConfigError: Naming the dotted path of every invalid field.
    """
    if not isinstance(document, dict):
        raise ConfigError(f"{source}: expected a mapping of config fields, got {type(document).__name__}")
    try:
        return ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(str(p) for p in error['loc']) or '<root>'}: {error['msg']}" for error in exc.errors())
        raise ConfigError(f"{source}: {problems}") from exc


def load_config(path: Path | str) -> ExperimentConfig:
    """
    Read and validate a YAML experiment config.

    Raises:
        ConfigError: If the file is missing, is not valid YAML (with the line number), or fails validation.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror or exc}") from exc
    try:
        document = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        line = exc.problem_mark.line + 1 if exc.problem_mark is not None else "?"
        raise ConfigError(f"{path}:{line}: invalid YAML: {exc.problem}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    return parse_config(document, str(path))
