"""
Meal event generator.

A day has three meals and three snacks. Each is taken with its own probability, at a time drawn
from a truncated normal, with a normally distributed carbohydrate amount. Episodes start at
06:00, so clock hour h maps to step round((h - 6) * 12); events before 06:00 land on step 0.
"""

import math
from typing import Dict, Iterable, List

import numpy as np
from pydantic import AliasChoices, BaseModel, ConfigDict, Field, model_validator

from glucose_mbrl.simcore import STEP_MINUTES, STEPS_PER_DAY

EPISODE_START_HOUR = 6.0
MIN_CARBS = 1.0
MAX_REJECTION_DRAWS = 100_000


class MealSpec(BaseModel):
    """
    One row of the meal generator table. Times are clock hours, carbs grams.

    Rows also load under the table's column headings ("Meal type", "Prob.", "lower", "upper",
    "mean", "std.", "carbs mean", "carbs std.").
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field(validation_alias=AliasChoices("name", "Meal type"))
    probability: float = Field(ge=0, le=1, validation_alias=AliasChoices("probability", "Prob."))
    time_lower: float = Field(validation_alias=AliasChoices("time_lower", "lower"))
    time_upper: float = Field(validation_alias=AliasChoices("time_upper", "upper"))
    time_mean: float = Field(validation_alias=AliasChoices("time_mean", "mean"))
    time_std: float = Field(gt=0, validation_alias=AliasChoices("time_std", "std."))
    carb_mean: float = Field(gt=0, validation_alias=AliasChoices("carb_mean", "carbs mean"))
    carb_std: float = Field(ge=0, validation_alias=AliasChoices("carb_std", "carbs std."))

    @model_validator(mode="after")
    def _check_bounds(self) -> "MealSpec":
        if not self.time_lower < self.time_upper:
            raise ValueError(f"{self.name}: time_lower must be below time_upper")
        return self


class MealEvent(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    time_step: int = Field(ge=0, lt=STEPS_PER_DAY)
    carbs: float = Field(gt=0)


def default_specs() -> List[MealSpec]:
    """The six meal/snack rows used for every experiment unless overridden."""
    rows = [
        ("breakfast", 0.95, 5, 9, 7, 1, 45, 10),
        ("snack1", 0.3, 9, 10, 9.5, 0.5, 10, 5),
        ("lunch", 0.95, 10, 14, 12, 1, 70, 10),
        ("snack2", 0.3, 14, 16, 15, 0.5, 10, 5),
        ("dinner", 0.95, 16, 20, 18, 1, 80, 10),
        ("snack3", 0.3, 20, 23, 21.5, 0.5, 10, 5),
    ]
    keys = ("name", "probability", "time_lower", "time_upper", "time_mean", "time_std", "carb_mean", "carb_std")
    return [MealSpec(**dict(zip(keys, row))) for row in rows]


def sample_truncnorm(mean: float, std: float, lower: float, upper: float, rng: np.random.Generator) -> float:
    """
    Draw from a normal truncated to [lower, upper] by rejection.

    Raises:
        ValueError: If lower >= upper or std <= 0, or if the bounds sit so far in the tail that
            no draw lands inside them.
    """
    if not lower < upper:
        raise ValueError(f"lower ({lower}) must be below upper ({upper})")
    if not std > 0:
        raise ValueError(f"std must be positive, got {std}")
    for _ in range(MAX_REJECTION_DRAWS):
        value = rng.normal(mean, std)
        if lower <= value <= upper:
            return float(value)
    raise ValueError(f"truncated normal N({mean}, {std}) has no mass in [{lower}, {upper}]")


def hour_to_step(hour: float) -> int:
    """Nearest 5-minute step of a clock hour, counted from the 06:00 episode start."""
    steps_per_hour = 60.0 / STEP_MINUTES
    step = math.floor((hour - EPISODE_START_HOUR) * steps_per_hour + 0.5)
    return min(max(step, 0), STEPS_PER_DAY - 1)


def sample_day(specs: Iterable[MealSpec], rng: np.random.Generator) -> List[MealEvent]:
    """
    Sample one day of meal events.

    Each spec is included independently with its probability. Carbs below 1 g are raised to 1 g.
    Events are sorted by step; events on the same step are merged by summing their carbs.

    Example:
        events = sample_day(default_specs(), np.random.default_rng(0))
    """
    carbs_by_step: Dict[int, float] = {}
    for spec in specs:
        if not rng.random() < spec.probability:
            continue
        hour = sample_truncnorm(spec.time_mean, spec.time_std, spec.time_lower, spec.time_upper, rng)
        carbs = max(MIN_CARBS, float(rng.normal(spec.carb_mean, spec.carb_std)))
        step = hour_to_step(hour)
        carbs_by_step[step] = carbs_by_step.get(step, 0.0) + carbs
    return [MealEvent(time_step=step, carbs=carbs) for step, carbs in sorted(carbs_by_step.items())]


def carbs_per_step(events: Iterable[MealEvent], steps: int = STEPS_PER_DAY) -> np.ndarray:
    """Dense per-step carbohydrate schedule of a day."""
    schedule = np.zeros(steps)
    for event in events:
        schedule[event.time_step] += event.carbs
    return schedule
