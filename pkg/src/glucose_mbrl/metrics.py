"""
Episode logs, metrics reports and the aggregate tables.

Per-step CSV columns, in order:

    step, minute_of_day, true_bg, cgm, carbs_g, bolus_u, basal_u, cost, chosen_multiplier,
    termination, sequence_costs, mean_risk_margin

chosen_multiplier, sequence_costs (';'-joined, one per candidate) and mean_risk_margin are empty
for steps not decided by the planner; termination is set on the final row only. Time in range is
computed on CGM readings, the signal the agent sees.
"""

try:
    from enum import StrEnum
except ImportError:  # Python < 3.11
    from enum import Enum

    class StrEnum(str, Enum):
        __str__ = str.__str__
        __format__ = str.__format__
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, model_validator

from glucose_mbrl.mealgen import MealEvent
from glucose_mbrl.simcore import STEPS_PER_DAY

TARGET_LOW = 70.0
TARGET_HIGH = 180.0

CSV_COLUMNS = (
    "step",
    "minute_of_day",
    "true_bg",
    "cgm",
    "carbs_g",
    "bolus_u",
    "basal_u",
    "cost",
    "chosen_multiplier",
    "termination",
    "sequence_costs",
    "mean_risk_margin",
)

AGENT_LABELS: Dict[str, str] = {
    "bb": "BBController",
    "mbrl_with_uncertainty": "MBRL",
    "mbrl_without_uncertainty": "MBRL (no uncertainty)",
}


class Termination(StrEnum):
    COMPLETED = "completed"
    HYPO_TERMINATED = "hypo_terminated"
    HYPER_TERMINATED = "hyper_terminated"
    ABORTED = "aborted"


class StepRecord(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    step: int
    minute_of_day: int
    true_bg: float
    cgm: float
    carbs_g: float
    bolus_u: float
    basal_u: float
    cost: float
    chosen_multiplier: float | None = None
    sequence_costs: Tuple[float, ...] | None = None
    mean_risk_margin: float | None = None


class EpisodeLog(BaseModel):
    model_config = ConfigDict(extra="forbid")

    episode: int
    profile_id: str
    agent: str
    termination: Termination
    duration_steps: int = Field(ge=0, le=STEPS_PER_DAY)
    records: List[StepRecord]
    meals: List[MealEvent] = []
    planned: bool = False
    diagnostic: str | None = None

    @model_validator(mode="after")
    def _check_duration(self) -> "EpisodeLog":
        if self.duration_steps != len(self.records):
            raise ValueError(f"duration_steps {self.duration_steps} != {len(self.records)} records")
        return self

    @property
    def completed(self) -> bool:
        return self.termination == Termination.COMPLETED

    @property
    def cgm(self) -> np.ndarray:
        return np.array([r.cgm for r in self.records])

    def time_in_range(self) -> float | None:
        return time_in_range_pct(self.cgm) if self.records else None

    def to_frame(self) -> pd.DataFrame:
        rows = []
        for index, record in enumerate(self.records):
            row = record.model_dump()
            row["termination"] = self.termination.value if index == len(self.records) - 1 else None
            row["sequence_costs"] = None if record.sequence_costs is None else ";".join(f"{c:.6g}" for c in record.sequence_costs)
            rows.append(row)
        return pd.DataFrame(rows, columns=list(CSV_COLUMNS))

    def write_csv(self, path: Path | str) -> None:
        self.to_frame().to_csv(path, index=False)


def time_in_range_pct(values: Iterable[float], low: float = TARGET_LOW, high: float = TARGET_HIGH) -> float:
    """Percentage of readings within [low, high] mg/dl."""
    array = np.asarray(list(values), dtype=float)
    if array.size == 0:
        raise ValueError("time in range needs at least one reading")
    return float(100.0 * np.mean((array >= low) & (array <= high)))


def completion_rate_pct(logs: Sequence[EpisodeLog]) -> float:
    """Percentage of episodes that ran the full day without termination."""
    if not logs:
        raise ValueError("completion rate needs at least one episode")
    return 100.0 * sum(log.completed for log in logs) / len(logs)


def first_full_episode(logs: Sequence[EpisodeLog]) -> int | None:
    """Index of the first episode that completed the full day, or None."""
    return next((log.episode for log in logs if log.completed), None)


class MetricsReport(BaseModel):
    """
    Headline metrics of a training run.

    completion_rate_pct covers the last `evaluation_window` episodes; time_in_range_pct covers the
    last `tir_window` completed episodes and is None when no episode completed.
    """

    model_config = ConfigDict(extra="forbid")

    profile_id: str
    agent: str
    seed: int = 0
    episodes: int
    evaluation_window: int
    completion_rate_pct: float = Field(ge=0, le=100)
    time_in_range_pct: float | None = Field(default=None, ge=0, le=100)
    bootstrap_episodes: int = 0
    first_full_episode: int | None = None
    durations: List[int] = []
    tir_per_episode: List[float | None] = []


def summarize(
    logs: Sequence[EpisodeLog],
    profile_id: str,
    agent: str,
    seed: int = 0,
    evaluation_window: int = 30,
    tir_window: int = 10,
    bootstrap_episodes: int = 0,
) -> MetricsReport:
    """
    Reduce a run's episode logs to a MetricsReport.

    Raises:
        ValueError: If logs is empty.
    """
    if not logs:
        raise ValueError("cannot summarize an empty run")
    window = list(logs[-evaluation_window:])
    completed = [log for log in logs if log.completed][-tir_window:]
    tir = None
    if completed:
        tir = time_in_range_pct(np.concatenate([log.cgm for log in completed]))
    return MetricsReport(
        profile_id=profile_id,
        agent=agent,
        seed=seed,
        episodes=len(logs),
        evaluation_window=len(window),
        completion_rate_pct=completion_rate_pct(window),
        time_in_range_pct=tir,
        bootstrap_episodes=bootstrap_episodes,
        first_full_episode=first_full_episode(logs),
        durations=[log.duration_steps for log in logs],
        tir_per_episode=[log.time_in_range() for log in logs],
    )


def comparison_table(reports: Iterable[MetricsReport], metric: str = "completion_rate_pct") -> str:
    """
    Aligned text table with one row per profile and one column per agent.

    Missing values (no completed episode for time in range) print as 'n/a'.
    """
    rows = [
        {"profile": report.profile_id, "agent": AGENT_LABELS.get(report.agent, report.agent), "value": _as_float(getattr(report, metric))}
        for report in reports
    ]
    if not rows:
        raise ValueError("no reports to tabulate")
    frame = pd.DataFrame(rows)
    table = frame.pivot_table(index="profile", columns="agent", values="value", aggfunc="mean", dropna=False)
    order = [label for label in AGENT_LABELS.values() if label in table.columns]
    order += [c for c in table.columns if c not in order]
    table = table[order]
    table.columns.name = None
    return table.to_string(float_format=lambda v: f"{v:.1f}", na_rep="n/a")


def _as_float(value: float | None) -> float:
    return float("nan") if value is None else float(value)
